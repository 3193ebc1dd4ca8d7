#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "fgssl/config.hpp"
#include "fgssl/errors.hpp"
#include "fgssl/runtime.hpp"
#include "fgssl/train_engine.hpp"

using namespace fgssl;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "fgssl_runtime";

// Small enough that every command finishes in a few seconds.
const char* kTinyIni = R"(
[run]
seed = 3
checkpoint_every = 1
threads = 1
[data]
image_size = 64
synth_classes = 2
synth_per_class = 4
synth_test_per_class = 2
[model]
channels = 8,8,16,16
blocks = 1,1,1,1
head_width = 8
projector_hidden = 16
projector_dim = 16
[train]
batch_size = 4
epochs = 2
pool_size = 8
)";

int run_cli(const std::string& args, const std::string& log = "cli.log") {
  const std::string cmd = std::string(FGSSL_CLI) + " " + args + " > " + (kRoot / log).string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string cfg() { return "-c " + (kRoot / "tiny.ini").string(); }

std::string out(const std::string& name) { return " --run.output_dir " + (kRoot / name).string(); }

struct Setup {
  Setup() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    std::ofstream(kRoot / "tiny.ini") << kTinyIni;
    REQUIRE(run_cli("synth-data " + cfg() + out("data")) == 0);
  }
};

const Setup& setup() {
  static const Setup s;
  return s;
}

std::string data_args() {
  return " --data.manifest " + (kRoot / "data/train/manifest.csv").string() + " --data.test_manifest " +
         (kRoot / "data/test/manifest.csv").string();
}

}  // namespace

TEST_CASE("synth-data writes train and test sets") {
  setup();
  CHECK(fs::exists(kRoot / "data/train/manifest.csv"));
  CHECK(fs::exists(kRoot / "data/test/motifs.json"));
}

TEST_CASE("pretrain, finetune, evaluate and gradcam end to end") {
  setup();
  REQUIRE(run_cli("pretrain " + cfg() + out("pre") + data_args()) == 0);
  CHECK(fs::exists(kRoot / "pre/checkpoints/final.pt"));
  CHECK(fs::exists(kRoot / "pre/checkpoints/epoch_0001.pt"));
  CHECK(fs::exists(kRoot / "pre/config.ini"));
  CHECK(fs::exists(kRoot / "pre/code_version"));
  CHECK_FALSE(fs::exists(kRoot / "pre/.lock"));

  const std::string init = " --train.init_checkpoint " + (kRoot / "pre/checkpoints/final.pt").string();
  REQUIRE(run_cli("finetune " + cfg() + out("ft") + data_args() + init) == 0);
  CHECK(slurp(kRoot / "ft/eval_report.json").find("\"accuracy\"") != std::string::npos);

  const auto ckpt = (kRoot / "ft/checkpoints/final.pt").string();
  CHECK(run_cli("evaluate " + cfg() + " --checkpoint " + ckpt + " --manifest " +
                (kRoot / "data/test/manifest.csv").string() + " --report " + (kRoot / "report.json").string(),
                "eval.log") == 0);
  CHECK(slurp(kRoot / "eval.log").find("macro_f1") != std::string::npos);
  CHECK(fs::exists(kRoot / "report.json"));

  // A pretraining checkpoint has no class heads to evaluate.
  CHECK(run_cli("evaluate " + cfg() + " --checkpoint " + (kRoot / "pre/checkpoints/final.pt").string() +
                " --manifest " + (kRoot / "data/test/manifest.csv").string()) == 2);

  const auto imgs = data::load_manifest(kRoot / "data/test/manifest.csv");
  const std::string two = (imgs.root / imgs.records[0].path).string() + " " + (imgs.root / imgs.records[1].path).string();
  REQUIRE(run_cli("gradcam " + cfg() + out("cam") + " --checkpoint " + ckpt + " " + two) == 0);
  int pngs = 0;
  for (const auto& e : fs::directory_iterator(kRoot / "cam")) pngs += e.path().extension() == ".png";
  CHECK(pngs == 8);  // 2 images x 4 backbone stages

  REQUIRE(run_cli("gradcam " + cfg() + out("cam2") + " --checkpoint " + ckpt + " --layers 2,4 --baseline " + ckpt +
                  " " + two) == 0);
  CHECK(fs::exists(kRoot / "cam2" / (fs::path(imgs.records[0].path).stem().string() + "_compare.png")));
  CHECK(fs::exists(kRoot / "cam2" / (fs::path(imgs.records[1].path).stem().string() + "_layer4.png")));
  CHECK_FALSE(fs::exists(kRoot / "cam2" / (fs::path(imgs.records[1].path).stem().string() + "_layer1.png")));

  CHECK(run_cli("gradcam " + cfg() + out("cam3") + " --checkpoint " + ckpt + " /nonexistent.png") == 1);
}

TEST_CASE("resuming from a mid-run checkpoint reproduces the uninterrupted run") {
  setup();
  REQUIRE(run_cli("pretrain " + cfg() + out("full") + data_args()) == 0);
  REQUIRE(run_cli("pretrain " + cfg() + out("resumed") + data_args() + " --train.resume " +
                  (kRoot / "full/checkpoints/epoch_0001.pt").string()) == 0);
  const auto a = train::read_checkpoint_meta(kRoot / "full/checkpoints/final.pt");
  const auto b = train::read_checkpoint_meta(kRoot / "resumed/checkpoints/final.pt");
  CHECK(a.global_step == b.global_step);
  CHECK(a.config_hash == b.config_hash);

  auto config = config::resolve(kRoot / "tiny.ini", {}, false);
  auto na = runtime::make_network(config, a.label_sizes);
  auto nb = runtime::make_network(config, b.label_sizes);
  train::load_network_weights(na, kRoot / "full/checkpoints/final.pt");
  train::load_network_weights(nb, kRoot / "resumed/checkpoints/final.pt");
  CHECK(model::parameter_checksum(*na) == model::parameter_checksum(*nb));

  // Changing a training setting makes the checkpoint incompatible...
  CHECK(run_cli("pretrain " + cfg() + out("mismatch") + data_args() + " --train.lr_init 0.5 --train.resume " +
                (kRoot / "full/checkpoints/epoch_0001.pt").string()) == 2);
  // ...unless explicitly allowed.
  CHECK(run_cli("pretrain " + cfg() + out("mismatch_ok") + data_args() +
                " --train.lr_init 0.5 --train.allow_config_mismatch true --train.resume " +
                (kRoot / "full/checkpoints/epoch_0001.pt").string()) == 0);
}

TEST_CASE("exit codes for usage and configuration errors") {
  setup();
  CHECK(run_cli("") == 2);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("pretrain " + cfg() + out("x") + " --train.batch_size") == 2);
  CHECK(run_cli("pretrain " + cfg() + out("x") + " --set train.unknown=1") == 2);
  CHECK(run_cli("pretrain " + cfg() + out("x") + " --set train.batch_size=lots") == 2);
  CHECK(run_cli("pretrain " + cfg() + out("x")) == 2);  // no manifest

  std::ofstream(kRoot / "broken.ini") << "[train]\nbatch_size 4\n";
  CHECK(run_cli("pretrain -c " + (kRoot / "broken.ini").string(), "broken.log") == 2);
  CHECK(slurp(kRoot / "broken.log").find("line 2") != std::string::npos);

  CHECK(run_cli("profiles", "profiles.log") == 0);
  CHECK(slurp(kRoot / "profiles.log").find("synthetic-full") != std::string::npos);
  CHECK(run_cli("profiles nope") == 2);
}

TEST_CASE("a locked output directory is refused") {
  setup();
  fs::create_directories(kRoot / "locked");
  std::ofstream(kRoot / "locked/.lock") << "1\n";
  CHECK(run_cli("pretrain " + cfg() + out("locked") + data_args(), "locked.log") == 1);
  CHECK(slurp(kRoot / "locked.log").find("in use") != std::string::npos);

  runtime::RunDirectory first(kRoot / "owned");
  CHECK_THROWS_AS(runtime::RunDirectory(kRoot / "owned"), RunLockedError);
}

TEST_CASE("split writes a stratified pair of manifests") {
  setup();
  REQUIRE(run_cli("split " + cfg() + out("split") + " --data.manifest " +
                  (kRoot / "data/train/manifest.csv").string() + " --data.split_fraction 0.5") == 0);
  const auto tr = data::load_manifest(kRoot / "split/train.csv");
  const auto te = data::load_manifest(kRoot / "split/test.csv");
  CHECK(tr.class_counts() == std::vector<int>{2, 2});
  CHECK(te.class_counts() == std::vector<int>{2, 2});
}
