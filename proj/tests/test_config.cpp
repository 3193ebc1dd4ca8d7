#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "fgssl/config.hpp"
#include "fgssl/errors.hpp"

using namespace fgssl;
using namespace fgssl::config;
namespace fs = std::filesystem;

namespace {

fs::path write_ini(const std::string& name, const std::string& text) {
  const auto p = fs::temp_directory_path() / ("fgssl_cfg_" + name + ".ini");
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("defaults validate and serialize through INI") {
  ExperimentConfig c;
  CHECK_NOTHROW(c.validate());
  const auto text = to_ini(c);
  ExperimentConfig back;
  apply_values(back, parse_ini(text));
  CHECK(to_key_values(back) == to_key_values(c));
  CHECK(config_hash(back) == config_hash(c));
  CHECK(to_key_values(c).size() == keys().size());
}

TEST_CASE("parse_ini errors") {
  try {
    parse_ini("[train]\nbatch_size = 4\nthis line is wrong\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(parse_ini("[train]\nbogus = 1\n"), ConfigError);
  ExperimentConfig c;
  CHECK_THROWS_AS(apply_values(c, {{"train.batch_size", "many"}}), ConfigError);
}

TEST_CASE("layer precedence: profile < file < env < overrides") {
  const auto file = write_ini("layers", "[run]\nprofile = synthetic-small\n[train]\nbatch_size = 8\nepochs = 3\n");
  auto c = resolve(file, {}, false);
  CHECK(c.profile == "synthetic-small");
  CHECK(c.train.batch_size == 8);
  CHECK(c.train.epochs == 3);
  CHECK(c.train.mode == train::Mode::Finetune);  // from the profile

  ::setenv("FGSSL_TRAIN_EPOCHS", "5", 1);
  c = resolve(file, {}, true);
  CHECK(c.train.epochs == 5);
  c = resolve(file, {{"train.epochs", "6"}}, true);
  CHECK(c.train.epochs == 6);
  ::unsetenv("FGSSL_TRAIN_EPOCHS");
  CHECK_THROWS_AS(resolve(file, {{"train.nonsense", "1"}}, false), ConfigError);
  CHECK(env_name("train.batch_size") == "FGSSL_TRAIN_BATCH_SIZE");
}

TEST_CASE("validation catches cross-field problems") {
  ExperimentConfig c;
  c.image_size = 60;  // not divisible by 8
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.train.granularity_schedule = {4, 2, 1};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.backbone = "alexnet";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.offdiag_source = "jigsaw_pairs";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.augment.flip.probability = 2.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("hash ignores where a run lives but not what it computes") {
  ExperimentConfig a;
  ExperimentConfig b = a;
  b.output_dir = "elsewhere";
  b.threads = 3;
  CHECK(config_hash(a) == config_hash(b));
  b.train.lr_init = 0.5;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(config_hash(a).size() == 16);
}

TEST_CASE("built-in profiles parse and validate") {
  const auto names = profile_names();
  CHECK(std::find(names.begin(), names.end(), "synthetic-small") != names.end());
  CHECK(std::find(names.begin(), names.end(), "synthetic-full") != names.end());
  for (const auto& n : names) {
    const auto c = resolve({}, {{"run.profile", n}}, false);
    CHECK(c.profile == n);
  }
  CHECK_THROWS_AS(profile_text("nope"), ConfigError);
}
