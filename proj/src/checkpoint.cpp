#include <sstream>

#include <ATen/CPUGeneratorImpl.h>

#include "fgssl/errors.hpp"
#include "fgssl/train_engine.hpp"

namespace fgssl::train {

namespace fs = std::filesystem;

namespace {

constexpr const char* kModelPrefix = "model/";

torch::Tensor string_tensor(const std::string& s) {
  auto t = torch::empty({static_cast<int64_t>(s.size())}, torch::kUInt8);
  std::memcpy(t.data_ptr<uint8_t>(), s.data(), s.size());
  return t;
}

std::string tensor_string(const torch::Tensor& t) {
  const auto c = t.contiguous();
  return {reinterpret_cast<const char*>(c.data_ptr<uint8_t>()), static_cast<std::size_t>(c.numel())};
}

torch::Tensor int_tensor(std::vector<int64_t> v) {
  return torch::tensor(v.empty() ? std::vector<int64_t>{} : v, torch::kLong);
}

std::vector<int64_t> tensor_ints(const torch::Tensor& t) {
  const auto c = t.to(torch::kLong).contiguous();
  return {c.data_ptr<int64_t>(), c.data_ptr<int64_t>() + c.numel()};
}

torch::serialize::InputArchive open_archive(const fs::path& path) {
  if (!fs::exists(path)) throw CheckpointError("checkpoint not found: " + path.string());
  torch::serialize::InputArchive ar;
  try {
    ar.load_from(path.string());
  } catch (const c10::Error& e) {
    throw CheckpointError("cannot read checkpoint " + path.string() + ": corrupt or truncated archive");
  }
  return ar;
}

torch::Tensor read_tensor(torch::serialize::InputArchive& ar, const std::string& key) {
  torch::Tensor t;
  try {
    ar.read(key, t);
  } catch (const c10::Error&) {
    throw CheckpointError("checkpoint is missing '" + key + "'");
  }
  return t;
}

CheckpointMeta read_meta(torch::serialize::InputArchive& ar) {
  CheckpointMeta m;
  m.config_hash = tensor_string(read_tensor(ar, "meta/config_hash"));
  m.mode = parse_mode(tensor_string(read_tensor(ar, "meta/mode")));
  m.backbone = tensor_string(read_tensor(ar, "meta/backbone"));
  const auto counters = tensor_ints(read_tensor(ar, "meta/counters"));
  if (counters.size() != 4) throw CheckpointError("malformed checkpoint counters");
  m.epoch = static_cast<int>(counters[0]);
  m.global_step = counters[1];
  m.head_width = counters[2];
  m.projector_dim = counters[3];
  m.best_metric = read_tensor(ar, "meta/best_metric").item<double>();
  m.label_sizes = tensor_ints(read_tensor(ar, "meta/label_sizes"));
  const auto norm = read_tensor(ar, "meta/normalization").to(torch::kFloat32).contiguous();
  if (norm.numel() != 6) throw CheckpointError("malformed normalization statistics");
  for (int c = 0; c < 3; ++c) {
    m.mean[c] = norm[c].item<float>();
    m.stddev[c] = norm[c + 3].item<float>();
  }
  return m;
}

// Copies archived tensors into the module's parameters and buffers. Entries
// for which `skip` returns true are left alone.
template <typename Skip>
void restore_tensors(torch::nn::Module& module, torch::serialize::InputArchive& ar, Skip skip) {
  torch::NoGradGuard guard;
  auto restore = [&](const std::string& name, torch::Tensor& target) {
    if (skip(name)) return;
    const auto source = read_tensor(ar, kModelPrefix + name);
    if (source.sizes() != target.sizes()) {
      std::ostringstream os;
      os << "shape mismatch for '" << name << "': checkpoint " << source.sizes() << ", network "
         << target.sizes();
      throw ConfigMismatchError(os.str());
    }
    target.copy_(source);
  };
  for (auto& p : module.named_parameters(true)) restore(p.key(), p.value());
  for (auto& b : module.named_buffers(true)) restore(b.key(), b.value());
}

}  // namespace

void save_checkpoint(Trainer& trainer, const std::string& config_hash, const std::string& backbone,
                     const fs::path& path) {
  auto& net = trainer.network();
  const auto& state = trainer.state();
  torch::serialize::OutputArchive ar;
  for (const auto& p : net->named_parameters(true)) ar.write(kModelPrefix + p.key(), p.value().detach());
  for (const auto& b : net->named_buffers(true)) ar.write(kModelPrefix + b.key(), b.value(), true);

  torch::serialize::OutputArchive opt;
  trainer.optimizer().save(opt);
  ar.write("optimizer", opt);

  ar.write("meta/config_hash", string_tensor(config_hash));
  ar.write("meta/mode", string_tensor(to_string(trainer.config().mode)));
  ar.write("meta/backbone", string_tensor(backbone));
  ar.write("meta/counters", int_tensor({state.epoch, state.global_step, net->options().head_width,
                                        net->options().projector_dim}));
  ar.write("meta/best_metric", torch::tensor(state.best_metric, torch::kDouble));
  ar.write("meta/label_sizes", int_tensor(net->options().label_sizes));
  const auto& mean = trainer.mean();
  const auto& sd = trainer.stddev();
  ar.write("meta/normalization", torch::tensor({mean[0], mean[1], mean[2], sd[0], sd[1], sd[2]}, torch::kFloat32));

  ar.write("rng/engine", string_tensor(serialize_rng(state.rng)));
  ar.write("rng/torch", at::detail::getDefaultCPUGenerator().get_state());

  // Write then rename so an interrupted save never leaves a partial file.
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  try {
    ar.save_to(tmp.string());
  } catch (const c10::Error& e) {
    throw CheckpointError("cannot write checkpoint " + path.string());
  }
  fs::rename(tmp, path);
}

CheckpointMeta read_checkpoint_meta(const fs::path& path) {
  auto ar = open_archive(path);
  return read_meta(ar);
}

CheckpointMeta load_checkpoint(Trainer& trainer, const std::string& config_hash, const fs::path& path,
                               bool allow_config_mismatch) {
  auto ar = open_archive(path);
  const auto meta = read_meta(ar);
  if (meta.config_hash != config_hash && !allow_config_mismatch) {
    throw ConfigMismatchError("checkpoint config hash " + meta.config_hash + " differs from current " +
                              config_hash);
  }
  if (meta.mode != trainer.config().mode) {
    throw ConfigMismatchError("checkpoint was written in " + to_string(meta.mode) + " mode");
  }
  restore_tensors(*trainer.network(), ar, [](const std::string&) { return false; });

  torch::serialize::InputArchive opt;
  try {
    ar.read("optimizer", opt);
    trainer.optimizer().load(opt);
  } catch (const c10::Error&) {
    throw CheckpointError("cannot restore optimizer state from " + path.string());
  }

  auto& state = trainer.state();
  state.epoch = meta.epoch;
  state.global_step = meta.global_step;
  state.best_metric = meta.best_metric;
  state.rng = deserialize_rng(tensor_string(read_tensor(ar, "rng/engine")));
  auto generator = at::detail::getDefaultCPUGenerator();
  generator.set_state(read_tensor(ar, "rng/torch"));
  return meta;
}

CheckpointMeta load_pretrained_weights(model::PmgNetwork& net, const fs::path& path) {
  auto ar = open_archive(path);
  const auto meta = read_meta(ar);
  if (meta.projector_dim != net->options().projector_dim) {
    throw ConfigMismatchError("checkpoint projector dim " + std::to_string(meta.projector_dim) +
                              " differs from configured " + std::to_string(net->options().projector_dim));
  }
  if (meta.head_width != net->options().head_width) {
    throw ConfigMismatchError("checkpoint head width " + std::to_string(meta.head_width) +
                              " differs from configured " + std::to_string(net->options().head_width));
  }
  restore_tensors(*net, ar, [](const std::string& name) { return name.starts_with("classifiers."); });
  return meta;
}

CheckpointMeta load_network_weights(model::PmgNetwork& net, const fs::path& path) {
  auto ar = open_archive(path);
  const auto meta = read_meta(ar);
  if (meta.label_sizes != net->options().label_sizes) {
    throw ConfigMismatchError("checkpoint classifier sizes differ from the network's");
  }
  restore_tensors(*net, ar, [](const std::string&) { return false; });
  return meta;
}

}  // namespace fgssl::train
