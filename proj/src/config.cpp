#include "fgssl/config.hpp"

#include <array>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "fgssl/errors.hpp"
#include "profiles.hpp"  // generated: kProfiles

namespace fgssl::config {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& text, const std::string& expected) {
  throw ConfigError("bad value '" + text + "' for " + key + " (expected " + expected + ")");
}

template <typename T>
T parse_number(const std::string& key, const std::string& raw) {
  const std::string text = trim(raw);
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) bad_value(key, raw, "a number");
  return value;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

bool parse_bool(const std::string& key, const std::string& raw) {
  const std::string t = trim(raw);
  if (t == "true" || t == "on" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "off" || t == "0" || t == "no") return false;
  bad_value(key, raw, "true/false");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& raw) {
  std::vector<T> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, item));
  if (out.empty()) bad_value(key, raw, "a comma-separated list");
  return out;
}

template <typename T>
std::string format_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

struct Field {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

// Field accessors generated from a member reference.
template <typename Member>
Field int_field(std::string key, Member member) {
  return {key, [member](const ExperimentConfig& c) { return std::to_string(member(c)); },
          [member, key](ExperimentConfig& c, const std::string& v) {
            member(c) = parse_number<std::remove_reference_t<decltype(member(c))>>(key, v);
          }};
}

template <typename Member>
Field double_field(std::string key, Member member) {
  return {key, [member](const ExperimentConfig& c) { return format_double(member(c)); },
          [member, key](ExperimentConfig& c, const std::string& v) { member(c) = parse_number<double>(key, v); }};
}

template <typename Member>
Field bool_field(std::string key, Member member) {
  return {key, [member](const ExperimentConfig& c) { return std::string(member(c) ? "true" : "false"); },
          [member, key](ExperimentConfig& c, const std::string& v) { member(c) = parse_bool(key, v); }};
}

template <typename Member>
Field string_field(std::string key, Member member) {
  return {key, [member](const ExperimentConfig& c) { return std::string(member(c)); },
          [member](ExperimentConfig& c, const std::string& v) { member(c) = trim(v); }};
}

template <typename Member>
Field list_field(std::string key, Member member) {
  return {key, [member](const ExperimentConfig& c) { return format_list(member(c)); },
          [member, key](ExperimentConfig& c, const std::string& v) {
            using T = typename std::remove_reference_t<decltype(member(c))>::value_type;
            member(c) = parse_list<T>(key, v);
          }};
}

// Lambdas returning a reference to the member, usable on const and
// non-const configs alike.
#define FG_MEMBER(expr) [](auto& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(string_field("run.profile", FG_MEMBER(profile)));
    f.push_back({"run.output_dir", [](const ExperimentConfig& c) { return c.output_dir.string(); },
                 [](ExperimentConfig& c, const std::string& v) { c.output_dir = trim(v); }});
    f.push_back(int_field("run.seed", FG_MEMBER(train.seed)));
    f.push_back(int_field("run.checkpoint_every", FG_MEMBER(checkpoint_every)));
    f.push_back(int_field("run.threads", FG_MEMBER(threads)));

    f.push_back({"data.manifest", [](const ExperimentConfig& c) { return c.manifest.string(); },
                 [](ExperimentConfig& c, const std::string& v) { c.manifest = trim(v); }});
    f.push_back({"data.test_manifest", [](const ExperimentConfig& c) { return c.test_manifest.string(); },
                 [](ExperimentConfig& c, const std::string& v) { c.test_manifest = trim(v); }});
    f.push_back(int_field("data.image_size", FG_MEMBER(image_size)));
    f.push_back(double_field("data.split_fraction", FG_MEMBER(split_fraction)));
    f.push_back(bool_field("data.stratified", FG_MEMBER(stratified)));
    f.push_back(int_field("data.synth_classes", FG_MEMBER(synth_classes)));
    f.push_back(int_field("data.synth_per_class", FG_MEMBER(synth_per_class)));
    f.push_back(int_field("data.synth_test_per_class", FG_MEMBER(synth_test_per_class)));
    f.push_back(int_field("data.synth_size", FG_MEMBER(synth_size)));
    f.push_back(int_field("data.synth_seed", FG_MEMBER(synth_seed)));

    f.push_back(string_field("model.backbone", FG_MEMBER(backbone)));
    f.push_back(list_field("model.channels", FG_MEMBER(small_cnn.channels)));
    f.push_back(list_field("model.blocks", FG_MEMBER(small_cnn.blocks)));
    f.push_back(list_field("model.stages", FG_MEMBER(pmg.stage_indices)));
    f.push_back(int_field("model.head_width", FG_MEMBER(pmg.head_width)));
    f.push_back(int_field("model.projector_hidden", FG_MEMBER(pmg.projector_hidden)));
    f.push_back(int_field("model.projector_dim", FG_MEMBER(pmg.projector_dim)));

    f.push_back({"train.mode", [](const ExperimentConfig& c) { return train::to_string(c.train.mode); },
                 [](ExperimentConfig& c, const std::string& v) { c.train.mode = train::parse_mode(trim(v)); }});
    f.push_back(int_field("train.batch_size", FG_MEMBER(train.batch_size)));
    f.push_back(int_field("train.epochs", FG_MEMBER(train.epochs)));
    f.push_back(double_field("train.lr_init", FG_MEMBER(train.lr_init)));
    f.push_back(double_field("train.momentum", FG_MEMBER(train.momentum)));
    f.push_back(double_field("train.weight_decay", FG_MEMBER(train.weight_decay)));
    f.push_back(list_field("train.granularity_schedule", FG_MEMBER(train.granularity_schedule)));
    f.push_back(double_field("train.lambda", FG_MEMBER(train.lambda)));
    f.push_back(double_field("train.beta", FG_MEMBER(train.beta)));
    f.push_back(int_field("train.pool_size", FG_MEMBER(train.pool_size)));
    f.push_back(bool_field("train.finetune_progressive", FG_MEMBER(train.finetune_progressive)));
    f.push_back(double_field("train.finetune_flip", FG_MEMBER(train.finetune_flip)));
    f.push_back({"train.init_checkpoint", [](const ExperimentConfig& c) { return c.init_checkpoint.string(); },
                 [](ExperimentConfig& c, const std::string& v) { c.init_checkpoint = trim(v); }});
    f.push_back({"train.resume", [](const ExperimentConfig& c) { return c.resume.string(); },
                 [](ExperimentConfig& c, const std::string& v) { c.resume = trim(v); }});
    f.push_back(bool_field("train.allow_config_mismatch", FG_MEMBER(allow_config_mismatch)));

    f.push_back(double_field("augment.crop_p", FG_MEMBER(augment.resized_crop.probability)));
    f.push_back(double_field("augment.crop_scale_lo", FG_MEMBER(augment.resized_crop.lo)));
    f.push_back(double_field("augment.crop_scale_hi", FG_MEMBER(augment.resized_crop.hi)));
    f.push_back(double_field("augment.crop_ratio_lo", FG_MEMBER(augment.crop_ratio_lo)));
    f.push_back(double_field("augment.crop_ratio_hi", FG_MEMBER(augment.crop_ratio_hi)));
    f.push_back(double_field("augment.flip_p", FG_MEMBER(augment.flip.probability)));
    f.push_back(double_field("augment.jitter_p", FG_MEMBER(augment.color_jitter.probability)));
    f.push_back(double_field("augment.brightness", FG_MEMBER(augment.brightness)));
    f.push_back(double_field("augment.contrast", FG_MEMBER(augment.contrast)));
    f.push_back(double_field("augment.saturation", FG_MEMBER(augment.saturation)));
    f.push_back(double_field("augment.hue", FG_MEMBER(augment.hue)));
    f.push_back(double_field("augment.grayscale_p", FG_MEMBER(augment.grayscale.probability)));
    f.push_back(double_field("augment.blur_p", FG_MEMBER(augment.blur.probability)));
    f.push_back(double_field("augment.blur_sigma_lo", FG_MEMBER(augment.blur.lo)));
    f.push_back(double_field("augment.blur_sigma_hi", FG_MEMBER(augment.blur.hi)));
    f.push_back(double_field("augment.solarize_p", FG_MEMBER(augment.solarize.probability)));
    f.push_back(double_field("augment.solarize_threshold", FG_MEMBER(augment.solarize.lo)));

    f.push_back(bool_field("ablation.jigsaw", FG_MEMBER(train.use_jigsaw)));
    f.push_back(bool_field("ablation.progressive", FG_MEMBER(train.progressive)));
    f.push_back(bool_field("ablation.barlow", FG_MEMBER(train.use_barlow)));
    f.push_back(int_field("ablation.single_level_granularity", FG_MEMBER(train.single_level_granularity)));
    f.push_back(string_field("ablation.offdiag_source", FG_MEMBER(offdiag_source)));

    f.push_back(int_field("eval.resize", FG_MEMBER(eval_resize)));
    f.push_back(int_field("eval.crop", FG_MEMBER(eval_crop)));
    f.push_back(int_field("eval.batch_size", FG_MEMBER(eval_batch)));
    f.push_back({"eval.gradcam_stages",
                 [](const ExperimentConfig& c) { return c.gradcam_stages.empty() ? "all" : format_list(c.gradcam_stages); },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.gradcam_stages = trim(v) == "all" || trim(v).empty()
                                          ? std::vector<int>{}
                                          : parse_list<int>("eval.gradcam_stages", v);
                 }});
    f.push_back(double_field("eval.gradcam_alpha", FG_MEMBER(gradcam_alpha)));
    return f;
  }();
  return table;
}

#undef FG_MEMBER

const Field& find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (backbone != "small_cnn" && backbone != "resnet50") {
    throw ConfigError("model.backbone must be small_cnn or resnet50");
  }
  if (offdiag_source == "jigsaw_pairs") {
    throw ConfigError("ablation.offdiag_source=jigsaw_pairs is not implemented; use cross_branch");
  }
  if (offdiag_source != "cross_branch") throw ConfigError("ablation.offdiag_source must be cross_branch");
  if (pmg.head_width < 2 || pmg.projector_hidden < 1 || pmg.projector_dim < 2) {
    throw ConfigError("model widths must be positive (projector_dim >= 2)");
  }
  if (pmg.projector_dim != train.projector_dim) throw ConfigError("projector dims disagree");
  if (image_size < 32 || eval_crop < 32 || eval_resize < eval_crop) {
    throw ConfigError("image sizes must be >= 32 and eval.resize >= eval.crop");
  }
  for (int g : train.granularity_schedule) {
    if (g > 0 && (image_size % g != 0 || eval_crop % g != 0)) {
      throw ConfigError("granularity " + std::to_string(g) + " does not divide the image size");
    }
  }
  if (image_size % train.single_level_granularity != 0) {
    throw ConfigError("ablation.single_level_granularity does not divide the image size");
  }
  if (split_fraction <= 0.0 || split_fraction >= 1.0) throw ConfigError("data.split_fraction must be in (0,1)");
  if (checkpoint_every < 1) throw ConfigError("run.checkpoint_every must be positive");
  if (eval_batch < 1) throw ConfigError("eval.batch_size must be positive");
  if (gradcam_alpha < 0.0 || gradcam_alpha > 1.0) throw ConfigError("eval.gradcam_alpha must be in [0,1]");
  if (static_cast<int>(pmg.stage_indices.size()) + 1 != static_cast<int>(train.granularity_schedule.size())) {
    throw ConfigError("train.granularity_schedule needs " + std::to_string(pmg.stage_indices.size() + 1) +
                      " entries (one per exposed stage plus the concatenated step)");
  }
  train.validate(static_cast<int>(pmg.stage_indices.size()) + 1);
  augment.validate();
}

std::vector<std::string> keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

KeyValues to_key_values(const ExperimentConfig& config) {
  KeyValues out;
  for (const auto& f : fields()) out[f.key] = f.get(config);
  return out;
}

void apply_values(ExperimentConfig& config, const KeyValues& values) {
  for (const auto& [key, value] : values) find_field(key).set(config, value);
  config.train.projector_dim = config.pmg.projector_dim;
  config.augment.solarize.hi = config.augment.solarize.lo;
  config.augment.seed = config.train.seed;
}

KeyValues parse_ini(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ParseError(e.message(), static_cast<int>(e.line()));
  }
  KeyValues out;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("key '" + section + "' must sit inside a [section]");
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      find_field(full);
      out[full] = value.data();
    }
  }
  return out;
}

std::string to_ini(const ExperimentConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string s = f.key.substr(0, dot);
    if (s != section) {
      out << (section.empty() ? "" : "\n") << '[' << s << "]\n";
      section = s;
    }
    out << f.key.substr(dot + 1) << " = " << f.get(config) << '\n';
  }
  return out.str();
}

std::vector<std::string> profile_names() {
  std::vector<std::string> out;
  for (const auto& [name, text] : kProfiles) out.emplace_back(name);
  return out;
}

const std::string& profile_text(const std::string& name) {
  static const std::map<std::string, std::string> texts = [] {
    std::map<std::string, std::string> m;
    for (const auto& [n, t] : kProfiles) m.emplace(n, t);
    return m;
  }();
  const auto it = texts.find(name);
  if (it == texts.end()) throw ConfigError("unknown profile '" + name + "'");
  return it->second;
}

std::string env_name(const std::string& key) {
  std::string out = "FGSSL_";
  for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

ExperimentConfig resolve(const fs::path& file, const KeyValues& overrides, bool use_environment) {
  KeyValues from_file;
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot read config file " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    from_file = parse_ini(ss.str());
  }
  KeyValues from_env;
  if (use_environment) {
    for (const auto& key : keys()) {
      if (const char* v = std::getenv(env_name(key).c_str())) from_env[key] = v;
    }
  }
  for (const auto& [key, value] : overrides) find_field(key);

  std::string profile;
  for (const KeyValues* layer : std::array<const KeyValues*, 3>{&from_file, &from_env, &overrides}) {
    if (const auto it = layer->find("run.profile"); it != layer->end()) profile = trim(it->second);
  }
  ExperimentConfig config;
  if (!profile.empty()) apply_values(config, parse_ini(profile_text(profile)));
  apply_values(config, from_file);
  apply_values(config, from_env);
  apply_values(config, overrides);
  config.profile = profile;
  config.validate();
  return config;
}

std::string config_hash(const ExperimentConfig& config) {
  auto kv = to_key_values(config);
  // Where a run lives, how it is resumed and the thread count do not change
  // what it computes.
  for (const char* k : {"run.output_dir", "train.resume", "run.threads", "train.allow_config_mismatch"}) kv.erase(k);
  std::string canonical;
  for (const auto& [k, v] : kv) canonical += k + "=" + v + "\n";
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(canonical)));
  return buf;
}

}  // namespace fgssl::config
