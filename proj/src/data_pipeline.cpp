#include "fgssl/data_pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fgssl/errors.hpp"
#include "fgssl/rng.hpp"

namespace fgssl::data {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t start = 0;
  while (start < s.size() && (s[start] == ' ' || s[start] == '\t')) ++start;
  return s.substr(start);
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ManifestError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ManifestError("malformed " + p.string() + ": " + e.what());
  }
}

}  // namespace

std::vector<int> DatasetManifest::labels() const {
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.label);
  return out;
}

std::vector<int> DatasetManifest::class_counts() const {
  std::vector<int> counts(num_classes(), 0);
  for (const auto& r : records) ++counts.at(r.label);
  return counts;
}

DatasetManifest load_manifest(const fs::path& csv_path, bool check_files) {
  std::ifstream in(csv_path);
  if (!in) throw ManifestError("cannot open manifest " + csv_path.string());

  DatasetManifest m;
  m.root = csv_path.has_parent_path() ? csv_path.parent_path() : fs::path(".");
  std::optional<int> declared_classes;
  const auto sidecar = m.root / "dataset.json";
  if (fs::exists(sidecar)) {
    const auto j = read_json(sidecar);
    m.dataset_id = j.value("id", std::string{});
    if (j.contains("classes")) {
      m.class_names = j.at("classes").get<std::vector<std::string>>();
      declared_classes = static_cast<int>(m.class_names.size());
    }
  }
  if (m.dataset_id.empty()) m.dataset_id = fs::absolute(m.root).filename().string();
  m.stats = read_stats(m.root);

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty manifest " + csv_path.string(), 1);
  ++line_no;
  if (trim(line) != kManifestHeader) {
    throw ParseError("manifest header must be '" + std::string(kManifestHeader) + "'", line_no);
  }
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos || comma == 0) {
      throw ParseError("expected '<path>,<label>'", line_no);
    }
    ManifestRecord rec;
    rec.path = trim(line.substr(0, comma));
    const std::string label = trim(line.substr(comma + 1));
    const auto [ptr, ec] = std::from_chars(label.data(), label.data() + label.size(), rec.label);
    if (ec != std::errc{} || ptr != label.data() + label.size() || label.empty()) {
      throw ParseError("label '" + label + "' is not an integer", line_no);
    }
    if (rec.label < 0 || (declared_classes && rec.label >= *declared_classes)) {
      throw ParseError("label " + label + " outside [0, " +
                           std::to_string(declared_classes.value_or(0)) + ")",
                       line_no);
    }
    if (!seen.insert(rec.path).second) throw ParseError("duplicate path " + rec.path, line_no);
    m.records.push_back(std::move(rec));
  }

  if (!declared_classes) {
    int max_label = -1;
    for (const auto& r : m.records) max_label = std::max(max_label, r.label);
    for (int c = 0; c <= max_label; ++c) m.class_names.push_back(std::to_string(c));
  }

  if (check_files) {
    std::vector<std::string> missing;
    for (const auto& r : m.records) {
      if (!fs::exists(m.root / r.path)) missing.push_back(r.path);
    }
    if (!missing.empty()) {
      std::string msg = std::to_string(missing.size()) + " image file(s) missing:";
      for (const auto& p : missing) msg += "\n  " + p;
      throw ManifestError(msg);
    }
  }
  return m;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& csv_path) {
  if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw ManifestError("cannot write " + csv_path.string());
  out << kManifestHeader << '\n';
  for (const auto& r : manifest.records) out << r.path << ',' << r.label << '\n';
}

void write_dataset_sidecar(const DatasetManifest& manifest, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream out(dir / "dataset.json");
  out << json{{"id", manifest.dataset_id}, {"classes", manifest.class_names}}.dump(2) << '\n';
}

void write_stats(const ChannelStats& stats, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream out(dir / "stats.json");
  out << json{{"mean", stats.mean}, {"std", stats.stddev}}.dump(2) << '\n';
}

std::optional<ChannelStats> read_stats(const fs::path& dir) {
  const auto p = dir / "stats.json";
  if (!fs::exists(p)) return std::nullopt;
  const auto j = read_json(p);
  ChannelStats s;
  s.mean = j.at("mean").get<std::array<float, 3>>();
  s.stddev = j.at("std").get<std::array<float, 3>>();
  return s;
}

std::pair<DatasetManifest, DatasetManifest> stratified_split(const DatasetManifest& manifest,
                                                             const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw ConfigError("train fraction must lie in (0,1)");
  }
  DatasetManifest train = manifest;
  DatasetManifest test = manifest;
  train.records.clear();
  test.records.clear();
  Rng rng(spec.seed);

  auto take = [&](std::vector<std::size_t> idx) {
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_train = static_cast<std::size_t>(std::lround(spec.train_fraction * idx.size()));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    std::vector<std::size_t> tr(idx.begin(), idx.begin() + n_train);
    std::vector<std::size_t> te(idx.begin() + n_train, idx.end());
    std::sort(tr.begin(), tr.end());
    std::sort(te.begin(), te.end());
    return std::pair{tr, te};
  };

  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  if (spec.stratified) {
    std::vector<std::vector<std::size_t>> by_class(manifest.num_classes());
    for (std::size_t i = 0; i < manifest.records.size(); ++i) by_class.at(manifest.records[i].label).push_back(i);
    for (int c = 0; c < manifest.num_classes(); ++c) {
      if (by_class[c].empty()) continue;
      if (by_class[c].size() < 2) {
        throw StratifyError("class " + std::to_string(c) + " has only one sample");
      }
      auto [tr, te] = take(by_class[c]);
      train_idx.insert(train_idx.end(), tr.begin(), tr.end());
      test_idx.insert(test_idx.end(), te.begin(), te.end());
    }
  } else {
    if (manifest.records.size() < 2) throw StratifyError("need at least two samples to split");
    std::vector<std::size_t> all(manifest.records.size());
    std::iota(all.begin(), all.end(), 0);
    std::tie(train_idx, test_idx) = take(all);
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  for (auto i : train_idx) train.records.push_back(manifest.records[i]);
  for (auto i : test_idx) test.records.push_back(manifest.records[i]);
  return {train, test};
}

ChannelStats compute_stats(const std::vector<ImageTensor>& images) {
  std::array<double, 3> sum{};
  std::array<double, 3> sq{};
  double count = 0.0;
  for (const auto& img : images) {
    const int c = img.channels();
    const auto px = img.data();
    for (std::size_t i = 0; i < px.size(); ++i) {
      sum[i % c] += px[i];
      sq[i % c] += static_cast<double>(px[i]) * px[i];
    }
    count += static_cast<double>(px.size()) / c;
  }
  ChannelStats s;
  if (count == 0.0) return s;
  for (int k = 0; k < 3; ++k) {
    const double mean = sum[k] / count;
    const double var = std::max(sq[k] / count - mean * mean, 1e-12);
    s.mean[k] = static_cast<float>(mean);
    s.stddev[k] = static_cast<float>(std::sqrt(var));
  }
  return s;
}

}  // namespace fgssl::data
