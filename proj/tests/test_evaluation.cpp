#include <doctest.h>

#include <random>

#include "fgssl/errors.hpp"
#include "fgssl/evaluation.hpp"
#include "fgssl/grad_cam.hpp"
#include "oracles.hpp"

using namespace fgssl;
using namespace fgssl::eval;

TEST_CASE("AUC worked example is exactly 0.75") {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y{0, 0, 1, 1};
  CHECK(roc_auc(s, y) == 0.75);
}

TEST_CASE("AUC ties and degenerate inputs") {
  const std::vector<double> flat{0.3, 0.3, 0.3, 0.3};
  const std::vector<int> y{0, 1, 0, 1};
  CHECK(roc_auc(flat, y) == 0.5);
  const std::vector<int> one_class{1, 1, 1, 1};
  CHECK_THROWS_AS(roc_auc(flat, one_class), MetricError);
  const std::vector<double> perfect{0.1, 0.9, 0.2, 0.8};
  CHECK(roc_auc(perfect, y) == 1.0);
}

TEST_CASE("accuracy and F1 against hand counts") {
  const std::vector<int> pred{0, 1, 1, 2, 2, 2};
  const std::vector<int> y{0, 1, 2, 2, 2, 0};
  CHECK(accuracy(pred, y) == doctest::Approx(4.0 / 6.0));
  // class 0: tp1 fp0 fn1 -> 2/3; class 1: tp1 fp1 fn0 -> 2/3; class 2: tp2 fp1 fn1 -> 2/3
  CHECK(macro_f1(pred, y, 3) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(accuracy(pred, std::vector<int>{0, 1}), ShapeError);
  CHECK_THROWS_AS(accuracy(std::vector<int>{}, std::vector<int>{}), ShapeError);

  const std::vector<int> all_right{0, 1, 2};
  CHECK(macro_f1(all_right, all_right, 5) == 1.0);  // absent classes are skipped
  CHECK(f1_score(all_right, all_right, 3, F1Average::Weighted) == 1.0);
}

TEST_CASE("metrics match brute-force references on random instances") {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 50; ++t) {
    const int n = 5 + static_cast<int>(rng() % 40);
    const int m = 2 + static_cast<int>(rng() % 4);
    std::vector<int> pred(n), y(n);
    std::vector<double> score(n);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < n; ++i) {
      pred[i] = static_cast<int>(rng() % m);
      y[i] = static_cast<int>(rng() % m);
      score[i] = std::round(u(rng) * 20) / 20;  // coarse grid forces ties
    }
    CHECK(std::abs(accuracy(pred, y) - oracle::accuracy(pred, y)) < 1e-12);
    CHECK(std::abs(macro_f1(pred, y, m) - oracle::macro_f1(pred, y)) < 1e-12);
    std::vector<int> bin(n);
    for (int i = 0; i < n; ++i) bin[i] = i % 2;
    CHECK(std::abs(roc_auc(score, bin) - oracle::auc_pairs(score, bin)) < 1e-12);
  }
}

TEST_CASE("report and confusion matrix") {
  const std::vector<double> p{0.9, 0.1, 0.2, 0.8, 0.6, 0.4, 0.3, 0.7};
  const std::vector<int> y{0, 1, 1, 1};
  const auto r = make_report(p, y, 2);
  CHECK(r.accuracy == doctest::Approx(0.75));
  CHECK(r.auc_binary);
  CHECK(r.confusion == std::vector<std::vector<int>>{{1, 0}, {1, 2}});
  const auto j = r.to_json();
  CHECK(j.contains("accuracy"));
  CHECK(j.contains("macro_f1"));
  CHECK(j.contains("auc"));
}

TEST_CASE("multiclass AUC averages one-vs-rest") {
  // Each class column ranks its own samples first.
  const std::vector<double> p{0.8, 0.1, 0.1, 0.1, 0.8, 0.1, 0.1, 0.1, 0.8};
  const std::vector<int> y{0, 1, 2};
  CHECK(roc_auc_multiclass(p, y, 3) == 1.0);
}

TEST_CASE("localization compares inside and outside means") {
  Heatmap h{4, 4, std::vector<float>(16, 0.0f)};
  h.values[5] = 1.0f;  // (1,1)
  const auto loc = motif_localization(h, {{1, 1, 2, 2}});
  CHECK(loc.inside_mean == 1.0);
  CHECK(loc.outside_mean == 0.0);
  CHECK(loc.inside_wins());
  CHECK_FALSE(motif_localization(h, {{2, 2, 4, 4}}).inside_wins());
  CHECK_THROWS_AS(motif_localization(h, {{0, 0, 4, 4}}), ShapeError);
}

TEST_CASE("grad-cam maps cover the input and stay in [0,1]") {
  torch::manual_seed(9);
  model::PmgOptions opts;
  opts.head_width = 8;
  opts.projector_hidden = 8;
  opts.projector_dim = 8;
  opts.label_sizes = {3, 3, 3, 3};
  model::PmgNetwork net(model::make_backbone("small_cnn"), opts);
  ImageTensor img(64, 64, 3);
  std::mt19937 rng(1);
  std::uniform_real_distribution<float> u(0, 1);
  for (float& v : img.data()) v = u(rng);
  const std::array<float, 3> mean{0.5f, 0.5f, 0.5f};
  const std::array<float, 3> sd{0.25f, 0.25f, 0.25f};

  const auto maps = grad_cam_layers(net, img, 1, {1, 2, 3, 4}, mean, sd);
  REQUIRE(maps.size() == 4);
  for (const auto& m : maps) {
    CHECK(m.height == 64);
    CHECK(m.width == 64);
    for (float v : m.values) CHECK((v >= 0.0f && v <= 1.0f));
    CHECK((m.max() == doctest::Approx(1.0f) || m.max() == 0.0f));
  }
  const auto single = grad_cam(net, img, 1, 3, mean, sd);
  CHECK(single.values == maps[2].values);
  CHECK(net->is_training());  // mode restored

  CHECK_THROWS_AS(grad_cam(net, img, 1, 9, mean, sd), StepError);
  CHECK_THROWS_AS(grad_cam(net, img, 3, 2, mean, sd), ShapeError);

  const auto ov = overlay(img, maps[0], 0.5f);
  CHECK(ov.height() == 64);
  CHECK(ov.in_unit_range());
  const auto row = tile_row({img, ov}, 2);
  CHECK(row.width() == 64 * 2 + 2 * 3);
  const auto grid = stack_rows({row, img}, 2);
  CHECK(grid.width() == row.width());
}
