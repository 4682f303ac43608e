#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "eeb/errors.hpp"
#include "eeb/linreg.hpp"
#include "eeb/training.hpp"
#include "eeb/windowing.hpp"

using namespace eeb;

namespace {

// N = rows - w + 1 windows over `segments` equal segments of the walking block.
WindowedDataset segmented_windows(std::size_t rows, std::size_t w, std::size_t segments,
                                  const std::vector<double>& x, const std::vector<double>& y) {
  ChannelMatrix m;
  m.values.resize(static_cast<Eigen::Index>(rows), 1);
  for (std::size_t i = 0; i < rows; ++i) m.values(static_cast<Eigen::Index>(i), 0) = x[i];
  m.channel_order = {ChannelId::minute_ventilation};
  std::vector<ActivitySegment> segs;
  const std::size_t len = rows / segments;
  for (std::size_t s = 0; s < segments; ++s) {
    ActivitySegment a;
    a.activity = Activity::walk;
    a.condition = "0.6m/s";
    a.start_index = s * len;
    a.end_index = s + 1 == segments ? rows : (s + 1) * len;
    segs.push_back(a);
  }
  return make_windows(m, y, segs, w, 1, 1);
}

WindowedDataset hundred_windows() {
  std::vector<double> x(109);
  std::iota(x.begin(), x.end(), 0.0);
  return segmented_windows(109, 10, 10, x, x);
}

}  // namespace

TEST_CASE("mse loss") {
  CHECK(mse_loss(std::vector<double>{3, 4}, std::vector<double>{3, 4}) == 0.0);
  CHECK(mse_loss(std::vector<double>{0, 0}, std::vector<double>{1, 1}) == 1.0);
  CHECK(mse_loss(std::vector<double>{1, 2}, std::vector<double>{1, 4}) == 2.0);
}

TEST_CASE("validation split holds out whole blocks without overlap") {
  const auto ds = hundred_windows();
  REQUIRE(ds.size() == 100);
  const auto split = split_train_validation(ds, 0.15, 4);
  CHECK(split.val.size() >= 10);
  CHECK(split.val.size() <= 20);
  CHECK(split.train.size() + split.val.size() + split.purged.size() == 100);

  std::set<int> val_blocks;
  for (auto i : split.val) val_blocks.insert(ds.windows[i].segment_index);
  for (auto i : split.train) CHECK(val_blocks.count(ds.windows[i].segment_index) == 0);
  for (auto t : split.train) {
    for (auto v : split.val) {
      const auto a = ds.windows[t].sample_start;
      const auto b = ds.windows[v].sample_start;
      CHECK((a + ds.window_len <= b || b + ds.window_len <= a));
    }
  }

  const auto again = split_train_validation(ds, 0.15, 4);
  CHECK(again.val == split.val);
  CHECK(again.train == split.train);

  const auto none = split_train_validation(ds, 0.0, 4);
  CHECK(none.val.empty());
  CHECK(none.train.size() == 100);
}

TEST_CASE("closed-form least squares") {
  RowMatrix x(2, 2);
  x << 1, 0, 1, 1;
  Vector y(2);
  y << 1, 3;
  const auto fit = fit_linear_regression_closed_form(x, y);
  CHECK(fit.coefficients(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fit.coefficients(1) == doctest::Approx(2.0).epsilon(1e-12));

  RowMatrix xc(4, 2);
  xc << 1, 0.3, 1, -2, 1, 5, 1, 1;
  Vector yc = Vector::Constant(4, 2.75);
  const auto c = fit_linear_regression_closed_form(xc, yc);
  CHECK(c.coefficients(0) == doctest::Approx(2.75));
  CHECK(std::abs(c.coefficients(1)) < 1e-12);

  Vector yi = xc.col(1);
  const auto id = fit_linear_regression_closed_form(xc, yi);
  CHECK(std::abs(id.coefficients(0)) < 1e-12);
  CHECK(id.coefficients(1) == doctest::Approx(1.0).epsilon(1e-12));

  RowMatrix dup(3, 3);
  dup << 1, 1, 1, 1, 2, 2, 1, 3, 3;
  CHECK(fit_linear_regression_closed_form(dup, Vector::Ones(3)).rank_deficient);
}

TEST_CASE("gradient descent agrees with the closed form") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal;
  RowMatrix x(200, 4);
  Vector y(200);
  for (Eigen::Index i = 0; i < 200; ++i) {
    x(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < 4; ++j) x(i, j) = normal(rng);
    y(i) = 0.5 + 1.5 * x(i, 1) - 0.7 * x(i, 2) + 0.1 * normal(rng);
  }
  const auto a = fit_linear_regression_closed_form(x, y);
  const auto b = fit_linear_regression_gradient_descent(x, y);
  CHECK((a.coefficients - b.coefficients).norm() < 1e-4);
}

TEST_CASE("linreg training recovers an exact slope") {
  std::vector<double> x(60);
  std::vector<double> y(60);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = 0.1 * static_cast<double>(i) - 2.0;
    y[i] = 2.0 * x[i];
  }
  const auto ds = segmented_windows(60, 1, 3, x, y);
  auto model = build_model(ModelSpec::defaults(ModelFamily::linreg), 1, 1, 0);
  TrainConfig cfg;
  const auto report = train(model, ds, WindowedDataset{}, cfg);
  CHECK(report.method == "closed_form");
  CHECK(model.parameter("linear.weight").data()[0] == doctest::Approx(2.0).epsilon(1e-6));
  const auto pred = predict(model, ds);
  for (std::size_t i = 0; i < pred.size(); ++i) CHECK(std::abs(pred[i] - ds.windows[i].target) < 1e-9);
}

TEST_CASE("patience zero stops after the first non-improving epoch") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  std::vector<double> x(400);
  std::vector<double> y(400);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = normal(rng);
    y[i] = normal(rng);  // unlearnable: validation loss stalls quickly
  }
  const auto ds = segmented_windows(400, 20, 8, x, y);
  auto spec = ModelSpec::defaults(ModelFamily::cnn).toy();
  auto model = build_model(spec, 1, 20, 2);
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.early_stop_patience = 0;
  const auto split = split_train_validation(ds, 0.15, 0);
  const auto report = train(model, ds.subset(split.train), ds.subset(split.val), cfg);
  REQUIRE_FALSE(report.epochs.empty());
  if (report.epochs.size() < cfg.epochs) {
    CHECK(report.epochs.size() == report.best_epoch + 2);
    CHECK(report.epochs.back().val_loss >= report.best_val_loss);
  }
  for (std::size_t e = 1; e + 1 < report.epochs.size(); ++e) {
    double best = report.epochs[0].val_loss;
    for (std::size_t k = 1; k < e; ++k) best = std::min(best, report.epochs[k].val_loss);
    CHECK(report.epochs[e].val_loss < best);
  }
}

TEST_CASE("train config JSON") {
  TrainConfig c;
  c.epochs = 7;
  c.per_step_loss = true;
  const auto back = TrainConfig::from_json(c.to_json());
  CHECK(back.epochs == 7);
  CHECK(back.per_step_loss);
  CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json{{"epoch", 3}}), ConfigError);
  std::vector<std::string> warnings;
  (void)TrainConfig::from_json(nlohmann::json{{"validation_fraction", 0.3}}, &warnings);
  CHECK(warnings.size() == 1);
}
