#include <doctest.h>

#include <cmath>
#include <random>

#include "eeb/errors.hpp"
#include "eeb/windowing.hpp"
#include "fixtures.hpp"

using namespace eeb;

namespace {

ChannelMatrix ramp_matrix(std::size_t rows, std::size_t cols) {
  ChannelMatrix m;
  m.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = static_cast<double>(r * 10 + c);
  for (std::size_t c = 0; c < cols; ++c) m.channel_order.push_back(static_cast<ChannelId>(c));
  return m;
}

std::vector<ActivitySegment> two_segments(std::size_t split, std::size_t end) {
  ActivitySegment walk;
  walk.activity = Activity::walk;
  walk.condition = "0.6m/s";
  walk.start_index = 0;
  walk.end_index = split;
  ActivitySegment run;
  run.activity = Activity::run;
  run.condition = "1.8m/s";
  run.start_index = split;
  run.end_index = end;
  return {walk, run};
}

// Counts start offsets directly instead of using the closed form.
std::size_t enumerate_windows(std::size_t len, std::size_t w, std::size_t stride) {
  std::size_t n = 0;
  for (std::size_t start = 0; start + w <= len; start += stride) ++n;
  return n;
}

}  // namespace

TEST_CASE("window counts") {
  const auto segs = two_segments(50, 100);
  std::vector<double> targets(100, 1.0);
  CHECK(make_windows(ramp_matrix(100, 1), targets, segs, 10, 1).size() == 91);
  std::vector<double> t10(10, 1.0);
  CHECK(make_windows(ramp_matrix(10, 1), t10, two_segments(5, 10), 10, 5).size() == 1);
  std::vector<double> t5(5, 1.0);
  const auto short_ds = make_windows(ramp_matrix(5, 1), t5, two_segments(2, 5), 10, 1);
  CHECK(short_ds.empty());
  CHECK(short_ds.too_short);
  CHECK_THROWS_AS(make_windows(ramp_matrix(10, 1), t10, two_segments(5, 10), 4, 0), ConfigError);
}

TEST_CASE("window count matches enumeration for random shapes") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> len_d(1, 300);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t len = len_d(rng);
    const std::size_t w = std::uniform_int_distribution<std::size_t>(1, len)(rng);
    const std::size_t stride = std::uniform_int_distribution<std::size_t>(1, 25)(rng);
    std::vector<double> targets(len, 0.0);
    const auto ds = make_windows(ramp_matrix(len, 2), targets, two_segments(len, len), w, stride);
    CHECK(ds.size() == enumerate_windows(len, w, stride));
    CHECK(ds.size() == (len - w) / stride + 1);
  }
}

TEST_CASE("window provenance comes from the final step") {
  std::vector<double> targets(20);
  for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = static_cast<double>(i);
  const auto ds = make_windows(ramp_matrix(20, 2), targets, two_segments(10, 20), 4, 1, 7);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& w = ds.windows[i];
    const std::size_t last = w.sample_start + 3;
    CHECK(w.target == targets[last]);
    CHECK(w.subject_id == 7);
    CHECK(w.activity == (last < 10 ? Activity::walk : Activity::run));
    CHECK(w.spans_transition == (w.sample_start < 10 && last >= 10));
    const auto f = ds.features(i);
    CHECK(f.rows() == 4);
    CHECK(f(0, 1) == static_cast<double>(w.sample_start * 10 + 1));
  }
  CHECK(ds.windows[7].spans_transition);
  CHECK_FALSE(ds.windows[0].spans_transition);
}

TEST_CASE("fusion") {
  std::vector<std::vector<double>> two{{1, 2, 3, 4, 5}, {6, 7, 8, 9, 10}};
  const auto m = fuse_channels(two);
  CHECK(m.rows() == 5);
  CHECK(m.cols() == 2);
  CHECK(m(4, 1) == 10.0);
  std::vector<std::vector<double>> one{{1, 2, 3, 4, 5}};
  const auto m1 = fuse_channels(one);
  CHECK(m1.cols() == 1);
  for (int i = 0; i < 5; ++i) CHECK(m1(i, 0) == one[0][static_cast<std::size_t>(i)]);
  std::vector<std::vector<double>> ragged{{1, 2, 3}, {1, 2}};
  CHECK_THROWS_AS(fuse_channels(ragged), FusionError);
}

TEST_CASE("z-score scaler") {
  ChannelMatrix m;
  m.values.resize(3, 2);
  m.values << 1, 5, 2, 5, 3, 5;
  m.channel_order = {ChannelId::waist_acc, ChannelId::chest_acc};
  std::vector<double> targets(3, 0.0);
  const auto ds = make_windows(m, targets, two_segments(3, 3), 1, 1);
  const auto scaler = fit_scaler(ds);
  const auto scaled = apply_scaler(scaler, ds);
  const double expect = std::sqrt(1.5);  // 1 / population std of {1,2,3}
  CHECK(scaled.features(0)(0, 0) == doctest::Approx(-expect).epsilon(1e-12));
  CHECK(scaled.features(1)(0, 0) == doctest::Approx(0.0));
  CHECK(scaled.features(2)(0, 0) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(std::abs(scaled.features(2)(0, 0) - 1.2247) < 5e-5);
  for (std::size_t i = 0; i < 3; ++i) CHECK(scaled.features(i)(0, 1) == 0.0);
  CHECK(scaler.stddev[1] == kScalerStdFloor);
}

TEST_CASE("recordings are windowed per session") {
  SynthDatasetOptions o;
  o.seed = 5;
  o.n_subjects = 2;
  o.segment_s = 200.0;
  auto raw = generate_raw_dataset(o).front();
  const auto rec = ingest_subject(raw);
  const auto ranges = rec.session_ranges();
  REQUIRE(ranges.size() == 2);
  const std::size_t w = 10;
  const auto ds = window_recording(rec, parse_selection("hexoskin"), w, 3);
  std::size_t expected = 0;
  for (const auto& [b, e] : ranges) expected += (e - b - w) / 3 + 1;
  CHECK(ds.size() == expected);
  for (const auto& win : ds.windows) {
    bool inside = false;
    for (const auto& [b, e] : ranges) inside = inside || (win.sample_start >= b && win.sample_start + w <= e);
    CHECK(inside);
  }
  CHECK(ds.n_channels() == 5);
}
