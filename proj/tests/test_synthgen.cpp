#include <doctest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "eeb/dataset.hpp"
#include "eeb/errors.hpp"
#include "eeb/linreg.hpp"
#include "eeb/synthgen.hpp"
#include "fixtures.hpp"

using namespace eeb;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

double sample_std(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST_CASE("oracle table") {
  CHECK(oracle_ee(Activity::sit, kRestCondition) == 0.0);
  CHECK(oracle_ee(Activity::stand, kRestCondition) == 0.0);
  CHECK(oracle_ee(Activity::run, "2.7m/s") == 11.5);
  CHECK(oracle_ee(Activity::walk, "1.2m/s") > oracle_ee(Activity::walk, "0.6m/s"));
  CHECK(oracle_ee(Activity::incline, "1.2m/s@9deg") > oracle_ee(Activity::incline, "1.2m/s@4deg"));
  CHECK(oracle_ee(Activity::walk, "1.2m/s") < oracle_ee(Activity::incline, "1.2m/s@4deg"));
  CHECK(oracle_ee(Activity::incline, "1.2m/s@4deg") < oracle_ee(Activity::run, "1.2m/s"));
  CHECK(oracle_ee(Activity::cycle, "70rpm-R5") > oracle_ee(Activity::cycle, "70rpm-R1"));
  CHECK_THROWS_AS((void)oracle_ee(Activity::walk, "5m/s"), ProtocolError);
}

TEST_CASE("full protocol shape") {
  const auto p = Protocol::full(4);
  CHECK(p.sessions.size() == 2);
  CHECK(p.segment_count() == 33);
  std::size_t exercise = 0;
  for (const auto& s : p.sessions)
    for (const auto& step : s.steps) exercise += is_rest(step.activity) ? 0 : 1;
  CHECK(exercise == 21);
}

TEST_CASE("noiseless closure through the on-disk tree") {
  fixtures::TempDir dir("closure");
  const auto profile = SubjectProfile::noiseless(17, 1);
  const auto protocol = Protocol::full(profile.seed, 240.0);
  write_raw_subject(dir.path(), generate_raw_subject(profile, protocol));
  const auto loaded = load_dataset(dir.path());
  REQUIRE(loaded.size() == 1);
  const auto oracle = oracle_trace(profile, protocol);
  REQUIRE(loaded[0].ee_target.size() == oracle.net.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < oracle.net.size(); ++i) worst = std::max(worst, std::abs(loaded[0].ee_target[i] - oracle.net[i]));
  CHECK(worst < 1e-9);
}

TEST_CASE("same seed gives bit-identical files") {
  fixtures::TempDir a("same_a");
  fixtures::TempDir b("same_b");
  SynthDatasetOptions o;
  o.seed = 23;
  o.n_subjects = 2;
  o.segment_s = 200.0;
  for (const auto& r : generate_raw_dataset(o)) write_raw_subject(a.path(), r);
  for (const auto& r : generate_raw_dataset(o)) write_raw_subject(b.path(), r);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a.path())) {
    if (!e.is_regular_file()) continue;
    const auto twin = b.path() / fs::relative(e.path(), a.path());
    REQUIRE(fs::exists(twin));
    CHECK(slurp(e.path()) == slurp(twin));
    ++files;
  }
  CHECK(files >= 6);
}

TEST_CASE("target noise matches the configured sigma") {
  auto profile = SubjectProfile::random(31, 1, 0.2);
  const auto protocol = Protocol::full(profile.seed);
  const auto rec = generate_subject(profile, protocol, {1.0, TargetMode::per_sample});
  const auto oracle = oracle_trace(profile, protocol);
  REQUIRE(rec.ee_target.size() == oracle.net.size());
  std::vector<double> resid(oracle.net.size());
  for (std::size_t i = 0; i < resid.size(); ++i) resid[i] = rec.ee_target[i] - oracle.net[i];
  CHECK(std::abs(sample_std(resid) - 0.2) < 0.02);
}

TEST_CASE("minute ventilation gain is recovered per subject") {
  auto p1 = SubjectProfile::learnability(9, 1, 0.0);
  p1.breath_jitter = 0.0;
  auto p2 = p1;
  p2.subject_id = 2;
  p2.mv_gain = 10.0;
  const auto protocol = Protocol::trials(fixtures::compact_trials(), 240.0);
  std::vector<double> slopes;
  for (const auto& p : {p1, p2}) {
    const auto rec = generate_subject(p, protocol, {1.0, TargetMode::per_sample});
    const auto& mv = rec.channels[static_cast<std::size_t>(ChannelId::minute_ventilation)];
    const auto n = static_cast<Eigen::Index>(mv.size());
    RowMatrix x(n, 2);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      x(i, 0) = 1.0;
      x(i, 1) = mv[static_cast<std::size_t>(i)];
      y(i) = rec.ee_target[static_cast<std::size_t>(i)];
    }
    const auto fit = fit_linear_regression_closed_form(x, y);
    const Vector resid = y - x * fit.coefficients;
    const double mean = y.mean();
    const double r2 = 1.0 - resid.squaredNorm() / (y.array() - mean).square().sum();
    CHECK(r2 > 0.99);
    slopes.push_back(fit.coefficients(1));
  }
  CHECK(slopes[0] / slopes[1] == doctest::Approx(10.0 / 8.0).epsilon(1e-6));
}
