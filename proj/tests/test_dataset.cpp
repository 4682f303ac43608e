#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include "eeb/channels.hpp"
#include "eeb/csv.hpp"
#include "eeb/dataset.hpp"
#include "eeb/errors.hpp"
#include "eeb/metabolic.hpp"
#include "eeb/resample.hpp"
#include "fixtures.hpp"

using namespace eeb;

namespace {

// Independent evaluation: kJ/L coefficients, L/min -> kJ/s -> W.
double brockway_oracle(double vo2, double vco2) { return (16.58 * vo2 + 4.51 * vco2) * 1000.0 / 60.0; }

ActivitySegment segment(std::size_t start, std::size_t end) {
  ActivitySegment s;
  s.activity = Activity::walk;
  s.condition = "0.9m/s";
  s.start_index = start;
  s.end_index = end;
  return s;
}

}  // namespace

TEST_CASE("brockway power matches hand evaluation") {
  CHECK(compute_brockway_power(0.0, 0.0) == 0.0);
  CHECK(std::abs(compute_brockway_power(0.3, 0.25) - 101.69) < 5e-3);
  CHECK(std::abs(compute_brockway_power(1.0, 0.0) - 276.33) < 5e-3);
  for (double vo2 : {0.1, 0.7, 2.9}) {
    for (double vco2 : {0.0, 0.5, 2.4}) {
      CHECK(std::abs(compute_brockway_power(vo2, vco2) - brockway_oracle(vo2, vco2)) < 1e-12);
    }
  }
  CHECK_THROWS_AS((void)compute_brockway_power(-0.1, 0.2), DomainError);
}

TEST_CASE("mass normalisation") {
  CHECK(normalize_by_mass(140.0, 70.0) == 2.0);
  CHECK(normalize_by_mass(0.0, 70.0) == 0.0);
  CHECK(std::abs(normalize_by_mass(101.69, 62.5) - 1.627) < 5e-4);
  CHECK_THROWS_AS((void)normalize_by_mass(100.0, 0.0), DomainError);
}

TEST_CASE("steady state is the mean of the final three minutes") {
  std::vector<double> constant(360, 3.0);
  CHECK(steady_state_ee(segment(0, 360), constant, 1.0) == doctest::Approx(3.0));

  std::vector<double> halves(360, 1.0);
  std::fill(halves.begin() + 180, halves.end(), 2.0);
  CHECK(steady_state_ee(segment(0, 360), halves, 1.0) == doctest::Approx(2.0));

  std::vector<double> ramp(360);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<double>(i) / 360.0;
  double brute = 0.0;
  for (std::size_t i = 180; i < 360; ++i) brute += ramp[i];
  brute /= 180.0;
  const double got = steady_state_ee(segment(0, 360), ramp, 1.0);
  CHECK(std::abs(got - brute) < 1e-12);
  CHECK(std::abs(got - 0.7486) < 5e-5);

  CHECK_THROWS_AS((void)steady_state_ee(segment(0, 120), constant, 1.0), ProtocolError);
}

TEST_CASE("net cost keeps the sign") {
  CHECK(net_cost(5.0, 1.2) == doctest::Approx(3.8));
  CHECK(net_cost(1.2, 1.2) == 0.0);
  CHECK(net_cost(1.0, 1.2) == doctest::Approx(-0.2));
}

TEST_CASE("breath resampling") {
  SUBCASE("already uniform") {
    auto out = resample_breath_signals(std::vector<double>{0, 1, 2, 3}, std::vector<double>{4, 4, 4, 4}, 0.0, 4.0, 1.0);
    CHECK(out == std::vector<double>{4, 4, 4, 4});
  }
  SUBCASE("interval means") {
    auto out = resample_breath_signals(std::vector<double>{0, 0.4, 1.1, 1.9}, std::vector<double>{2, 4, 6, 8}, 0.0,
                                       2.0, 1.0);
    REQUIRE(out.size() == 2);
    CHECK(out[0] == doctest::Approx(3.0));
    CHECK(out[1] == doctest::Approx(7.0));
  }
  SUBCASE("empty interval carries forward") {
    auto out = resample_breath_signals(std::vector<double>{0, 2.5}, std::vector<double>{1, 5}, 0.0, 3.0, 1.0);
    CHECK(out == std::vector<double>{1, 1, 5});
  }
  SUBCASE("no breath in segment") {
    CHECK_THROWS_AS(resample_breath_signals(std::vector<double>{10, 11}, std::vector<double>{1, 2}, 0.0, 3.0, 1.0),
                    ProtocolError);
  }
}

TEST_CASE("signal selections") {
  CHECK(parse_selection("hexoskin").channels.size() == 5);
  CHECK(parse_selection("local+global").channels.size() == 16);
  CHECK(parse_selection("global-minute_ventilation").channels.size() == 7);
  CHECK(parse_selection("local").channels.size() == 8);
  const auto all = parse_selection("all");
  for (std::size_t i = 0; i < all.channels.size(); ++i) CHECK(static_cast<std::size_t>(all.channels[i]) == i);
  const auto pair = parse_selection("minute_ventilation,heart_rate");
  CHECK(pair.channels == std::vector<ChannelId>{ChannelId::heart_rate, ChannelId::minute_ventilation});
  CHECK_THROWS_AS(parse_selection("nope"), SelectionError);
  CHECK_THROWS_AS(parse_selection("local-heart_rate"), SelectionError);
  CHECK(make_selection({ChannelId::spo2, ChannelId::waist_acc}).label == "waist_acc+spo2");
}

TEST_CASE("constant gas exchange gives the hand-computed net target") {
  const double mass = 70.0;
  const auto raw = fixtures::constant_gas_subject(mass, 0.3, 0.25, 1.0, 0.8);
  const auto rec = ingest_subject(raw);
  REQUIRE(rec.length() == 720);
  const double stand = brockway_oracle(0.3, 0.25) / mass;
  const double walk = brockway_oracle(1.0, 0.8) / mass;
  CHECK(std::abs(rec.ee_target[0]) < 1e-12);
  CHECK(std::abs(rec.ee_target[719] - (walk - stand)) < 1e-12);
  CHECK(std::abs(rec.ee_measured[719] - walk) < 1e-12);

  IngestOptions per_sample;
  per_sample.target_mode = TargetMode::per_sample;
  const auto rec2 = ingest_subject(raw, per_sample);
  CHECK(std::abs(rec2.ee_target[400] - (walk - stand)) < 1e-12);
}

TEST_CASE("dataset tree round trip") {
  fixtures::TempDir dir("dataset");
  SynthDatasetOptions o;
  o.seed = 3;
  o.n_subjects = 2;
  o.segment_s = 200.0;
  o.trials = fixtures::compact_trials();
  const auto raws = generate_raw_dataset(o);
  for (const auto& r : raws) write_raw_subject(dir.path(), r);

  const auto loaded = load_dataset(dir.path());
  REQUIRE(loaded.size() == 2);
  for (std::size_t s = 0; s < 2; ++s) {
    const auto direct = ingest_subject(raws[s]);
    CHECK(loaded[s].channels.size() == kNumChannels);
    for (std::size_t c = 0; c < kNumChannels; ++c) CHECK(loaded[s].channels[c] == direct.channels[c]);
    CHECK(loaded[s].ee_target == direct.ee_target);
  }

  SUBCASE("missing channel column is named") {
    const auto signals = dir.path() / "subject_1" / "session_1" / "signals.csv";
    auto table = csv::read(signals);
    const auto drop = table.column("spo2");
    std::ofstream out(signals, std::ios::trunc);
    for (std::size_t r = 0; r <= table.rows.size(); ++r) {
      const auto& row = r == 0 ? table.header : table.rows[r - 1];
      std::vector<std::string> kept;
      for (std::size_t c = 0; c < row.size(); ++c)
        if (c != drop) kept.push_back(row[c]);
      out << csv::join(kept) << '\n';
    }
    out.close();
    try {
      (void)load_dataset(dir.path());
      FAIL("expected an ingestion error");
    } catch (const IngestionError& e) {
      CHECK(std::string(e.what()).find("spo2") != std::string::npos);
    }
  }
}

TEST_CASE("select_signals keeps canonical order") {
  const auto rec = ingest_subject(fixtures::constant_gas_subject(60.0, 0.3, 0.25, 1.0, 0.8, 200.0));
  const auto m = select_signals(rec, parse_selection("minute_ventilation,waist_acc"));
  CHECK(m.values.cols() == 2);
  CHECK(m.channel_order.front() == ChannelId::waist_acc);
  CHECK(m.values.rows() == static_cast<Eigen::Index>(rec.length()));
}
