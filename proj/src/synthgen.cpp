#include "eeb/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "eeb/errors.hpp"
#include "eeb/hash.hpp"
#include "eeb/metabolic.hpp"

namespace eeb {

namespace {

struct OracleEntry {
  Activity activity;
  std::string_view condition;
  double net;
};

// Net cost table, W/kg. Monotone in speed, grade and resistance.
constexpr OracleEntry kOracleTable[] = {
    {Activity::walk, "0.6m/s", 1.6},          {Activity::walk, "0.9m/s", 2.2},
    {Activity::walk, "1.2m/s", 3.0},          {Activity::incline, "0.6m/s@4deg", 2.3},
    {Activity::incline, "1.2m/s@4deg", 4.2},  {Activity::incline, "0.6m/s@9deg", 3.0},
    {Activity::incline, "1.2m/s@9deg", 5.6},  {Activity::backward, "0.4m/s", 2.0},
    {Activity::backward, "0.7m/s", 3.2},      {Activity::backward, "1.0m/s", 4.6},
    {Activity::run, "1.2m/s", 6.0},           {Activity::run, "1.8m/s", 8.0},
    {Activity::run, "2.2m/s", 9.6},           {Activity::run, "2.7m/s", 11.5},
    {Activity::cycle, "70rpm-R1", 3.0},       {Activity::cycle, "70rpm-R3", 4.5},
    {Activity::cycle, "70rpm-R5", 6.2},       {Activity::cycle, "100rpm-R1", 4.8},
    {Activity::stairs, "60W", 6.5},           {Activity::stairs, "75W", 7.8},
    {Activity::stairs, "90W", 9.2},
};

// Acceleration amplitude per location: waist, chest, left/right ankle, left/right wrist.
std::array<double, 6> motion_weights(Activity a) {
  switch (a) {
    case Activity::sit: return {0.01, 0.01, 0.01, 0.01, 0.02, 0.02};
    case Activity::stand: return {0.02, 0.02, 0.02, 0.02, 0.03, 0.03};
    case Activity::walk: return {0.25, 0.20, 0.90, 0.90, 0.45, 0.45};
    case Activity::incline: return {0.25, 0.20, 0.95, 0.95, 0.40, 0.40};
    case Activity::backward: return {0.20, 0.18, 0.80, 0.80, 0.35, 0.35};
    case Activity::run: return {0.60, 0.50, 1.60, 1.60, 0.80, 0.80};
    case Activity::cycle: return {0.08, 0.06, 0.70, 0.70, 0.10, 0.10};
    case Activity::stairs: return {0.35, 0.30, 1.10, 1.10, 0.40, 0.40};
  }
  return {};
}

double cadence_hz(Activity a, double net) {
  if (is_rest(a)) return 0.25;
  if (a == Activity::cycle) return 1.2 + 0.05 * net;
  return 0.8 + 0.1 * net;
}

class Lag {
 public:
  Lag(double tau, double init) : tau_(tau), x_(init) {}
  double step(double target, double dt) {
    if (tau_ <= 0.0) return x_ = target;
    x_ += (target - x_) * (1.0 - std::exp(-dt / tau_));
    return x_;
  }

 private:
  double tau_;
  double x_;
};

std::size_t idx(ChannelId c) { return static_cast<std::size_t>(c); }

}  // namespace

double oracle_ee(Activity activity, std::string_view condition) {
  if (is_rest(activity)) {
    if (condition != kRestCondition) throw ProtocolError("rest segments take condition 'rest'");
    return 0.0;
  }
  for (const auto& e : kOracleTable) {
    if (e.activity == activity && e.condition == condition) return e.net;
  }
  throw ProtocolError("unknown condition '" + std::string(condition) + "' for " +
                      std::string(activity_name(activity)));
}

// ---------------------------------------------------------------------------
// Protocols
// ---------------------------------------------------------------------------

Protocol Protocol::full(std::uint64_t seed, double segment_s) {
  std::mt19937_64 rng(splitmix64(seed ^ 0x70726f746f636f6cULL));
  Protocol p;
  for (int session : {1, 2}) {
    SessionPlan plan{session, {}};
    for (Activity a : {Activity::walk, Activity::incline, Activity::backward, Activity::run, Activity::cycle,
                       Activity::stairs}) {
      if (session_of(a) != session) continue;
      std::vector<std::string_view> conds(conditions_for(a).begin(), conditions_for(a).end());
      std::shuffle(conds.begin(), conds.end(), rng);
      plan.steps.push_back({Activity::stand, std::string(kRestCondition), segment_s});
      for (auto c : conds) plan.steps.push_back({a, std::string(c), segment_s});
      plan.steps.push_back({Activity::sit, std::string(kRestCondition), segment_s});
    }
    p.sessions.push_back(std::move(plan));
  }
  return p;
}

Protocol Protocol::trials(const std::vector<std::vector<ConditionKey>>& conditions, double segment_s, int session) {
  SessionPlan plan{session, {}};
  for (const auto& trial : conditions) {
    plan.steps.push_back({Activity::stand, std::string(kRestCondition), segment_s});
    for (const auto& k : trial) {
      (void)oracle_ee(k.activity, k.condition);
      plan.steps.push_back({k.activity, k.condition, segment_s});
    }
    plan.steps.push_back({Activity::sit, std::string(kRestCondition), segment_s});
  }
  Protocol p;
  p.sessions.push_back(std::move(plan));
  return p;
}

std::size_t Protocol::segment_count() const {
  std::size_t n = 0;
  for (const auto& s : sessions) n += s.steps.size();
  return n;
}

// ---------------------------------------------------------------------------
// Profiles
// ---------------------------------------------------------------------------

SubjectProfile SubjectProfile::random(std::uint64_t seed, int subject_id, double ee_noise_sd) {
  std::mt19937_64 rng(splitmix64(seed));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto between = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

  SubjectProfile p;
  p.seed = seed;
  p.subject_id = subject_id;
  p.body_mass_kg = between(55.0, 90.0);
  p.rest_gross_ee = between(1.2, 1.6);
  p.ee_noise_sd = ee_noise_sd;
  p.mv_gain = between(7.0, 9.5);
  p.mv_lag_s = between(8.0, 12.0);
  p.hr_lag_s = between(25.0, 35.0);
  p.bf_lag_s = between(15.0, 25.0);
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    p.channels[c] = {between(0.85, 1.15), between(-0.05, 0.05), 0.0};
  }
  auto set_noise = [&](ChannelId c, double sd) { p.channels[idx(c)].noise_sd = sd; };
  for (auto c : {ChannelId::waist_acc, ChannelId::chest_acc, ChannelId::left_ankle_acc, ChannelId::right_ankle_acc,
                 ChannelId::left_wrist_acc, ChannelId::right_wrist_acc}) {
    set_noise(c, 0.03);
  }
  set_noise(ChannelId::left_wrist_eda, 0.02);
  set_noise(ChannelId::right_wrist_eda, 0.02);
  set_noise(ChannelId::left_wrist_temp, 0.02);
  set_noise(ChannelId::right_wrist_temp, 0.02);
  set_noise(ChannelId::emg_left, 0.005);
  set_noise(ChannelId::emg_right, 0.005);
  set_noise(ChannelId::heart_rate, 2.0);
  set_noise(ChannelId::spo2, 0.3);
  set_noise(ChannelId::breath_frequency, 1.0);
  set_noise(ChannelId::minute_ventilation, 1.0);
  // Heart rate and breathing offsets are on their physiological scale.
  p.channels[idx(ChannelId::heart_rate)].offset = between(-8.0, 8.0);
  p.channels[idx(ChannelId::breath_frequency)].offset = between(-2.0, 2.0);
  p.channels[idx(ChannelId::minute_ventilation)].offset = between(-1.0, 1.0);
  return p;
}

SubjectProfile SubjectProfile::noiseless(std::uint64_t seed, int subject_id) {
  auto p = random(seed, subject_id, 0.0);
  p.breath_jitter = 0.0;
  for (auto& c : p.channels) c.noise_sd = 0.0;
  return p;
}

SubjectProfile SubjectProfile::learnability(std::uint64_t seed, int subject_id, double ee_noise_sd) {
  auto p = random(seed, subject_id, ee_noise_sd);
  p.rest_gross_ee = 1.4;
  p.mv_gain = 8.0;
  p.ee_kinetics_s = 30.0;
  p.mv_lag_s = 0.0;
  p.channels[idx(ChannelId::minute_ventilation)] = {1.0, 0.0, 0.0};
  return p;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

RawSubject generate_raw_subject(const SubjectProfile& profile, const Protocol& protocol) {
  if (!(profile.body_mass_kg > 0.0)) throw DomainError("body mass must be positive");
  RawSubject raw;
  raw.subject_id = profile.subject_id;
  raw.body_mass_kg = profile.body_mass_kg;

  std::mt19937_64 rng(splitmix64(profile.seed ^ 0x6272656174687321ULL));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> phase_dist(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  const double eda_phase = two_pi * phase_dist(rng);
  const double temp_phase = two_pi * phase_dist(rng);
  const double brockway_per_lpm = (kBrockwayO2 + kBrockwayCO2 * profile.rer) * 1000.0 / 60.0;

  for (const auto& plan : protocol.sessions) {
    RawSession session;
    session.session = plan.session;
    const double rest = profile.rest_gross_ee;
    Lag ee_level(profile.ee_kinetics_s, rest), mv(profile.mv_lag_s, rest), hr(profile.hr_lag_s, 0.0), bf(profile.bf_lag_s, 0.0);
    Lag eda_lag(120.0, 0.0), temp_lag(300.0, 0.0);
    double t_prev = 0.0;
    double start = 0.0;

    for (const auto& step : plan.steps) {
      if (!(step.duration_s > 0.0)) throw ProtocolError("protocol step needs a positive duration");
      const double net = oracle_ee(step.activity, step.condition);
      const double level = rest + net;
      const double end = start + step.duration_s;
      session.segments.push_back({step.activity, step.condition, start, end});

      const auto weights = motion_weights(step.activity);
      const double amp_scale = 0.6 + 0.1 * net;
      const double f = cadence_hz(step.activity, net);
      const double leg = std::max(weights[2], weights[3]);

      double t = start;
      while (t < end) {
        const double dt = t - t_prev;
        t_prev = t;
        const double gross = ee_level.step(level, dt);
        const double mv_state = mv.step(gross, dt);
        const double hr_state = hr.step(net, dt);
        const double bf_state = bf.step(net, dt);
        const double eda_state = eda_lag.step(net, dt);
        const double temp_state = temp_lag.step(net, dt);

        std::array<double, kNumChannels> base{};
        const double locations[6] = {
            weights[0] * std::abs(std::sin(std::numbers::pi * f * t)),
            weights[1] * std::abs(std::sin(std::numbers::pi * f * t + 0.3)),
            weights[2] * std::abs(std::sin(std::numbers::pi * f * t)),
            weights[3] * std::abs(std::sin(std::numbers::pi * f * t + std::numbers::pi / 2)),
            weights[4] * std::abs(std::sin(std::numbers::pi * f * t + std::numbers::pi / 2)),
            weights[5] * std::abs(std::sin(std::numbers::pi * f * t)),
        };
        base[idx(ChannelId::waist_acc)] = 1.0 + amp_scale * locations[0];
        base[idx(ChannelId::chest_acc)] = 1.0 + amp_scale * locations[1];
        base[idx(ChannelId::left_ankle_acc)] = 1.0 + amp_scale * locations[2];
        base[idx(ChannelId::right_ankle_acc)] = 1.0 + amp_scale * locations[3];
        base[idx(ChannelId::left_wrist_acc)] = 1.0 + amp_scale * locations[4];
        base[idx(ChannelId::right_wrist_acc)] = 1.0 + amp_scale * locations[5];
        base[idx(ChannelId::left_wrist_eda)] = 2.0 + 0.3 * std::sin(two_pi * t / 1800.0 + eda_phase) + 0.05 * eda_state;
        base[idx(ChannelId::right_wrist_eda)] = 2.1 + 0.3 * std::sin(two_pi * t / 1800.0 + eda_phase + 0.4) + 0.05 * eda_state;
        base[idx(ChannelId::left_wrist_temp)] = 33.0 + 0.5 * std::sin(two_pi * t / 3600.0 + temp_phase) + 0.05 * temp_state;
        base[idx(ChannelId::right_wrist_temp)] = 33.2 + 0.5 * std::sin(two_pi * t / 3600.0 + temp_phase + 0.2) + 0.05 * temp_state;
        base[idx(ChannelId::emg_left)] = 0.02 + 0.08 * leg * amp_scale * std::abs(std::sin(std::numbers::pi * f * t));
        base[idx(ChannelId::emg_right)] = 0.02 + 0.08 * leg * amp_scale * std::abs(std::sin(std::numbers::pi * f * t + std::numbers::pi / 2));
        base[idx(ChannelId::heart_rate)] = 65.0 + 9.0 * hr_state;
        base[idx(ChannelId::spo2)] = 97.5 - 0.1 * hr_state;
        base[idx(ChannelId::breath_frequency)] = 12.0 + 2.2 * bf_state;
        base[idx(ChannelId::minute_ventilation)] = profile.mv_gain * mv_state;

        session.t_sec.push_back(t);
        for (std::size_t c = 0; c < kNumChannels; ++c) {
          const auto& m = profile.channels[c];
          double v = m.gain * base[c] + m.offset;
          if (m.noise_sd > 0.0) v += m.noise_sd * gauss(rng);
          session.channels[c].push_back(v);
        }

        double ee = gross;
        if (profile.ee_noise_sd > 0.0) ee = std::max(0.0, ee + profile.ee_noise_sd * gauss(rng));
        const double vo2 = ee * profile.body_mass_kg / brockway_per_lpm;
        session.metabolic_t_sec.push_back(t);
        session.vo2_lpm.push_back(vo2);
        session.vco2_lpm.push_back(profile.rer * vo2);

        const double breaths_per_min = std::max(6.0, 12.0 + 2.2 * bf_state);
        double interval = 60.0 / breaths_per_min;
        if (profile.breath_jitter > 0.0) interval *= 1.0 + profile.breath_jitter * unit(rng);
        t += interval;
      }
      start = end;
    }
    raw.sessions.push_back(std::move(session));
  }
  return raw;
}

SubjectRecording generate_subject(const SubjectProfile& profile, const Protocol& protocol,
                                  const IngestOptions& options) {
  return ingest_subject(generate_raw_subject(profile, protocol), options);
}

OracleTrace oracle_trace(const SubjectProfile& profile, const Protocol& protocol, double sample_rate_hz) {
  OracleTrace trace;
  for (const auto& plan : protocol.sessions) {
    for (const auto& step : plan.steps) {
      const double net = oracle_ee(step.activity, step.condition);
      const auto n = static_cast<std::size_t>(std::llround(step.duration_s * sample_rate_hz));
      trace.net.insert(trace.net.end(), n, net);
      trace.gross.insert(trace.gross.end(), n, profile.rest_gross_ee + net);
    }
  }
  return trace;
}

std::vector<SubjectProfile> synthetic_profiles(const SynthDatasetOptions& options) {
  std::vector<SubjectProfile> profiles;
  for (std::size_t i = 0; i < options.n_subjects; ++i) {
    const std::uint64_t s = splitmix64(options.seed + 0x5bd1e995ULL * (i + 1));
    const int id = static_cast<int>(i + 1);
    switch (options.kind) {
      case SynthProfileKind::standard: profiles.push_back(SubjectProfile::random(s, id, options.ee_noise_sd)); break;
      case SynthProfileKind::noiseless: profiles.push_back(SubjectProfile::noiseless(s, id)); break;
      case SynthProfileKind::learnability:
        profiles.push_back(SubjectProfile::learnability(s, id, options.ee_noise_sd));
        break;
    }
  }
  return profiles;
}

Protocol synthetic_protocol(const SynthDatasetOptions& options, const SubjectProfile& profile) {
  if (options.trials.empty()) return Protocol::full(profile.seed, options.segment_s);
  return Protocol::trials(options.trials, options.segment_s);
}

std::vector<RawSubject> generate_raw_dataset(const SynthDatasetOptions& options) {
  std::vector<RawSubject> out;
  for (const auto& p : synthetic_profiles(options)) out.push_back(generate_raw_subject(p, synthetic_protocol(options, p)));
  return out;
}

}  // namespace eeb
