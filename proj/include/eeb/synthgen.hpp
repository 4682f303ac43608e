#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "eeb/activity.hpp"
#include "eeb/channels.hpp"
#include "eeb/dataset.hpp"

namespace eeb {

// Net metabolic cost of a protocol condition, W/kg. Rest conditions are 0.
// Throws ProtocolError for conditions outside the closed set.
double oracle_ee(Activity activity, std::string_view condition);

struct ProtocolStep {
  Activity activity = Activity::stand;
  std::string condition{kRestCondition};
  double duration_s = 360.0;
};

struct SessionPlan {
  int session = 1;
  std::vector<ProtocolStep> steps;
};

struct Protocol {
  std::vector<SessionPlan> sessions;

  // Every activity as one trial: stand, its conditions in seeded random order, sit.
  static Protocol full(std::uint64_t seed, double segment_s = 360.0);
  // One trial per list entry, bracketed by stand and sit, all in one session.
  static Protocol trials(const std::vector<std::vector<ConditionKey>>& conditions, double segment_s = 360.0,
                         int session = 1);

  [[nodiscard]] std::size_t segment_count() const;
};

struct ChannelModel {
  double gain = 1.0;
  double offset = 0.0;
  double noise_sd = 0.0;
};

struct SubjectProfile {
  std::uint64_t seed = 0;
  int subject_id = 1;
  double body_mass_kg = 70.0;
  double rest_gross_ee = 1.4;  // W/kg while sitting or standing
  double rer = 0.85;           // respiratory exchange ratio
  double ee_noise_sd = 0.0;    // Gaussian noise on per-breath EE, W/kg
  double mv_gain = 8.0;        // L/min per W/kg of gross EE
  double ee_kinetics_s = 0.0;  // first-order rise of EE towards each new level; 0: step change
  double mv_lag_s = 10.0;
  double hr_lag_s = 30.0;
  double bf_lag_s = 20.0;
  double breath_jitter = 0.1;  // relative jitter of the breath interval
  std::array<ChannelModel, kNumChannels> channels{};

  // Seeded per-subject gains, offsets and noise levels.
  static SubjectProfile random(std::uint64_t seed, int subject_id, double ee_noise_sd = 0.2);
  // Random profile with every noise source switched off.
  static SubjectProfile noiseless(std::uint64_t seed, int subject_id);
  // Shared, instantaneous and noise-free minute-ventilation map with EE on-kinetics,
  // so the target is linear in minute ventilation up to the EE noise.
  static SubjectProfile learnability(std::uint64_t seed, int subject_id, double ee_noise_sd = 0.2);
};

RawSubject generate_raw_subject(const SubjectProfile& profile, const Protocol& protocol);

SubjectRecording generate_subject(const SubjectProfile& profile, const Protocol& protocol,
                                  const IngestOptions& options = {});

// Noise-free net and gross EE per resampled sample, aligned with the ingested recording.
// Exact for profiles without EE on-kinetics.
struct OracleTrace {
  std::vector<double> net;
  std::vector<double> gross;
};
OracleTrace oracle_trace(const SubjectProfile& profile, const Protocol& protocol, double sample_rate_hz = 1.0);

enum class SynthProfileKind { standard, noiseless, learnability };

struct SynthDatasetOptions {
  std::uint64_t seed = 0;
  std::size_t n_subjects = 10;
  SynthProfileKind kind = SynthProfileKind::standard;
  double ee_noise_sd = 0.2;
  double segment_s = 360.0;
  // Empty: the full protocol per subject. Otherwise these trials for everyone.
  std::vector<std::vector<ConditionKey>> trials;
};

std::vector<SubjectProfile> synthetic_profiles(const SynthDatasetOptions& options);
Protocol synthetic_protocol(const SynthDatasetOptions& options, const SubjectProfile& profile);
std::vector<RawSubject> generate_raw_dataset(const SynthDatasetOptions& options);

}  // namespace eeb
