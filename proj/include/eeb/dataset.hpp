#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eeb/activity.hpp"
#include "eeb/channels.hpp"
#include "eeb/matrix.hpp"

namespace eeb {

// ---------------------------------------------------------------------------
// Raw (on-disk) representation: breath-by-breath rows per session.
// ---------------------------------------------------------------------------

struct RawSegment {
  Activity activity = Activity::stand;
  std::string condition{kRestCondition};
  double start_sec = 0.0;
  double end_sec = 0.0;
};

struct RawSession {
  int session = 1;
  std::vector<double> t_sec;                                 // signals.csv timestamps
  std::array<std::vector<double>, kNumChannels> channels;    // signals.csv columns
  std::vector<double> metabolic_t_sec;                       // metabolic.csv timestamps
  std::vector<double> vo2_lpm;
  std::vector<double> vco2_lpm;
  std::vector<RawSegment> segments;
};

struct RawSubject {
  int subject_id = 1;
  double body_mass_kg = 70.0;
  std::vector<RawSession> sessions;
};

// ---------------------------------------------------------------------------
// Ingested representation: uniform samples, derived targets.
// ---------------------------------------------------------------------------

// Uniformly resampled gas exchange aligned with the channel samples.
struct MetabolicRecord {
  std::vector<double> timestamps;
  std::vector<double> vo2;
  std::vector<double> vco2;
};

enum class TargetMode {
  steady_state,  // per segment: mean of final 3 min minus the trial's standing baseline
  per_sample,    // per sample: measured EE minus the trial's standing baseline
};

struct SubjectRecording {
  int subject_id = 0;
  double body_mass_kg = 0.0;
  double sample_rate_hz = 1.0;
  std::array<std::vector<double>, kNumChannels> channels;
  MetabolicRecord metabolic;
  std::vector<ActivitySegment> segments;
  std::vector<double> ee_measured;  // gross Brockway EE per sample, W/kg
  std::vector<double> ee_target;    // net target per sample, W/kg; empty until derived

  [[nodiscard]] std::size_t length() const noexcept { return ee_measured.size(); }
  [[nodiscard]] bool has_target() const noexcept { return !ee_target.empty(); }

  // [begin, end) sample ranges of each recording session, in order.
  [[nodiscard]] std::vector<std::pair<std::size_t, std::size_t>> session_ranges() const;
};

struct IngestOptions {
  double sample_rate_hz = 1.0;
  TargetMode target_mode = TargetMode::steady_state;
};

// Resamples every channel and gas-exchange series per segment, computes the
// mass-normalised Brockway series and derives the net EE target.
SubjectRecording ingest_subject(const RawSubject& raw, const IngestOptions& options = {});

// Fills recording.ee_target from recording.ee_measured and its segments.
void derive_ee_target(SubjectRecording& recording, TargetMode mode);

// Standing baseline (steady-state EE of the stand segment) for each trial index.
std::vector<double> standing_baselines(const SubjectRecording& recording);

// ---------------------------------------------------------------------------
// Disk I/O for the dataset tree:
//   <root>/subject_<k>/subject.json
//   <root>/subject_<k>/session_<s>/{signals,metabolic,segments}.csv
// ---------------------------------------------------------------------------

RawSubject read_raw_subject(const std::filesystem::path& subject_dir);
void write_raw_subject(const std::filesystem::path& root, const RawSubject& subject);

std::vector<RawSubject> read_raw_dataset(const std::filesystem::path& root);

std::vector<SubjectRecording> load_dataset(const std::filesystem::path& root,
                                           const IngestOptions& options = {});

// ---------------------------------------------------------------------------
// Signal selection
// ---------------------------------------------------------------------------

struct ChannelMatrix {
  RowMatrix values;  // [samples x channels]
  std::vector<ChannelId> channel_order;
};

ChannelMatrix select_signals(const SubjectRecording& recording, const SignalSelection& selection);

}  // namespace eeb
