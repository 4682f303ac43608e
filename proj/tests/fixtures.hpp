#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "eeb/dataset.hpp"
#include "eeb/synthgen.hpp"

namespace fixtures {

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("eeb_" + tag + "_" + std::to_string(rd()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// One session with a standing segment followed by `exercise`, both `seconds` long,
// at 1 Hz. Gas exchange is constant per segment; channels carry the sample index.
inline eeb::RawSubject constant_gas_subject(double mass, double stand_vo2, double stand_vco2, double ex_vo2,
                                            double ex_vco2, double seconds = 360.0,
                                            eeb::Activity exercise = eeb::Activity::walk,
                                            const std::string& condition = "0.9m/s") {
  eeb::RawSubject s;
  s.subject_id = 1;
  s.body_mass_kg = mass;
  eeb::RawSession sess;
  sess.session = 1;
  const auto n = static_cast<std::size_t>(2 * seconds);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i);
    sess.t_sec.push_back(t);
    for (auto& ch : sess.channels) ch.push_back(t);
    sess.metabolic_t_sec.push_back(t);
    const bool stand = t < seconds;
    sess.vo2_lpm.push_back(stand ? stand_vo2 : ex_vo2);
    sess.vco2_lpm.push_back(stand ? stand_vco2 : ex_vco2);
  }
  sess.segments.push_back({eeb::Activity::stand, std::string(eeb::kRestCondition), 0.0, seconds});
  sess.segments.push_back({exercise, condition, seconds, 2 * seconds});
  s.sessions.push_back(std::move(sess));
  return s;
}

// Compact trial (stand, three walking speeds, one running speed, sit).
inline std::vector<std::vector<eeb::ConditionKey>> compact_trials() {
  using eeb::Activity;
  return {{{Activity::walk, "0.6m/s"}, {Activity::walk, "0.9m/s"}, {Activity::walk, "1.2m/s"},
           {Activity::run, "1.8m/s"}}};
}

inline std::vector<eeb::SubjectRecording> small_dataset(std::size_t n_subjects, std::uint64_t seed,
                                                        eeb::SynthProfileKind kind = eeb::SynthProfileKind::standard,
                                                        eeb::TargetMode mode = eeb::TargetMode::steady_state,
                                                        double segment_s = 240.0) {
  eeb::SynthDatasetOptions o;
  o.seed = seed;
  o.n_subjects = n_subjects;
  o.kind = kind;
  o.segment_s = segment_s;
  o.trials = compact_trials();
  eeb::IngestOptions ingest;
  ingest.target_mode = mode;
  std::vector<eeb::SubjectRecording> out;
  for (const auto& raw : eeb::generate_raw_dataset(o)) out.push_back(eeb::ingest_subject(raw, ingest));
  return out;
}

}  // namespace fixtures
