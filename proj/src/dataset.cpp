#include "eeb/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <json.hpp>

#include "eeb/csv.hpp"
#include "eeb/errors.hpp"
#include "eeb/metabolic.hpp"
#include "eeb/resample.hpp"

namespace fs = std::filesystem;

namespace eeb {
namespace {

// Parses "<prefix><int>" directory names; returns -1 when the name does not match.
int numbered_dir(const std::string& name, std::string_view prefix) {
  if (name.rfind(prefix, 0) != 0) return -1;
  int v = -1;
  auto tail = std::string_view(name).substr(prefix.size());
  auto [ptr, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), v);
  if (ec != std::errc{} || ptr != tail.data() + tail.size()) return -1;
  return v;
}

std::vector<std::pair<int, fs::path>> numbered_children(const fs::path& dir, std::string_view prefix) {
  std::vector<std::pair<int, fs::path>> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_directory()) continue;
    int k = numbered_dir(entry.path().filename().string(), prefix);
    if (k >= 0) out.emplace_back(k, entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void check_increasing(const std::vector<double>& t, const std::string& context) {
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (!(t[i] > t[i - 1])) {
      throw IngestionError(context + ": timestamps not strictly increasing at row " +
                           std::to_string(i + 1));
    }
  }
}

std::vector<double> numeric_column(const csv::Table& table, std::size_t col,
                                   const std::string& context) {
  std::vector<double> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) out.push_back(csv::to_double(row[col], context));
  return out;
}

RawSession read_session(const fs::path& dir, int session, const std::string& who) {
  RawSession s;
  s.session = session;
  const std::string ctx = who + " session " + std::to_string(session);

  const auto signals_path = dir / "signals.csv";
  const auto metabolic_path = dir / "metabolic.csv";
  const auto segments_path = dir / "segments.csv";
  for (const auto& p : {signals_path, metabolic_path, segments_path}) {
    if (!fs::exists(p)) throw IngestionError(ctx + ": missing file " + p.filename().string());
  }

  const auto signals = csv::read(signals_path);
  s.t_sec = numeric_column(signals, signals.column("t_sec", ctx + " signals.csv"), ctx);
  check_increasing(s.t_sec, ctx + " signals.csv");
  for (const auto& info : channel_catalog()) {
    std::size_t col = 0;
    try {
      col = signals.column(info.name, ctx);
    } catch (const IngestionError&) {
      throw IngestionError(ctx + ": missing channel '" + std::string(info.name) +
                           "' in signals.csv");
    }
    s.channels[static_cast<std::size_t>(info.id)] =
        numeric_column(signals, col, ctx + " channel " + std::string(info.name));
  }

  const auto metabolic = csv::read(metabolic_path);
  const std::string mctx = ctx + " metabolic.csv";
  s.metabolic_t_sec = numeric_column(metabolic, metabolic.column("t_sec", mctx), mctx);
  s.vo2_lpm = numeric_column(metabolic, metabolic.column("vo2_lpm", mctx), mctx);
  s.vco2_lpm = numeric_column(metabolic, metabolic.column("vco2_lpm", mctx), mctx);
  check_increasing(s.metabolic_t_sec, mctx);
  for (std::size_t i = 0; i < s.vo2_lpm.size(); ++i) {
    if (s.vo2_lpm[i] < 0.0 || s.vco2_lpm[i] < 0.0) {
      throw IngestionError(mctx + ": negative gas exchange at row " + std::to_string(i + 1));
    }
  }

  const auto segments = csv::read(segments_path);
  const std::string sctx = ctx + " segments.csv";
  const auto a_col = segments.column("activity", sctx);
  const auto c_col = segments.column("condition", sctx);
  const auto s_col = segments.column("start_sec", sctx);
  const auto e_col = segments.column("end_sec", sctx);
  for (const auto& row : segments.rows) {
    auto activity = find_activity(row[a_col]);
    if (!activity) throw IngestionError(sctx + ": unknown activity '" + row[a_col] + "'");
    if (!is_valid_condition(*activity, row[c_col])) {
      throw IngestionError(sctx + ": unknown condition '" + row[c_col] + "' for " + row[a_col]);
    }
    s.segments.push_back(RawSegment{*activity, row[c_col], csv::to_double(row[s_col], sctx),
                                    csv::to_double(row[e_col], sctx)});
  }
  return s;
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> SubjectRecording::session_ranges() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (i == 0 || segments[i - 1].session != segments[i].session) {
      out.emplace_back(segments[i].start_index, segments[i].end_index);
    } else {
      out.back().second = segments[i].end_index;
    }
  }
  return out;
}

SubjectRecording ingest_subject(const RawSubject& raw, const IngestOptions& options) {
  const std::string who = "subject " + std::to_string(raw.subject_id);
  if (!(raw.body_mass_kg > 0.0)) throw IngestionError(who + ": body mass must be positive");

  SubjectRecording rec;
  rec.subject_id = raw.subject_id;
  rec.body_mass_kg = raw.body_mass_kg;
  rec.sample_rate_hz = options.sample_rate_hz;

  auto sessions = raw.sessions;
  std::stable_sort(sessions.begin(), sessions.end(),
                   [](const RawSession& a, const RawSession& b) { return a.session < b.session; });

  int trial = -1;
  std::size_t cursor = 0;
  for (const auto& session : sessions) {
    const std::string ctx = who + " session " + std::to_string(session.session);
    for (const auto& ch : session.channels) {
      if (ch.size() != session.t_sec.size()) {
        throw IngestionError(ctx + ": channel length differs from timestamp count");
      }
    }
    for (const auto& seg : session.segments) {
      const std::size_t n = resampled_length(seg.start_sec, seg.end_sec, options.sample_rate_hz);
      const std::string segctx = ctx + " segment " + std::string(activity_name(seg.activity)) +
                                 "/" + seg.condition;
      try {
        for (const auto& info : channel_catalog()) {
          const auto c = static_cast<std::size_t>(info.id);
          auto values = resample_breath_signals(session.t_sec, session.channels[c], seg.start_sec,
                                                seg.end_sec, options.sample_rate_hz);
          rec.channels[c].insert(rec.channels[c].end(), values.begin(), values.end());
        }
        auto vo2 = resample_breath_signals(session.metabolic_t_sec, session.vo2_lpm, seg.start_sec,
                                           seg.end_sec, options.sample_rate_hz);
        auto vco2 = resample_breath_signals(session.metabolic_t_sec, session.vco2_lpm,
                                            seg.start_sec, seg.end_sec, options.sample_rate_hz);
        rec.metabolic.vo2.insert(rec.metabolic.vo2.end(), vo2.begin(), vo2.end());
        rec.metabolic.vco2.insert(rec.metabolic.vco2.end(), vco2.begin(), vco2.end());
      } catch (const ProtocolError& e) {
        throw IngestionError(segctx + ": " + e.what());
      }

      if (seg.activity == Activity::stand) ++trial;
      ActivitySegment out;
      out.activity = seg.activity;
      out.condition = seg.condition;
      out.start_index = cursor;
      out.end_index = cursor + n;
      out.session = session.session;
      out.trial = trial;
      rec.segments.push_back(std::move(out));
      cursor += n;
    }
  }

  for (const auto& ch : rec.channels) {
    if (ch.size() != cursor) throw IngestionError(who + ": channel length mismatch after resampling");
  }
  if (rec.metabolic.vo2.size() != cursor || rec.metabolic.vco2.size() != cursor) {
    throw IngestionError(who + ": metabolic length mismatch after resampling");
  }
  try {
    validate_segments(rec.segments);
  } catch (const ProtocolError& e) {
    throw IngestionError(who + ": " + e.what());
  }

  rec.metabolic.timestamps.resize(cursor);
  rec.ee_measured.resize(cursor);
  for (std::size_t i = 0; i < cursor; ++i) {
    rec.metabolic.timestamps[i] = static_cast<double>(i) / options.sample_rate_hz;
    rec.ee_measured[i] = normalize_by_mass(
        compute_brockway_power(rec.metabolic.vo2[i], rec.metabolic.vco2[i]), rec.body_mass_kg);
  }

  try {
    derive_ee_target(rec, options.target_mode);
  } catch (const ProtocolError& e) {
    throw IngestionError(who + ": " + e.what());
  }
  return rec;
}

std::vector<double> standing_baselines(const SubjectRecording& recording) {
  int n_trials = 0;
  for (const auto& seg : recording.segments) n_trials = std::max(n_trials, seg.trial + 1);
  std::vector<double> baselines(static_cast<std::size_t>(n_trials), std::nan(""));
  for (const auto& seg : recording.segments) {
    if (seg.activity != Activity::stand) continue;
    baselines[static_cast<std::size_t>(seg.trial)] =
        steady_state_ee(seg, recording.ee_measured, recording.sample_rate_hz);
  }
  return baselines;
}

void derive_ee_target(SubjectRecording& recording, TargetMode mode) {
  const auto baselines = standing_baselines(recording);
  std::vector<double> target(recording.length(), 0.0);
  for (const auto& seg : recording.segments) {
    if (seg.trial < 0) {
      throw ProtocolError("segment '" + std::string(activity_name(seg.activity)) +
                          "' precedes the first standing baseline");
    }
    const double baseline = baselines[static_cast<std::size_t>(seg.trial)];
    if (mode == TargetMode::steady_state) {
      const double steady = steady_state_ee(seg, recording.ee_measured, recording.sample_rate_hz);
      std::fill(target.begin() + static_cast<std::ptrdiff_t>(seg.start_index),
                target.begin() + static_cast<std::ptrdiff_t>(seg.end_index),
                net_cost(steady, baseline));
    } else {
      for (std::size_t i = seg.start_index; i < seg.end_index; ++i) {
        target[i] = net_cost(recording.ee_measured[i], baseline);
      }
    }
  }
  recording.ee_target = std::move(target);
}

RawSubject read_raw_subject(const fs::path& subject_dir) {
  RawSubject subject;
  const std::string dirname = subject_dir.filename().string();
  subject.subject_id = numbered_dir(dirname, "subject_");
  const std::string who = "subject " + std::to_string(subject.subject_id);

  const auto meta_path = subject_dir / "subject.json";
  if (!fs::exists(meta_path)) throw IngestionError(who + ": missing subject.json");
  std::ifstream meta_in(meta_path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_in);
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(who + ": malformed subject.json: " + e.what());
  }
  if (!meta.contains("body_mass_kg") || !meta["body_mass_kg"].is_number()) {
    throw IngestionError(who + ": subject.json lacks numeric body_mass_kg");
  }
  subject.body_mass_kg = meta["body_mass_kg"].get<double>();

  for (const auto& [k, path] : numbered_children(subject_dir, "session_")) {
    subject.sessions.push_back(read_session(path, k, who));
  }
  if (subject.sessions.empty()) throw IngestionError(who + ": no session directories");
  return subject;
}

void write_raw_subject(const fs::path& root, const RawSubject& subject) {
  const auto dir = root / ("subject_" + std::to_string(subject.subject_id));
  fs::create_directories(dir);
  {
    nlohmann::json meta;
    meta["subject_id"] = subject.subject_id;
    meta["body_mass_kg"] = subject.body_mass_kg;
    std::ofstream(dir / "subject.json") << meta.dump(2) << '\n';
  }
  for (const auto& s : subject.sessions) {
    const auto sdir = dir / ("session_" + std::to_string(s.session));
    fs::create_directories(sdir);

    std::ofstream sig(sdir / "signals.csv");
    sig << "t_sec";
    for (const auto& info : channel_catalog()) sig << ',' << info.name;
    sig << '\n';
    for (std::size_t i = 0; i < s.t_sec.size(); ++i) {
      sig << csv::format(s.t_sec[i]);
      for (const auto& ch : s.channels) sig << ',' << csv::format(ch[i]);
      sig << '\n';
    }

    std::ofstream met(sdir / "metabolic.csv");
    met << "t_sec,vo2_lpm,vco2_lpm\n";
    for (std::size_t i = 0; i < s.metabolic_t_sec.size(); ++i) {
      met << csv::format(s.metabolic_t_sec[i]) << ',' << csv::format(s.vo2_lpm[i]) << ','
          << csv::format(s.vco2_lpm[i]) << '\n';
    }

    std::ofstream seg(sdir / "segments.csv");
    seg << "activity,condition,start_sec,end_sec\n";
    for (const auto& r : s.segments) {
      seg << activity_name(r.activity) << ',' << csv::escape(r.condition) << ','
          << csv::format(r.start_sec) << ',' << csv::format(r.end_sec) << '\n';
    }
  }
}

std::vector<RawSubject> read_raw_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw IngestionError("dataset root not found: " + root.string());
  std::vector<RawSubject> out;
  for (const auto& [k, path] : numbered_children(root, "subject_")) {
    out.push_back(read_raw_subject(path));
  }
  if (out.empty()) throw IngestionError("no subject_<k> directories under " + root.string());
  return out;
}

std::vector<SubjectRecording> load_dataset(const fs::path& root, const IngestOptions& options) {
  std::vector<SubjectRecording> out;
  for (const auto& raw : read_raw_dataset(root)) out.push_back(ingest_subject(raw, options));
  return out;
}

ChannelMatrix select_signals(const SubjectRecording& recording, const SignalSelection& selection) {
  if (selection.channels.empty()) throw SelectionError("empty signal selection");
  auto order = selection.channels;
  std::sort(order.begin(), order.end());
  ChannelMatrix m;
  m.channel_order = order;
  m.values.resize(static_cast<Eigen::Index>(recording.length()),
                  static_cast<Eigen::Index>(order.size()));
  for (std::size_t j = 0; j < order.size(); ++j) {
    const auto& ch = recording.channels[static_cast<std::size_t>(order[j])];
    if (ch.size() != recording.length()) {
      throw SelectionError("channel '" + std::string(channel_info(order[j]).name) +
                           "' length differs from recording length");
    }
    for (std::size_t i = 0; i < ch.size(); ++i) {
      m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = ch[i];
    }
  }
  return m;
}

}  // namespace eeb
