#include "eeb/windowing.hpp"

#include <algorithm>
#include <cmath>

#include "eeb/errors.hpp"

namespace eeb {
namespace {

// Index of the segment containing `sample`, or -1.
int segment_of(std::span<const ActivitySegment> segments, std::size_t sample) {
  auto it = std::upper_bound(segments.begin(), segments.end(), sample,
                             [](std::size_t s, const ActivitySegment& seg) { return s < seg.start_index; });
  if (it == segments.begin()) return -1;
  --it;
  if (sample >= it->end_index) return -1;
  return static_cast<int>(it - segments.begin());
}

}  // namespace

Eigen::Map<const RowMatrix> WindowedDataset::features(std::size_t i) const {
  const auto& w = windows.at(i);
  const auto& src = *sources[w.source];
  return {src.data() + static_cast<Eigen::Index>(w.row) * src.cols(),
          static_cast<Eigen::Index>(window_len), src.cols()};
}

std::span<const double> WindowedDataset::step_targets(std::size_t i) const {
  const auto& w = windows.at(i);
  return std::span<const double>(*source_targets[w.source]).subspan(w.row, window_len);
}

WindowedDataset WindowedDataset::subset(std::span<const std::size_t> indices) const {
  WindowedDataset out;
  out.window_len = window_len;
  out.channel_order = channel_order;
  out.sources = sources;
  out.source_targets = source_targets;
  out.too_short = too_short;
  out.windows.reserve(indices.size());
  for (auto i : indices) out.windows.push_back(windows.at(i));
  return out;
}

RowMatrix fuse_channels(std::span<const std::vector<double>> sequences) {
  if (sequences.empty()) throw FusionError("no channels to fuse");
  const std::size_t n = sequences.front().size();
  for (const auto& s : sequences) {
    if (s.size() != n) throw FusionError("channel sequences differ in length");
  }
  RowMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(sequences.size()));
  for (std::size_t j = 0; j < sequences.size(); ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = sequences[j][i];
    }
  }
  return m;
}

WindowedDataset make_windows(const ChannelMatrix& matrix, std::span<const double> targets,
                             std::span<const ActivitySegment> segments, std::size_t window_len,
                             std::size_t stride, int subject_id, std::size_t row_offset) {
  if (window_len == 0) throw ConfigError("window length must be positive");
  if (stride == 0) throw ConfigError("stride must be at least 1");
  const auto rows = static_cast<std::size_t>(matrix.values.rows());
  if (targets.size() != rows) throw ContractError("target length differs from matrix rows");
  if (!matrix.values.allFinite()) throw ContractError("channel matrix holds non-finite values");

  WindowedDataset ds;
  ds.window_len = window_len;
  ds.channel_order = matrix.channel_order;
  if (rows < window_len) {
    ds.too_short = true;
    return ds;
  }
  ds.sources.push_back(std::make_shared<const RowMatrix>(matrix.values));
  ds.source_targets.push_back(
      std::make_shared<const std::vector<double>>(targets.begin(), targets.end()));

  const std::size_t count = (rows - window_len) / stride + 1;
  ds.windows.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t row = k * stride;
    const std::size_t first = row + row_offset;
    const std::size_t last = first + window_len - 1;
    Window w;
    w.source = 0;
    w.row = row;
    w.sample_start = first;
    w.target = targets[row + window_len - 1];
    w.subject_id = subject_id;
    const int seg_last = segment_of(segments, last);
    const int seg_first = segment_of(segments, first);
    w.segment_index = seg_last;
    if (seg_last >= 0) {
      w.activity = segments[static_cast<std::size_t>(seg_last)].activity;
      w.condition = segments[static_cast<std::size_t>(seg_last)].condition;
    }
    w.spans_transition = seg_first != seg_last;
    ds.windows.push_back(std::move(w));
  }
  return ds;
}

void append(WindowedDataset& a, const WindowedDataset& b) {
  if (a.window_len == 0 && a.sources.empty() && a.windows.empty()) {
    a.window_len = b.window_len;
    a.channel_order = b.channel_order;
  }
  if (a.window_len != b.window_len || a.channel_order != b.channel_order) {
    throw ContractError("cannot append windowed datasets with different shapes");
  }
  const std::size_t offset = a.sources.size();
  a.sources.insert(a.sources.end(), b.sources.begin(), b.sources.end());
  a.source_targets.insert(a.source_targets.end(), b.source_targets.begin(), b.source_targets.end());
  a.windows.reserve(a.windows.size() + b.windows.size());
  for (auto w : b.windows) {
    w.source += offset;
    a.windows.push_back(std::move(w));
  }
  a.too_short = a.too_short || b.too_short;
}

WindowedDataset window_recording(const SubjectRecording& recording,
                                 const SignalSelection& selection, std::size_t window_len,
                                 std::size_t stride) {
  if (!recording.has_target()) throw ContractError("recording has no derived EE target");
  const auto full = select_signals(recording, selection);
  WindowedDataset out;
  out.window_len = window_len;
  out.channel_order = full.channel_order;
  for (const auto& [begin, end] : recording.session_ranges()) {
    ChannelMatrix part;
    part.channel_order = full.channel_order;
    part.values = full.values.middleRows(static_cast<Eigen::Index>(begin),
                                         static_cast<Eigen::Index>(end - begin));
    auto targets = std::span<const double>(recording.ee_target).subspan(begin, end - begin);
    append(out, make_windows(part, targets, recording.segments, window_len, stride,
                             recording.subject_id, begin));
  }
  return out;
}

Scaler fit_scaler(const WindowedDataset& train) {
  const std::size_t c = train.n_channels();
  Scaler s;
  s.mean.assign(c, 0.0);
  s.stddev.assign(c, 1.0);
  if (train.empty()) return s;

  const double n = static_cast<double>(train.size() * train.window_len);
  std::vector<double> sum(c, 0.0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto f = train.features(i);
    for (std::size_t j = 0; j < c; ++j) sum[j] += f.col(static_cast<Eigen::Index>(j)).sum();
  }
  for (std::size_t j = 0; j < c; ++j) s.mean[j] = sum[j] / n;
  // Two-pass population variance.
  std::vector<double> sq(c, 0.0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto f = train.features(i);
    for (std::size_t j = 0; j < c; ++j) {
      sq[j] += (f.col(static_cast<Eigen::Index>(j)).array() - s.mean[j]).square().sum();
    }
  }
  for (std::size_t j = 0; j < c; ++j) s.stddev[j] = std::max(std::sqrt(sq[j] / n), kScalerStdFloor);
  return s;
}

WindowedDataset apply_scaler(const Scaler& scaler, const WindowedDataset& data) {
  if (scaler.mean.size() != data.n_channels() || scaler.stddev.size() != data.n_channels()) {
    throw ContractError("scaler channel count differs from dataset");
  }
  WindowedDataset out = data;
  for (auto& src : out.sources) {
    auto scaled = std::make_shared<RowMatrix>(*src);
    for (Eigen::Index j = 0; j < scaled->cols(); ++j) {
      const auto sj = static_cast<std::size_t>(j);
      scaled->col(j) = (scaled->col(j).array() - scaler.mean[sj]) / scaler.stddev[sj];
    }
    src = std::move(scaled);
  }
  return out;
}

}  // namespace eeb
