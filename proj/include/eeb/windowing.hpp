#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "eeb/activity.hpp"
#include "eeb/channels.hpp"
#include "eeb/dataset.hpp"
#include "eeb/matrix.hpp"

namespace eeb {

// Provenance and target of one fixed-length window. The features live in the
// owning dataset's source matrix at rows [row, row + window_len).
struct Window {
  std::size_t source = 0;        // index into WindowedDataset::sources
  std::size_t row = 0;           // first row inside the source matrix
  std::size_t sample_start = 0;  // first sample index in the subject recording
  double target = 0.0;           // target at the final time step
  int subject_id = 0;
  Activity activity = Activity::stand;
  std::string condition;
  int segment_index = -1;  // segment containing the final time step
  bool spans_transition = false;
};

// Per-channel z-score statistics.
struct Scaler {
  std::vector<double> mean;
  std::vector<double> stddev;
};

inline constexpr double kScalerStdFloor = 1e-8;

struct WindowedDataset {
  std::size_t window_len = 0;
  std::vector<ChannelId> channel_order;
  std::vector<std::shared_ptr<const RowMatrix>> sources;
  std::vector<std::shared_ptr<const std::vector<double>>> source_targets;
  std::vector<Window> windows;
  bool too_short = false;  // set when a series was shorter than window_len

  [[nodiscard]] std::size_t size() const noexcept { return windows.size(); }
  [[nodiscard]] bool empty() const noexcept { return windows.empty(); }
  [[nodiscard]] std::size_t n_channels() const noexcept { return channel_order.size(); }

  [[nodiscard]] Eigen::Map<const RowMatrix> features(std::size_t i) const;
  // Per-step target sequence aligned with features(i).
  [[nodiscard]] std::span<const double> step_targets(std::size_t i) const;

  // Copies of the listed windows sharing the same sources.
  [[nodiscard]] WindowedDataset subset(std::span<const std::size_t> indices) const;
};

// Column-stacks equally long channel sequences. Throws FusionError on length mismatch.
RowMatrix fuse_channels(std::span<const std::vector<double>> sequences);

// Slides a window of `window_len` rows with step `stride` over `matrix`. Row r of the
// matrix corresponds to sample r + row_offset of the recording the segments index.
WindowedDataset make_windows(const ChannelMatrix& matrix, std::span<const double> targets,
                             std::span<const ActivitySegment> segments, std::size_t window_len,
                             std::size_t stride, int subject_id = 0, std::size_t row_offset = 0);

// Windows every session of a recording separately so no window straddles sessions.
WindowedDataset window_recording(const SubjectRecording& recording,
                                 const SignalSelection& selection, std::size_t window_len,
                                 std::size_t stride);

// Appends b's windows to a; both must share window_len and channel_order.
void append(WindowedDataset& a, const WindowedDataset& b);

Scaler fit_scaler(const WindowedDataset& train);

WindowedDataset apply_scaler(const Scaler& scaler, const WindowedDataset& data);

}  // namespace eeb
