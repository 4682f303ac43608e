#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

// Minimal reverse-mode automatic differentiation over dense row-major double tensors.
// Every op records a closure that accumulates its output gradient into its inputs;
// backward() replays them in reverse topological order.
namespace eeb::ag {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  // Allocates (zeroed) gradient storage on first use.
  std::span<double> grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor parameter(Shape shape, std::vector<double> values);

  [[nodiscard]] bool defined() const noexcept { return node_ != nullptr; }
  [[nodiscard]] const Shape& shape() const { return node_->shape; }
  [[nodiscard]] std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  [[nodiscard]] std::size_t rank() const { return node_->shape.size(); }
  [[nodiscard]] std::size_t numel() const { return node_->value.size(); }
  [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }

  [[nodiscard]] std::span<const double> data() const { return node_->value; }
  [[nodiscard]] std::span<double> mutable_data() { return node_->value; }
  // Empty until a backward pass reached this tensor.
  [[nodiscard]] std::span<const double> grad() const { return node_->grad; }
  void zero_grad();

  [[nodiscard]] double item() const;
  [[nodiscard]] const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Seeds d(loss)/d(loss) = 1 and propagates to every reachable tensor requiring grad.
void backward(const Tensor& loss);

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// While alive, piecewise-linear ops (relu, max-pool) fold their active branch
// pattern into a hash so callers can tell whether two evaluations used the same
// linear piece. Used by finite-difference checks to skip kink crossings.
class KinkRecorder {
 public:
  KinkRecorder();
  ~KinkRecorder();
  KinkRecorder(const KinkRecorder&) = delete;
  KinkRecorder& operator=(const KinkRecorder&) = delete;
  [[nodiscard]] std::uint64_t signature() const;
};

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

// Same shape, or b's shape equal to the trailing dimensions of a (broadcast over leading).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);

// x [..., in] * W[out, in]^T + b[out] -> [..., out]; b may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// x [B, Cin, T], weight [Cout, Cin, K], bias [Cout] (may be undefined), zero padding
// of `pad` on both sides -> [B, Cout, T + 2*pad - K + 1].
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t pad);

// Non-overlapping max pooling along the last axis of [B, C, T]; T/k (floor) outputs.
Tensor max_pool1d(const Tensor& x, std::size_t k);

// Mean over the last axis: [B, C, T] -> [B, C].
Tensor global_avg_pool(const Tensor& x);

// [B, M, N] -> [B, N, M]
Tensor transpose12(const Tensor& x);

// Batched products: a [B, M, K] x b [B, K, N] -> [B, M, N].
Tensor bmm(const Tensor& a, const Tensor& b);
// a [B, M, K] x b[B, N, K]^T -> [B, M, N].
Tensor bmm_nt(const Tensor& a, const Tensor& b);

Tensor softmax_last(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  // When set, evaluation-mode calls also accumulate input moments (shifted by the
  // running mean) so population statistics can be re-estimated.
  bool accumulate = false;
  std::vector<double> acc_sum;
  std::vector<double> acc_sumsq;
  double acc_count = 0.0;
};

// x [B, C] or [B, C, L]; statistics over every axis except C. In training mode the
// batch statistics are used and the running estimates updated; otherwise the
// running estimates are used.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  bool training);

// Inverted dropout; identity when !training or p == 0.
Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng, bool training);

// Columns [start, start + len) of the last axis.
Tensor slice_last(const Tensor& x, std::size_t start, std::size_t len);

// x [B, T, D] -> [B, D] at time t.
Tensor select_step(const Tensor& x, std::size_t t);
// T tensors [B, D] -> [B, T, D].
Tensor stack_steps(const std::vector<Tensor>& steps);

// [B, T, H*dh] -> [B*H, T, dh] and back.
Tensor split_heads(const Tensor& x, std::size_t heads);
Tensor merge_heads(const Tensor& x, std::size_t heads);

// Mean squared error against a constant target of equal size; returns shape {1}.
Tensor mse_loss(const Tensor& pred, std::span<const double> target);

}  // namespace eeb::ag
