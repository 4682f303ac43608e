#include "eeb/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "eeb/errors.hpp"

namespace eeb::ag {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

thread_local bool g_grad_enabled = true;

struct KinkState {
  int depth = 0;
  std::uint64_t hash = 1469598103934665603ULL;
};
thread_local KinkState g_kink;

void kink_mix(std::uint64_t v) {
  g_kink.hash ^= v + 0x9e3779b97f4a7c15ULL + (g_kink.hash << 6) + (g_kink.hash >> 2);
}

bool kink_active() { return g_kink.depth > 0; }

void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

// Creates the output node; wires parents and backward closure only when needed.
Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<Tensor> inputs,
                   std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& t : inputs) {
      if (t.defined() && t.requires_grad()) needs = true;
    }
  }
  if (needs) {
    node->requires_grad = true;
    for (const auto& t : inputs) node->parents.push_back(t.defined() ? t.node() : nullptr);
    node->backward_fn = std::move(fn);
  }
  return Tensor(std::move(node));
}

// Gradient buffer of parent i, or an empty span when it does not need one.
std::span<double> pgrad(Node& self, std::size_t i) {
  auto& p = self.parents[i];
  if (!p || !p->requires_grad) return {};
  return p->grad_buffer();
}

template <typename F>
Tensor unary(const Tensor& x, F f) {
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return Tensor::constant(x.shape(), std::move(out));
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::span<double> Node::grad_buffer() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  require(ag::numel(shape) == values.size(), "tensor value count does not match shape " + shape_str(shape));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape) {
  const auto n = ag::numel(shape);
  return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
  require(numel() == 1, "item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

KinkRecorder::KinkRecorder() {
  if (g_kink.depth++ == 0) g_kink.hash = 1469598103934665603ULL;
}
KinkRecorder::~KinkRecorder() { --g_kink.depth; }
std::uint64_t KinkRecorder::signature() const { return g_kink.hash; }

void backward(const Tensor& loss) {
  require(loss.defined(), "backward on undefined tensor");
  require(loss.numel() == 1, "backward requires a scalar loss");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS yields a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p && p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  require(sb.size() <= sa.size() && std::equal(sb.rbegin(), sb.rend(), sa.rbegin()),
          "add: shape " + shape_str(sb) + " does not broadcast to " + shape_str(sa));
  const std::size_t n = a.numel();
  const std::size_t m = b.numel();
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] += bd[i % m];
  return make_result(sa, std::move(out), {a, b}, [n, m](Node& self) {
    auto g = std::span<const double>(self.grad);
    if (auto ga = pgrad(self, 0); !ga.empty()) {
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
    }
    if (auto gb = pgrad(self, 1); !gb.empty()) {
      for (std::size_t i = 0; i < n; ++i) gb[i % m] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "sub: shape mismatch");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& g = self.grad;
    if (auto ga = pgrad(self, 0); !ga.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (auto gb = pgrad(self, 1); !gb.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& g = self.grad;
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (auto ga = pgrad(self, 0); !ga.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (auto gb = pgrad(self, 1); !gb.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  return make_result(a.shape(), std::move(out), {a}, [s](Node& self) {
    auto ga = pgrad(self, 0);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * s;
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  auto in = x.data();
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const bool on = in[i] > 0.0;
    out[i] = on ? in[i] : 0.0;
    if (kink_active()) {
      bits = (bits << 1) | (on ? 1u : 0u);
      if ((i & 63) == 63) kink_mix(bits);
    }
  }
  if (kink_active()) kink_mix(bits);
  return make_result(x.shape(), std::move(out), {x}, [](Node& self) {
    auto gx = pgrad(self, 0);
    const auto& xv = self.parents[0]->value;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += self.grad[i];
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = unary(x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  return make_result(x.shape(), std::move(y.node()->value), {x}, [](Node& self) {
    auto gx = pgrad(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double s = self.value[i];
      gx[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Tensor tanh(const Tensor& x) {
  Tensor y = unary(x, [](double v) { return std::tanh(v); });
  return make_result(x.shape(), std::move(y.node()->value), {x}, [](Node& self) {
    auto gx = pgrad(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double t = self.value[i];
      gx[i] += self.grad[i] * (1.0 - t * t);
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(numel(shape) == x.numel(),
          "reshape " + shape_str(x.shape()) + " -> " + shape_str(shape) + " changes size");
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    auto gx = pgrad(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Dense / convolution
// ---------------------------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require(weight.rank() == 2, "linear: weight must be [out, in]");
  const std::size_t in = weight.dim(1);
  const std::size_t outf = weight.dim(0);
  require(x.rank() >= 1 && x.shape().back() == in,
          "linear: input " + shape_str(x.shape()) + " does not end in " + std::to_string(in));
  if (bias.defined()) require(bias.numel() == outf, "linear: bias size mismatch");
  const std::size_t rows = x.numel() / in;

  Shape oshape = x.shape();
  oshape.back() = outf;
  std::vector<double> out(rows * outf);
  {
    CMapMat X(x.data().data(), rows, in);
    CMapMat W(weight.data().data(), outf, in);
    MapMat Y(out.data(), rows, outf);
    Y.noalias() = X * W.transpose();
    if (bias.defined()) {
      Eigen::Map<const Eigen::RowVectorXd> b(bias.data().data(), outf);
      Y.rowwise() += b;
    }
  }
  return make_result(std::move(oshape), std::move(out), {x, weight, bias},
                     [rows, in, outf](Node& self) {
                       CMapMat G(self.grad.data(), rows, outf);
                       if (auto gx = pgrad(self, 0); !gx.empty()) {
                         CMapMat W(self.parents[1]->value.data(), outf, in);
                         MapMat(gx.data(), rows, in).noalias() += G * W;
                       }
                       if (auto gw = pgrad(self, 1); !gw.empty()) {
                         CMapMat X(self.parents[0]->value.data(), rows, in);
                         MapMat(gw.data(), outf, in).noalias() += G.transpose() * X;
                       }
                       if (self.parents[2]) {
                         if (auto gb = pgrad(self, 2); !gb.empty()) {
                           Eigen::Map<Eigen::RowVectorXd>(gb.data(), outf) += G.colwise().sum();
                         }
                       }
                     });
}

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t pad) {
  require(x.rank() == 3, "conv1d: input must be [B, C, T], got " + shape_str(x.shape()));
  require(weight.rank() == 3, "conv1d: weight must be [Cout, Cin, K]");
  const std::size_t B = x.dim(0), Cin = x.dim(1), T = x.dim(2);
  const std::size_t Cout = weight.dim(0), K = weight.dim(2);
  require(weight.dim(1) == Cin, "conv1d: input has " + std::to_string(Cin) +
                                    " channels, weight expects " + std::to_string(weight.dim(1)));
  require(T + 2 * pad >= K, "conv1d: sequence shorter than kernel");
  if (bias.defined()) require(bias.numel() == Cout, "conv1d: bias size mismatch");
  const std::size_t Tout = T + 2 * pad - K + 1;
  const std::size_t CK = Cin * K;
  const std::size_t N = B * Tout;

  // im2col: cols[ci*K + k, b*Tout + t] = x[b, ci, t + k - pad]
  auto cols = std::make_shared<std::vector<double>>(CK * N, 0.0);
  auto xv = x.data();
  for (std::size_t ci = 0; ci < Cin; ++ci) {
    for (std::size_t k = 0; k < K; ++k) {
      double* row = cols->data() + (ci * K + k) * N;
      for (std::size_t b = 0; b < B; ++b) {
        const double* src = xv.data() + (b * Cin + ci) * T;
        for (std::size_t t = 0; t < Tout; ++t) {
          const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(pad);
          if (s >= 0 && s < static_cast<std::ptrdiff_t>(T)) row[b * Tout + t] = src[s];
        }
      }
    }
  }

  RowMat Y(Cout, N);
  Y.noalias() = CMapMat(weight.data().data(), Cout, CK) * CMapMat(cols->data(), CK, N);
  std::vector<double> out(B * Cout * Tout);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t co = 0; co < Cout; ++co) {
      const double bb = bias.defined() ? bias.data()[co] : 0.0;
      for (std::size_t t = 0; t < Tout; ++t) {
        out[(b * Cout + co) * Tout + t] = Y(static_cast<Eigen::Index>(co),
                                            static_cast<Eigen::Index>(b * Tout + t)) + bb;
      }
    }
  }

  return make_result({B, Cout, Tout}, std::move(out), {x, weight, bias},
                     [=](Node& self) {
                       RowMat G(Cout, N);
                       for (std::size_t b = 0; b < B; ++b) {
                         for (std::size_t co = 0; co < Cout; ++co) {
                           for (std::size_t t = 0; t < Tout; ++t) {
                             G(static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(b * Tout + t)) =
                                 self.grad[(b * Cout + co) * Tout + t];
                           }
                         }
                       }
                       if (auto gw = pgrad(self, 1); !gw.empty()) {
                         MapMat(gw.data(), Cout, CK).noalias() +=
                             G * CMapMat(cols->data(), CK, N).transpose();
                       }
                       if (self.parents[2]) {
                         if (auto gb = pgrad(self, 2); !gb.empty()) {
                           for (std::size_t co = 0; co < Cout; ++co) gb[co] += G.row(static_cast<Eigen::Index>(co)).sum();
                         }
                       }
                       if (auto gx = pgrad(self, 0); !gx.empty()) {
                         RowMat dcols(CK, N);
                         dcols.noalias() =
                             CMapMat(self.parents[1]->value.data(), Cout, CK).transpose() * G;
                         for (std::size_t ci = 0; ci < Cin; ++ci) {
                           for (std::size_t k = 0; k < K; ++k) {
                             const double* row = dcols.data() + (ci * K + k) * N;
                             for (std::size_t b = 0; b < B; ++b) {
                               double* dst = gx.data() + (b * Cin + ci) * T;
                               for (std::size_t t = 0; t < Tout; ++t) {
                                 const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + k) -
                                                          static_cast<std::ptrdiff_t>(pad);
                                 if (s >= 0 && s < static_cast<std::ptrdiff_t>(T)) dst[s] += row[b * Tout + t];
                               }
                             }
                           }
                         }
                       }
                     });
}

Tensor max_pool1d(const Tensor& x, std::size_t k) {
  require(x.rank() == 3, "max_pool1d: input must be [B, C, T]");
  require(k >= 1, "max_pool1d: kernel must be positive");
  const std::size_t B = x.dim(0), C = x.dim(1), T = x.dim(2);
  const std::size_t Tout = T / k;
  require(Tout >= 1, "max_pool1d: sequence of length " + std::to_string(T) +
                         " shorter than pool " + std::to_string(k));
  std::vector<double> out(B * C * Tout);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  auto xv = x.data();
  for (std::size_t r = 0; r < B * C; ++r) {
    for (std::size_t t = 0; t < Tout; ++t) {
      std::size_t best = r * T + t * k;
      for (std::size_t j = 1; j < k; ++j) {
        const std::size_t idx = r * T + t * k + j;
        if (xv[idx] > xv[best]) best = idx;
      }
      out[r * Tout + t] = xv[best];
      (*argmax)[r * Tout + t] = best;
      if (kink_active()) kink_mix(best);
    }
  }
  return make_result({B, C, Tout}, std::move(out), {x}, [argmax](Node& self) {
    auto gx = pgrad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[(*argmax)[i]] += self.grad[i];
  });
}

Tensor global_avg_pool(const Tensor& x) {
  require(x.rank() == 3, "global_avg_pool: input must be [B, C, T]");
  const std::size_t B = x.dim(0), C = x.dim(1), T = x.dim(2);
  std::vector<double> out(B * C, 0.0);
  auto xv = x.data();
  for (std::size_t r = 0; r < B * C; ++r) {
    double s = 0.0;
    for (std::size_t t = 0; t < T; ++t) s += xv[r * T + t];
    out[r] = s / static_cast<double>(T);
  }
  return make_result({B, C}, std::move(out), {x}, [T](Node& self) {
    auto gx = pgrad(self, 0);
    const double inv = 1.0 / static_cast<double>(T);
    for (std::size_t r = 0; r < self.grad.size(); ++r) {
      for (std::size_t t = 0; t < T; ++t) gx[r * T + t] += self.grad[r] * inv;
    }
  });
}

Tensor transpose12(const Tensor& x) {
  require(x.rank() == 3, "transpose12: input must be rank 3");
  const std::size_t B = x.dim(0), M = x.dim(1), N = x.dim(2);
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < M; ++i) {
      for (std::size_t j = 0; j < N; ++j) out[(b * N + j) * M + i] = xv[(b * M + i) * N + j];
    }
  }
  return make_result({B, N, M}, std::move(out), {x}, [B, M, N](Node& self) {
    auto gx = pgrad(self, 0);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t j = 0; j < N; ++j) gx[(b * M + i) * N + j] += self.grad[(b * N + j) * M + i];
      }
    }
  });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  require(a.rank() == 3 && b.rank() == 3, "bmm: inputs must be rank 3");
  const std::size_t B = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(2);
  require(b.dim(0) == B && b.dim(1) == K,
          "bmm: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + " mismatch");
  std::vector<double> out(B * M * N);
  for (std::size_t i = 0; i < B; ++i) {
    MapMat(out.data() + i * M * N, M, N).noalias() =
        CMapMat(a.data().data() + i * M * K, M, K) * CMapMat(b.data().data() + i * K * N, K, N);
  }
  return make_result({B, M, N}, std::move(out), {a, b}, [B, M, K, N](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    auto ga = pgrad(self, 0);
    auto gb = pgrad(self, 1);
    for (std::size_t i = 0; i < B; ++i) {
      CMapMat G(self.grad.data() + i * M * N, M, N);
      if (!ga.empty()) MapMat(ga.data() + i * M * K, M, K).noalias() += G * CMapMat(bv.data() + i * K * N, K, N).transpose();
      if (!gb.empty()) MapMat(gb.data() + i * K * N, K, N).noalias() += CMapMat(av.data() + i * M * K, M, K).transpose() * G;
    }
  });
}

Tensor bmm_nt(const Tensor& a, const Tensor& b) {
  require(a.rank() == 3 && b.rank() == 3, "bmm_nt: inputs must be rank 3");
  const std::size_t B = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(1);
  require(b.dim(0) == B && b.dim(2) == K,
          "bmm_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T mismatch");
  std::vector<double> out(B * M * N);
  for (std::size_t i = 0; i < B; ++i) {
    MapMat(out.data() + i * M * N, M, N).noalias() =
        CMapMat(a.data().data() + i * M * K, M, K) * CMapMat(b.data().data() + i * N * K, N, K).transpose();
  }
  return make_result({B, M, N}, std::move(out), {a, b}, [B, M, K, N](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    auto ga = pgrad(self, 0);
    auto gb = pgrad(self, 1);
    for (std::size_t i = 0; i < B; ++i) {
      CMapMat G(self.grad.data() + i * M * N, M, N);
      if (!ga.empty()) MapMat(ga.data() + i * M * K, M, K).noalias() += G * CMapMat(bv.data() + i * N * K, N, K);
      if (!gb.empty()) MapMat(gb.data() + i * N * K, N, K).noalias() += G.transpose() * CMapMat(av.data() + i * M * K, M, K);
    }
  });
}

// ---------------------------------------------------------------------------
// Normalisation
// ---------------------------------------------------------------------------

Tensor softmax_last(const Tensor& x) {
  const std::size_t D = x.shape().back();
  const std::size_t rows = x.numel() / D;
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * D;
    double* o = out.data() + r * D;
    const double mx = *std::max_element(in, in + D);
    double s = 0.0;
    for (std::size_t j = 0; j < D; ++j) s += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < D; ++j) o[j] /= s;
  }
  return make_result(x.shape(), std::move(out), {x}, [rows, D](Node& self) {
    auto gx = pgrad(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * D;
      const double* g = self.grad.data() + r * D;
      double dot = 0.0;
      for (std::size_t j = 0; j < D; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < D; ++j) gx[r * D + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t D = x.shape().back();
  require(gamma.numel() == D && beta.numel() == D, "layer_norm: affine size mismatch");
  const std::size_t rows = x.numel() / D;
  std::vector<double> out(x.numel());
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * D;
    double mean = 0.0;
    for (std::size_t j = 0; j < D; ++j) mean += in[j];
    mean /= static_cast<double>(D);
    double var = 0.0;
    for (std::size_t j = 0; j < D; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<double>(D);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < D; ++j) {
      const double h = (in[j] - mean) * is;
      (*xhat)[r * D + j] = h;
      out[r * D + j] = gamma.data()[j] * h + beta.data()[j];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gamma, beta}, [rows, D, xhat, inv_std](Node& self) {
    auto gx = pgrad(self, 0);
    auto gg = pgrad(self, 1);
    auto gbeta = pgrad(self, 2);
    const auto& gam = self.parents[1]->value;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* g = self.grad.data() + r * D;
      const double* h = xhat->data() + r * D;
      double s1 = 0.0, s2 = 0.0;
      for (std::size_t j = 0; j < D; ++j) {
        const double dh = g[j] * gam[j];
        s1 += dh;
        s2 += dh * h[j];
        if (!gg.empty()) gg[j] += g[j] * h[j];
        if (!gbeta.empty()) gbeta[j] += g[j];
      }
      if (!gx.empty()) {
        const double inv_d = 1.0 / static_cast<double>(D);
        for (std::size_t j = 0; j < D; ++j) {
          const double dh = g[j] * gam[j];
          gx[r * D + j] += (*inv_std)[r] * (dh - inv_d * s1 - h[j] * inv_d * s2);
        }
      }
    }
  });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  bool training) {
  require(x.rank() == 2 || x.rank() == 3, "batch_norm: input must be [B, C] or [B, C, L]");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.rank() == 3 ? x.dim(2) : 1;
  require(gamma.numel() == C && beta.numel() == C, "batch_norm: affine size mismatch");
  require(state.running_mean.size() == C && state.running_var.size() == C,
          "batch_norm: running statistics size mismatch");
  const std::size_t n = B * L;
  auto xv = x.data();
  std::vector<double> mean(C), var(C);
  if (training) {
    require(n > 1, "batch_norm: training needs more than one value per channel");
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t l = 0; l < L; ++l) s += xv[(b * C + c) * L + l];
      mean[c] = s / static_cast<double>(n);
      double v = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t l = 0; l < L; ++l) {
          const double d = xv[(b * C + c) * L + l] - mean[c];
          v += d * d;
        }
      var[c] = v / static_cast<double>(n);
      const double m = state.momentum;
      state.running_mean[c] = (1.0 - m) * state.running_mean[c] + m * mean[c];
      state.running_var[c] =
          (1.0 - m) * state.running_var[c] + m * var[c] * static_cast<double>(n) / static_cast<double>(n - 1);
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
    if (state.accumulate) {
      state.acc_sum.resize(C, 0.0);
      state.acc_sumsq.resize(C, 0.0);
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t l = 0; l < L; ++l) {
            const double d = xv[(b * C + c) * L + l] - mean[c];
            state.acc_sum[c] += d;
            state.acc_sumsq[c] += d * d;
          }
      }
      state.acc_count += static_cast<double>(n);
    }
  }

  auto inv_std = std::make_shared<std::vector<double>>(C);
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  std::vector<double> out(x.numel());
  for (std::size_t c = 0; c < C; ++c) (*inv_std)[c] = 1.0 / std::sqrt(var[c] + state.eps);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t l = 0; l < L; ++l) {
        const std::size_t i = (b * C + c) * L + l;
        (*xhat)[i] = (xv[i] - mean[c]) * (*inv_std)[c];
        out[i] = gamma.data()[c] * (*xhat)[i] + beta.data()[c];
      }

  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [B, C, L, n, training, inv_std, xhat](Node& self) {
                       auto gx = pgrad(self, 0);
                       auto gg = pgrad(self, 1);
                       auto gbeta = pgrad(self, 2);
                       const auto& gam = self.parents[1]->value;
                       for (std::size_t c = 0; c < C; ++c) {
                         double s1 = 0.0, s2 = 0.0;
                         for (std::size_t b = 0; b < B; ++b)
                           for (std::size_t l = 0; l < L; ++l) {
                             const std::size_t i = (b * C + c) * L + l;
                             s1 += self.grad[i];
                             s2 += self.grad[i] * (*xhat)[i];
                           }
                         if (!gg.empty()) gg[c] += s2;
                         if (!gbeta.empty()) gbeta[c] += s1;
                         if (gx.empty()) continue;
                         const double is = (*inv_std)[c];
                         const double inv_n = 1.0 / static_cast<double>(n);
                         for (std::size_t b = 0; b < B; ++b)
                           for (std::size_t l = 0; l < L; ++l) {
                             const std::size_t i = (b * C + c) * L + l;
                             if (training) {
                               gx[i] += gam[c] * is * (self.grad[i] - inv_n * s1 - (*xhat)[i] * inv_n * s2);
                             } else {
                               gx[i] += gam[c] * is * self.grad[i];
                             }
                           }
                       }
                     });
}

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng, bool training) {
  if (!training || p <= 0.0) return x;
  require(p < 1.0, "dropout: probability must be < 1");
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = keep(rng) ? s : 0.0;
    out[i] = x.data()[i] * (*mask)[i];
  }
  return make_result(x.shape(), std::move(out), {x}, [mask](Node& self) {
    auto gx = pgrad(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * (*mask)[i];
  });
}

// ---------------------------------------------------------------------------
// Indexing
// ---------------------------------------------------------------------------

Tensor slice_last(const Tensor& x, std::size_t start, std::size_t len) {
  const std::size_t D = x.shape().back();
  require(start + len <= D, "slice_last: range past end");
  const std::size_t rows = x.numel() / D;
  Shape s = x.shape();
  s.back() = len;
  std::vector<double> out(rows * len);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.data().data() + r * D + start, len, out.data() + r * len);
  }
  return make_result(std::move(s), std::move(out), {x}, [rows, D, start, len](Node& self) {
    auto gx = pgrad(self, 0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < len; ++j) gx[r * D + start + j] += self.grad[r * len + j];
  });
}

Tensor select_step(const Tensor& x, std::size_t t) {
  require(x.rank() == 3, "select_step: input must be [B, T, D]");
  const std::size_t B = x.dim(0), T = x.dim(1), D = x.dim(2);
  require(t < T, "select_step: step out of range");
  std::vector<double> out(B * D);
  for (std::size_t b = 0; b < B; ++b) std::copy_n(x.data().data() + (b * T + t) * D, D, out.data() + b * D);
  return make_result({B, D}, std::move(out), {x}, [B, T, D, t](Node& self) {
    auto gx = pgrad(self, 0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t j = 0; j < D; ++j) gx[(b * T + t) * D + j] += self.grad[b * D + j];
  });
}

Tensor stack_steps(const std::vector<Tensor>& steps) {
  require(!steps.empty(), "stack_steps: no inputs");
  require(steps.front().rank() == 2, "stack_steps: inputs must be [B, D]");
  const std::size_t B = steps.front().dim(0), D = steps.front().dim(1), T = steps.size();
  std::vector<double> out(B * T * D);
  bool needs = false;
  for (std::size_t t = 0; t < T; ++t) {
    require(steps[t].shape() == steps.front().shape(), "stack_steps: shape mismatch");
    for (std::size_t b = 0; b < B; ++b) std::copy_n(steps[t].data().data() + b * D, D, out.data() + (b * T + t) * D);
    needs = needs || steps[t].requires_grad();
  }
  auto node = std::make_shared<Node>();
  node->shape = {B, T, D};
  node->value = std::move(out);
  if (needs && grad_enabled()) {
    node->requires_grad = true;
    for (const auto& s : steps) node->parents.push_back(s.node());
    node->backward_fn = [B, T, D](Node& self) {
      for (std::size_t t = 0; t < T; ++t) {
        auto g = pgrad(self, t);
        if (g.empty()) continue;
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t j = 0; j < D; ++j) g[b * D + j] += self.grad[(b * T + t) * D + j];
      }
    };
  }
  return Tensor(std::move(node));
}

Tensor split_heads(const Tensor& x, std::size_t heads) {
  require(x.rank() == 3, "split_heads: input must be [B, T, D]");
  const std::size_t B = x.dim(0), T = x.dim(1), D = x.dim(2);
  require(heads > 0 && D % heads == 0, "split_heads: model width not divisible by head count");
  const std::size_t dh = D / heads;
  std::vector<double> out(x.numel());
  auto index = [=](std::size_t b, std::size_t t, std::size_t h, std::size_t j) {
    return std::pair{(b * T + t) * D + h * dh + j, ((b * heads + h) * T + t) * dh + j};
  };
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t j = 0; j < dh; ++j) {
          auto [src, dst] = index(b, t, h, j);
          out[dst] = x.data()[src];
        }
  return make_result({B * heads, T, dh}, std::move(out), {x}, [=](Node& self) {
    auto gx = pgrad(self, 0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t h = 0; h < heads; ++h)
          for (std::size_t j = 0; j < dh; ++j) {
            auto [src, dst] = index(b, t, h, j);
            gx[src] += self.grad[dst];
          }
  });
}

Tensor merge_heads(const Tensor& x, std::size_t heads) {
  require(x.rank() == 3 && heads > 0 && x.dim(0) % heads == 0, "merge_heads: bad shape");
  const std::size_t B = x.dim(0) / heads, T = x.dim(1), dh = x.dim(2), D = dh * heads;
  std::vector<double> out(x.numel());
  auto index = [=](std::size_t b, std::size_t t, std::size_t h, std::size_t j) {
    return std::pair{((b * heads + h) * T + t) * dh + j, (b * T + t) * D + h * dh + j};
  };
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t j = 0; j < dh; ++j) {
          auto [src, dst] = index(b, t, h, j);
          out[dst] = x.data()[src];
        }
  return make_result({B, T, D}, std::move(out), {x}, [=](Node& self) {
    auto gx = pgrad(self, 0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t h = 0; h < heads; ++h)
          for (std::size_t j = 0; j < dh; ++j) {
            auto [src, dst] = index(b, t, h, j);
            gx[src] += self.grad[dst];
          }
  });
}

Tensor mse_loss(const Tensor& pred, std::span<const double> target) {
  require(pred.numel() == target.size(), "mse_loss: prediction/target size mismatch");
  require(!target.empty(), "mse_loss: empty input");
  const std::size_t n = target.size();
  auto residual = std::make_shared<std::vector<double>>(n);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    (*residual)[i] = pred.data()[i] - target[i];
    s += (*residual)[i] * (*residual)[i];
  }
  return make_result({1}, {s / static_cast<double>(n)}, {pred}, [n, residual](Node& self) {
    auto gp = pgrad(self, 0);
    const double k = 2.0 * self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) gp[i] += k * (*residual)[i];
  });
}

}  // namespace eeb::ag
