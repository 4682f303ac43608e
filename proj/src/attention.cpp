#include "eeb/attention.hpp"

#include <cmath>

#include "eeb/errors.hpp"

namespace eeb {

RowMatrix positional_encoding(std::size_t seq_len, std::size_t d_model) {
  if (d_model == 0 || d_model % 2 != 0) {
    throw BuildError("positional encoding needs an even model width, got " + std::to_string(d_model));
  }
  RowMatrix pe(static_cast<Eigen::Index>(seq_len), static_cast<Eigen::Index>(d_model));
  for (std::size_t pos = 0; pos < seq_len; ++pos) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double angle = static_cast<double>(pos) /
                           std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      pe(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(2 * i)) = std::sin(angle);
      pe(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(2 * i + 1)) = std::cos(angle);
    }
  }
  return pe;
}

AttentionResult scaled_dot_product_attention(const ag::Tensor& q, const ag::Tensor& k,
                                             const ag::Tensor& v) {
  if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3) {
    throw ContractError("attention inputs must be [B, T, d]");
  }
  if (q.dim(0) != k.dim(0) || q.dim(0) != v.dim(0)) throw ContractError("attention batch mismatch");
  if (k.dim(1) != v.dim(1) || q.dim(1) != k.dim(1)) throw ContractError("attention time length mismatch");
  if (q.dim(2) != k.dim(2)) throw ContractError("attention query/key width mismatch");
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.dim(2)));
  auto weights = ag::softmax_last(ag::scale(ag::bmm_nt(q, k), inv_sqrt_dk));
  return {ag::bmm(weights, v), weights};
}

AttentionMatrices scaled_dot_product_attention(const RowMatrix& q, const RowMatrix& k,
                                               const RowMatrix& v) {
  auto wrap = [](const RowMatrix& m) {
    return ag::Tensor::constant({1, static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                                std::vector<double>(m.data(), m.data() + m.size()));
  };
  ag::NoGradGuard no_grad;
  auto r = scaled_dot_product_attention(wrap(q), wrap(k), wrap(v));
  auto unwrap = [](const ag::Tensor& t) {
    RowMatrix m(static_cast<Eigen::Index>(t.dim(1)), static_cast<Eigen::Index>(t.dim(2)));
    std::copy(t.data().begin(), t.data().end(), m.data());
    return m;
  };
  return {unwrap(r.output), unwrap(r.weights)};
}

}  // namespace eeb
