#pragma once

#include "eeb/matrix.hpp"
#include "eeb/tensor.hpp"

namespace eeb {

// Sinusoidal position table [seq_len x d_model]:
//   PE[pos, 2i]   = sin(pos / 10000^(2i / d_model))
//   PE[pos, 2i+1] = cos(pos / 10000^(2i / d_model))
// Throws BuildError for odd d_model.
RowMatrix positional_encoding(std::size_t seq_len, std::size_t d_model);

struct AttentionResult {
  ag::Tensor output;   // [B, T, dv]
  ag::Tensor weights;  // [B, T, T], rows on the probability simplex
};

// softmax(Q K^T / sqrt(d_k)) V over the time axis of [B, T, d] tensors.
AttentionResult scaled_dot_product_attention(const ag::Tensor& q, const ag::Tensor& k,
                                             const ag::Tensor& v);

struct AttentionMatrices {
  RowMatrix output;
  RowMatrix weights;
};

// Single-sequence convenience form on plain matrices (rows are time steps).
AttentionMatrices scaled_dot_product_attention(const RowMatrix& q, const RowMatrix& k,
                                               const RowMatrix& v);

}  // namespace eeb
