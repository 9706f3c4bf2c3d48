#pragma once

#include <span>
#include <vector>

#include "cgar/tensor.hpp"

namespace cgar {

// Differentiable primitives. Each op computes values eagerly and, when a
// tape is recording and at least one input is live on it, records a
// backward closure. Inputs that are neither parameters nor tape-produced
// are treated as constants and receive no gradient work.

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real c);
// mat (m x n) + row vector (n), broadcast over rows.
Tensor add_rowvec(const Tensor& mat, const Tensor& vec);

Tensor matmul(const Tensor& a, const Tensor& b);
// a (m x k) times b^T where b is (n x k). Used for attention scores.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor concat_cols(const Tensor& a, const Tensor& b, const Tensor& c);
Tensor slice_cols(const Tensor& a, int col0, int width);
// Same element count, new shape; values copied, gradient passed through.
Tensor reshape(const Tensor& a, Shape shape);

// Row-wise normalization with per-feature affine parameters gamma, beta.
// Variance is the biased (1/n) estimate.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  real eps = real(1e-5));
Tensor softmax_rows(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor log_elem(const Tensor& x);
Tensor sum(const Tensor& x);

// Token-summed cross-entropy of row-wise logits (L x V) against integer
// targets in [0, V). Stable log-sum-exp; fused softmax-minus-onehot
// gradient.
Tensor cross_entropy_sum(const Tensor& logits, std::span<const int> targets);

// Mean binary cross-entropy of probabilities q in (0,1) against a single
// 0/1 target broadcast to every element. Probabilities are clamped away
// from 0 and 1 so a saturated prediction yields a finite loss (exactly 0
// when it matches the target).
Tensor bce_mean(const Tensor& q, bool target);

// Gathers rows of table (V x D) at the given indices.
Tensor embed_rows(const Tensor& table, std::span<const int> indices);

// Row-wise argmax of a rank-2 tensor. Not differentiable.
std::vector<int> argmax_rows(const Tensor& x);

}  // namespace cgar
