#pragma once

#include <cstddef>
#include <vector>

#include "camfit/tensor.hpp"

// Differentiable tensor operations. Every op records its backward onto the
// active tape when an input requires a gradient.
namespace camfit {

// a[..., m, k] x b[..., k, n]. Batch dims must be equal, or one operand may be
// a plain matrix that is broadcast over the other's batch.
Tensor matmul(const Tensor& a, const Tensor& b);

// Swaps the last two axes.
Tensor transpose(const Tensor& x);

// x[N, in] * weight[in, out] + bias[out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
// x[..., d] + row[d] broadcast over all leading positions.
Tensor add_row(const Tensor& x, const Tensor& row);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// sum(w * (a - b)^2) / n with w broadcast per element; weights is optional.
Tensor weighted_sq_error(const Tensor& a, const Tensor& b, const std::vector<double>& weights,
                         double normalizer);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, std::size_t axis,
                  double eps = 1e-5);
Tensor gelu(const Tensor& x);

// Same-padded 1-D cross-correlation along the sequence axis.
// x[L, c_in], weight[c_out, c_in, k] with k odd, bias[c_out].
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Multi-head scaled dot-product attention. q[Lq, d], k[Lk, d], v[Lk, d];
// head h uses columns [h*d/heads, (h+1)*d/heads).
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads);

Tensor reshape(const Tensor& x, Shape shape);
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
// One row of table[V, d] as a [1, d] tensor.
Tensor gather_row(const Tensor& table, std::size_t index);
// row[1, d] or row[d] repeated into [n, d].
Tensor repeat_rows(const Tensor& row, std::size_t n);

// Throws ValidationError if any value is NaN/Inf.
void require_finite(const Tensor& x, const char* what);

}  // namespace camfit
