#pragma once

#include <cstddef>

// Dense row-major kernels used by the tensor engine.
//
// Every kernel exists twice: the top-level version is OpenMP-parallel over
// independent rows and tuned for the small matrices a desk-scale transformer
// produces; the version in `reference` is a plain serial loop nest kept as the
// testing oracle. The two must agree to rounding (GEMM) or bit-exactly
// (row-wise kernels, which share the same per-row arithmetic).

namespace camfit::kernels {

enum class Trans { No, Yes };

// C = alpha * op(A) * op(B) + beta * C with op(A) m x k and op(B) k x n.
// lda/ldb/ldc are row strides of the stored (untransposed) matrices.
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, std::size_t lda, const double* b, std::size_t ldb,
          double beta, double* c, std::size_t ldc);

// Softmax over contiguous rows of length `cols`, max-subtracted.
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols);

// y = gain * (x - mean) / sqrt(var + eps) + bias per row. Writes the
// normalized value (before the affine) into `xhat` and 1/sqrt(var+eps) into
// `inv_std` when those are non-null; backward needs both.
void layer_norm_rows(const double* x, const double* gain, const double* bias, double eps,
                     double* y, double* xhat, double* inv_std, std::size_t rows,
                     std::size_t cols);

void gelu(const double* x, double* y, std::size_t n);
// dx = dy * gelu'(x), accumulated into dx.
void gelu_backward(const double* x, const double* dy, double* dx, std::size_t n);

namespace reference {

void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, std::size_t lda, const double* b, std::size_t ldb,
          double beta, double* c, std::size_t ldc);
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols);
void layer_norm_rows(const double* x, const double* gain, const double* bias, double eps,
                     double* y, double* xhat, double* inv_std, std::size_t rows,
                     std::size_t cols);
void gelu(const double* x, double* y, std::size_t n);
void gelu_backward(const double* x, const double* dy, double* dx, std::size_t n);

}  // namespace reference

// Work threshold (multiply-adds) below which kernels stay on the calling thread.
inline constexpr std::size_t kParallelThreshold = 1u << 16;

}  // namespace camfit::kernels
