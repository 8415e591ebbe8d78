#include "camfit/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace camfit::kernels {

namespace {

constexpr std::size_t kRowTile = 4;
constexpr std::size_t kColTile = 32;

// Copies op(src) (rows x cols after the op) into a dense row-major buffer.
void pack(Trans trans, std::size_t rows, std::size_t cols, const double* src, std::size_t ld,
          std::vector<double>& dst) {
    dst.resize(rows * cols);
    if (trans == Trans::No) {
        for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(src + r * ld, cols, dst.data() + r * cols);
    } else {
        for (std::size_t c = 0; c < cols; ++c) {
            const double* s = src + c * ld;
            for (std::size_t r = 0; r < rows; ++r) dst[r * cols + c] = s[r];
        }
    }
}

// Register tile: kRowTile rows of C by kColTile columns, accumulated over all k.
inline void micro_tile(std::size_t k, const double* a, std::size_t lda, const double* b,
                       std::size_t ldb, double* acc) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b + p * ldb;
        for (std::size_t r = 0; r < kRowTile; ++r) {
            const double av = a[r * lda + p];
#pragma omp simd
            for (std::size_t j = 0; j < kColTile; ++j) acc[r * kColTile + j] += av * brow[j];
        }
    }
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, double alpha, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc) {
    const std::size_t m_full = m - m % kRowTile;
    const std::size_t n_full = n - n % kColTile;
    const auto row_blocks = static_cast<long>(m_full / kRowTile);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelThreshold)
    for (long rb = 0; rb < row_blocks; ++rb) {
        const std::size_t i = static_cast<std::size_t>(rb) * kRowTile;
        for (std::size_t j = 0; j < n_full; j += kColTile) {
            alignas(64) double acc[kRowTile * kColTile] = {};
            micro_tile(k, a + i * lda, lda, b + j, ldb, acc);
            for (std::size_t r = 0; r < kRowTile; ++r) {
                double* crow = c + (i + r) * ldc + j;
#pragma omp simd
                for (std::size_t q = 0; q < kColTile; ++q) crow[q] += alpha * acc[r * kColTile + q];
            }
        }
        if (n_full < n) {
            for (std::size_t r = 0; r < kRowTile; ++r) {
                double* crow = c + (i + r) * ldc;
                const double* arow = a + (i + r) * lda;
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = alpha * arow[p];
                    const double* brow = b + p * ldb;
                    for (std::size_t q = n_full; q < n; ++q) crow[q] += av * brow[q];
                }
            }
        }
    }
    for (std::size_t i = m_full; i < m; ++i) {
        double* crow = c + i * ldc;
        const double* arow = a + i * lda;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = alpha * arow[p];
            const double* brow = b + p * ldb;
#pragma omp simd
            for (std::size_t q = 0; q < n; ++q) crow[q] += av * brow[q];
        }
    }
}

inline double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

inline double gelu_grad_scalar(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    const double pdf = std::exp(-0.5 * x * x) * (0.5 * M_2_SQRTPI * M_SQRT1_2);
    return cdf + x * pdf;
}

inline void softmax_row(const double* x, double* y, std::size_t cols) {
    double mx = x[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
        y[j] = std::exp(x[j] - mx);
        sum += y[j];
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < cols; ++j) y[j] *= inv;
}

inline void layer_norm_row(const double* x, const double* gain, const double* bias, double eps,
                           double* y, double* xhat, double* inv_std, std::size_t cols) {
    double mean = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mean += x[j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
        const double d = x[j] - mean;
        var += d * d;
    }
    var /= static_cast<double>(cols);
    const double istd = 1.0 / std::sqrt(var + eps);
    if (inv_std) *inv_std = istd;
    for (std::size_t j = 0; j < cols; ++j) {
        const double h = (x[j] - mean) * istd;
        if (xhat) xhat[j] = h;
        y[j] = gain[j] * h + bias[j];
    }
}

}  // namespace

void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, std::size_t lda, const double* b, std::size_t ldb,
          double beta, double* c, std::size_t ldc) {
    if (beta != 1.0) {
        for (std::size_t i = 0; i < m; ++i) {
            double* crow = c + i * ldc;
            if (beta == 0.0)
                std::fill_n(crow, n, 0.0);
            else
                for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
        }
    }
    if (m == 0 || n == 0 || k == 0 || alpha == 0.0) return;

    thread_local std::vector<double> packed_a;
    thread_local std::vector<double> packed_b;
    const double* pa = a;
    std::size_t pa_ld = lda;
    if (trans_a == Trans::Yes) {
        pack(trans_a, m, k, a, lda, packed_a);
        pa = packed_a.data();
        pa_ld = k;
    }
    const double* pb = b;
    std::size_t pb_ld = ldb;
    if (trans_b == Trans::Yes) {
        pack(trans_b, k, n, b, ldb, packed_b);
        pb = packed_b.data();
        pb_ld = n;
    }
    gemm_nn(m, n, k, alpha, pa, pa_ld, pb, pb_ld, c, ldc);
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
    const auto n = static_cast<long>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelThreshold)
    for (long i = 0; i < n; ++i) softmax_row(x + i * cols, y + i * cols, cols);
}

void layer_norm_rows(const double* x, const double* gain, const double* bias, double eps,
                     double* y, double* xhat, double* inv_std, std::size_t rows,
                     std::size_t cols) {
    const auto n = static_cast<long>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelThreshold)
    for (long i = 0; i < n; ++i)
        layer_norm_row(x + i * cols, gain, bias, eps, y + i * cols,
                       xhat ? xhat + i * cols : nullptr, inv_std ? inv_std + i : nullptr, cols);
}

void gelu(const double* x, double* y, std::size_t n) {
    const auto len = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
    for (long i = 0; i < len; ++i) y[i] = gelu_scalar(x[i]);
}

void gelu_backward(const double* x, const double* dy, double* dx, std::size_t n) {
    const auto len = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
    for (long i = 0; i < len; ++i) dx[i] += dy[i] * gelu_grad_scalar(x[i]);
}

namespace reference {

void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, std::size_t lda, const double* b, std::size_t ldb,
          double beta, double* c, std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = trans_a == Trans::No ? a[i * lda + p] : a[p * lda + i];
                const double bv = trans_b == Trans::No ? b[p * ldb + j] : b[j * ldb + p];
                s += av * bv;
            }
            double& out = c[i * ldc + j];
            out = (beta == 0.0 ? 0.0 : beta * out) + alpha * s;
        }
    }
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i) softmax_row(x + i * cols, y + i * cols, cols);
}

void layer_norm_rows(const double* x, const double* gain, const double* bias, double eps,
                     double* y, double* xhat, double* inv_std, std::size_t rows,
                     std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i)
        layer_norm_row(x + i * cols, gain, bias, eps, y + i * cols,
                       xhat ? xhat + i * cols : nullptr, inv_std ? inv_std + i : nullptr, cols);
}

void gelu(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = gelu_scalar(x[i]);
}

void gelu_backward(const double* x, const double* dy, double* dx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * gelu_grad_scalar(x[i]);
}

}  // namespace reference

}  // namespace camfit::kernels
