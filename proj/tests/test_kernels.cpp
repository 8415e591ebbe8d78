#include <random>
#include <vector>

#include "camfit/kernels.hpp"
#include "doctest.h"

using namespace camfit::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

}  // namespace

TEST_CASE("parallel gemm agrees with the serial reference for every transpose combination") {
    std::mt19937_64 rng(7);
    const std::size_t sizes[][3] = {{1, 1, 1}, {3, 5, 2}, {4, 32, 8}, {37, 65, 19}, {128, 64, 64}, {33, 100, 7}};
    for (auto [m, n, k] : sizes) {
        for (Trans ta : {Trans::No, Trans::Yes}) {
            for (Trans tb : {Trans::No, Trans::Yes}) {
                const auto a = random_vec(m * k, rng);
                const auto b = random_vec(k * n, rng);
                auto c_fast = random_vec(m * n, rng);
                auto c_ref = c_fast;
                const std::size_t lda = ta == Trans::No ? k : m;
                const std::size_t ldb = tb == Trans::No ? n : k;
                gemm(ta, tb, m, n, k, 0.7, a.data(), lda, b.data(), ldb, 0.3, c_fast.data(), n);
                reference::gemm(ta, tb, m, n, k, 0.7, a.data(), lda, b.data(), ldb, 0.3, c_ref.data(), n);
                for (std::size_t i = 0; i < m * n; ++i)
                    REQUIRE(c_fast[i] == doctest::Approx(c_ref[i]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("gemm honours strided operands") {
    // Column block [2, 4) of a 3x6 matrix times a 2x3 matrix.
    std::mt19937_64 rng(3);
    const auto a = random_vec(3 * 6, rng);
    const auto b = random_vec(2 * 3, rng);
    std::vector<double> c_fast(3 * 3, 0.0), c_ref(3 * 3, 0.0);
    gemm(Trans::No, Trans::No, 3, 3, 2, 1.0, a.data() + 2, 6, b.data(), 3, 0.0, c_fast.data(), 3);
    reference::gemm(Trans::No, Trans::No, 3, 3, 2, 1.0, a.data() + 2, 6, b.data(), 3, 0.0, c_ref.data(), 3);
    for (std::size_t i = 0; i < 9; ++i) CHECK(c_fast[i] == doctest::Approx(c_ref[i]).epsilon(1e-14));
}

TEST_CASE("row kernels match the reference bit for bit") {
    std::mt19937_64 rng(11);
    const std::size_t rows = 300, cols = 257;
    const auto x = random_vec(rows * cols, rng);
    const auto gain = random_vec(cols, rng);
    const auto bias = random_vec(cols, rng);

    std::vector<double> s1(rows * cols), s2(rows * cols);
    softmax_rows(x.data(), s1.data(), rows, cols);
    reference::softmax_rows(x.data(), s2.data(), rows, cols);
    CHECK(s1 == s2);

    std::vector<double> l1(rows * cols), l2(rows * cols), h1(rows * cols), h2(rows * cols), i1(rows), i2(rows);
    layer_norm_rows(x.data(), gain.data(), bias.data(), 1e-5, l1.data(), h1.data(), i1.data(), rows, cols);
    reference::layer_norm_rows(x.data(), gain.data(), bias.data(), 1e-5, l2.data(), h2.data(), i2.data(), rows, cols);
    CHECK(l1 == l2);
    CHECK(h1 == h2);
    CHECK(i1 == i2);

    std::vector<double> g1(rows * cols), g2(rows * cols), d1(rows * cols, 0.0), d2(rows * cols, 0.0);
    gelu(x.data(), g1.data(), x.size());
    reference::gelu(x.data(), g2.data(), x.size());
    CHECK(g1 == g2);
    gelu_backward(x.data(), s1.data(), d1.data(), x.size());
    reference::gelu_backward(x.data(), s1.data(), d2.data(), x.size());
    CHECK(d1 == d2);
}
