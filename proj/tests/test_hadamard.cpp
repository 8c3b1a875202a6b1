#include <cmath>
#include <random>

#include "doctest.h"
#include "lowfp/error.hpp"
#include "lowfp/hadamard.hpp"
#include "oracle.hpp"

using namespace lowfp;

namespace {

template <typename T>
Tensor<T> random_tensor(std::uint64_t seed, std::size_t rows, std::size_t cols) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor<T> t(rows, cols);
    for (T& v : t.values()) v = static_cast<T>(n(rng));
    return t;
}

}  // namespace

TEST_CASE("Sylvester matrices") {
    CHECK(hadamard_matrix(1).values() == std::vector<double>{1});
    CHECK(hadamard_matrix(2).values() == std::vector<double>{1, 1, 1, -1});
    for (std::size_t n : {4u, 8u, 64u}) {
        const TensorD h = hadamard_matrix(n);
        const TensorD hh = matmul_nt(h, h);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                CHECK(hh(i, j) == (i == j ? double(n) : 0.0));
                CHECK(h(i, j) == oracle::hadamard_entry(i, j));
            }
        }
    }
    CHECK_THROWS_AS(hadamard_matrix(12), InputError);
    CHECK_THROWS_AS(hadamard_matrix(0), InputError);
}

TEST_CASE("FWHT against the dense product") {
    std::vector<double> v{1, 1};
    fwht_inplace<double>(v);
    CHECK(v == std::vector<double>{2, 0});
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    for (std::size_t n = 2; n <= 1024; n *= 2) {
        std::vector<double> x(n);
        for (double& e : x) e = nd(rng);
        std::vector<double> ref(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) ref[i] += oracle::hadamard_entry(i, j) * x[j];
        }
        std::vector<double> y = x;
        fwht_inplace<double>(y);
        CHECK(oracle::rel_diff(y, ref) < 1e-12);
        fwht_inplace<double>(y);
        for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == doctest::Approx(n * x[i]).epsilon(1e-12));
        std::vector<double> yn = x;
        fwht_inplace<double>(yn, true);
        for (double& r : ref) r /= std::sqrt(double(n));
        CHECK(oracle::rel_diff(yn, ref) < 1e-12);
    }
    std::vector<double> bad(12);
    CHECK_THROWS_AS(fwht_inplace<double>(bad), InputError);
}

TEST_CASE("apply_ght equals multiplication by the dense block-diagonal matrix") {
    const TensorD x = random_tensor<double>(2, 5, 512);
    const HadamardConfig cfg{512, 128, true};
    const auto ref = oracle::right_multiply(x.values(), oracle::block_hadamard(512, 128), 5, 512);
    CHECK(oracle::rel_diff(apply_ght(x, cfg).values(), ref) < 1e-13);
    // single group reproduces the full transform
    const auto full = oracle::right_multiply(x.values(), oracle::block_hadamard(512, 512), 5, 512);
    CHECK(oracle::rel_diff(apply_ght(x, HadamardConfig{512, 512, true}).values(), full) < 1e-13);
}

TEST_CASE("GHT examples") {
    TensorD onehot(1, 256, 0.0);
    onehot(0, 0) = 1.0;
    const TensorD y = apply_ght(onehot, HadamardConfig{256, 128, true});
    for (std::size_t c = 0; c < 256; ++c) {
        CHECK(y(0, c) == doctest::Approx(c < 128 ? 1 / std::sqrt(128.0) : 0.0).epsilon(1e-15));
    }
    // identity weight: fused rows are the rows of H_B
    TensorD eye(256, 256, 0.0);
    for (std::size_t i = 0; i < 256; ++i) eye(i, i) = 1.0;
    const auto hb = oracle::block_hadamard(256, 128);
    CHECK(oracle::rel_diff(fuse_weight_rotation(eye, HadamardConfig{256, 128, true}).values(), hb) < 1e-15);
}

TEST_CASE("rotation invariance, fusion, norms") {
    const HadamardConfig cfg{1920, 128, true};
    const TensorF x = random_tensor<float>(3, 16, 1920);
    const TensorF w = random_tensor<float>(4, 64, 1920);
    const TensorF ref = matmul_nt(x, w);
    const TensorF got = matmul_nt(apply_ght(x, cfg), fuse_weight_rotation(w, cfg));
    std::vector<double> a(got.values().begin(), got.values().end()), b(ref.values().begin(), ref.values().end());
    CHECK(oracle::rel_diff(a, b) < 1e-5);

    const TensorD wd = random_tensor<double>(5, 8, 1920);
    CHECK(oracle::rel_diff(fuse_weight_rotation(fuse_weight_rotation(wd, cfg), cfg).values(), wd.values()) < 1e-14);

    const TensorD xd = random_tensor<double>(6, 8, 1920);
    const TensorD yd = apply_ght(xd, cfg);
    for (std::size_t r = 0; r < 8; ++r) {
        double n0 = 0, n1 = 0;
        for (double v : xd.row(r)) n0 += v * v;
        for (double v : yd.row(r)) n1 += v * v;
        CHECK(std::sqrt(n1) == doctest::Approx(std::sqrt(n0)).epsilon(1e-6));
    }
}

TEST_CASE("outlier amortization") {
    TensorD x = random_tensor<double>(7, 1, 256);
    x(0, 37) = 1000.0;
    const TensorD y = apply_ght(x, HadamardConfig{256, 128, true});
    double m = 0;
    for (std::size_t c = 0; c < 128; ++c) m = std::max(m, std::fabs(y(0, c)));
    CHECK(m <= 2 * 1000.0 / std::sqrt(128.0));
}

TEST_CASE("FLOP model") {
    const RotationFlops a = ght_flops(1920, 128);
    CHECK(a.ht_flops == 2ull * 1920 * 1920);
    CHECK(a.ght_flops == 2ull * 1920 * 128);
    CHECK(a.ratio == 15.0);
    CHECK(ght_flops(128, 128).ratio == 1.0);
    CHECK(ght_flops(256, 128).ratio == 2.0);
}

TEST_CASE("config validation") {
    CHECK_THROWS_AS((HadamardConfig{1000, 128, true}.validate()), InputError);
    CHECK_THROWS_AS((HadamardConfig{960, 96, true}.validate()), InputError);
    const TensorD x(2, 100);
    CHECK_THROWS_AS(apply_ght(x, HadamardConfig{100, 128, true}), InputError);
}
