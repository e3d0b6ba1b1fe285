#include <cmath>

#include "afnet/ops.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace afnet;
using testutil::grad_check;
using testutil::max_abs_diff;
using testutil::naive_avg_pool;
using testutil::naive_conv2d;
using testutil::naive_max_pool;
using testutil::rand_tensor;

namespace {

void check_conv_against_naive(int n, int c_in, int h, int w, int c_out, int k, int stride,
                              int pad, int groups, uint64_t seed) {
    RngState rng{seed, 0};
    auto x = rand_tensor({n, c_in, h, w}, rng);
    auto wt = rand_tensor({c_out, c_in / groups, k, k}, rng);
    auto b = rand_tensor({c_out}, rng);
    auto y = conv2d(x, wt, b, stride, pad, groups);
    auto ref = naive_conv2d(x.data(), n, c_in, h, w, wt.data(), b.data(), c_out, k, stride, pad,
                            groups);
    REQUIRE(static_cast<size_t>(y.numel()) == ref.size());
    CHECK(max_abs_diff(y.data(), ref) < 1e-12);
}

}  // namespace

TEST_CASE("conv2d matches the reference loop across configurations") {
    check_conv_against_naive(2, 3, 6, 6, 4, 3, 1, 1, 1, 31);
    check_conv_against_naive(1, 4, 8, 8, 6, 3, 2, 1, 1, 32);
    check_conv_against_naive(2, 4, 5, 5, 4, 1, 1, 0, 1, 33);
    check_conv_against_naive(1, 4, 6, 6, 4, 3, 1, 1, 2, 34);  // grouped
    check_conv_against_naive(2, 6, 7, 7, 6, 3, 2, 1, 2, 35);  // grouped, strided
    check_conv_against_naive(1, 2, 4, 4, 3, 3, 1, 0, 1, 36);  // valid padding
}

TEST_CASE("conv2d with a centered identity kernel reproduces the input") {
    RngState rng{37, 0};
    auto x = rand_tensor({1, 1, 5, 5}, rng);
    auto wt = Tensor<double>::zeros({1, 1, 3, 3});
    wt.data()[4] = 1.0;  // center tap
    auto y = conv2d(x, wt, Tensor<double>{}, 1, 1, 1);
    CHECK(max_abs_diff(y.data(), x.data()) == 0.0);
}

TEST_CASE("finite differences confirm conv2d gradients") {
    RngState rng{38, 0};
    auto x = rand_tensor({1, 2, 4, 4}, rng);
    auto wt = rand_tensor({2, 2, 3, 3}, rng, 0.5);
    auto b = rand_tensor({2}, rng, 0.5);
    CHECK(grad_check([&] { return sum(conv2d(x, wt, b, 1, 1, 1)); }, {x, wt, b}) < 1e-4);

    auto xg = rand_tensor({1, 4, 4, 4}, rng);
    auto wg = rand_tensor({4, 2, 3, 3}, rng, 0.5);
    CHECK(grad_check([&] { return sum(conv2d(xg, wg, Tensor<double>{}, 2, 1, 2) *
                                      conv2d(xg, wg, Tensor<double>{}, 2, 1, 2)); },
                     {xg, wg}) < 1e-4);
}

TEST_CASE("batchnorm training output is normalized then affine-scaled") {
    RngState rng{39, 0};
    auto x = rand_tensor({4, 3, 2, 2}, rng, 2.0);
    auto gamma = Tensor<double>::from({1.5, 1.0, 0.5}, {3});
    auto beta = Tensor<double>::from({0.1, -0.2, 0.3}, {3});
    std::vector<double> rm(3, 0.0), rv(3, 1.0);
    auto y = batchnorm2d(x, gamma, beta, rm, rv, true);
    // per channel: mean(y) == beta, var(y) == gamma^2 (up to eps)
    const int per = 4 * 2 * 2;
    for (int c = 0; c < 3; ++c) {
        double m = 0, v = 0;
        for (int n = 0; n < 4; ++n)
            for (int p = 0; p < 4; ++p) m += y.data()[(n * 3 + c) * 4 + p];
        m /= per;
        for (int n = 0; n < 4; ++n)
            for (int p = 0; p < 4; ++p) {
                const double d = y.data()[(n * 3 + c) * 4 + p] - m;
                v += d * d;
            }
        v /= per;
        CHECK(m == doctest::Approx(beta.data()[c]).epsilon(1e-10));
        CHECK(v == doctest::Approx(gamma.data()[c] * gamma.data()[c]).epsilon(1e-3));
    }
}

TEST_CASE("batchnorm running statistics follow the momentum recurrence") {
    RngState rng{40, 0};
    auto x = rand_tensor({2, 1, 2, 2}, rng);
    auto gamma = Tensor<double>::ones({1});
    auto beta = Tensor<double>::zeros({1});
    std::vector<double> rm(1, 0.5), rv(1, 2.0);
    double batch_mean = 0, batch_var = 0;
    for (double v : x.data()) batch_mean += v;
    batch_mean /= 8;
    for (double v : x.data()) batch_var += (v - batch_mean) * (v - batch_mean);
    batch_var /= 8;
    batchnorm2d(x, gamma, beta, rm, rv, true, 0.1);
    CHECK(rm[0] == doctest::Approx(0.9 * 0.5 + 0.1 * batch_mean).epsilon(1e-12));
    CHECK(rv[0] == doctest::Approx(0.9 * 2.0 + 0.1 * batch_var).epsilon(1e-12));
}

TEST_CASE("batchnorm eval mode applies frozen statistics elementwise") {
    auto x = Tensor<double>::from({1, 2, 3, 4}, {1, 1, 2, 2});
    auto gamma = Tensor<double>::from({2.0}, {1});
    auto beta = Tensor<double>::from({1.0}, {1});
    std::vector<double> rm(1, 2.0), rv(1, 4.0);
    auto y = batchnorm2d(x, gamma, beta, rm, rv, false, 0.1, 0.0);
    for (int i = 0; i < 4; ++i)
        CHECK(y.data()[i] == doctest::Approx(2.0 * (x.data()[i] - 2.0) / 2.0 + 1.0).epsilon(1e-12));
}

TEST_CASE("finite differences confirm batchnorm gradients through batch statistics") {
    RngState rng{41, 0};
    auto x = rand_tensor({3, 2, 2, 2}, rng);
    auto gamma = rand_tensor({2}, rng, 0.3);
    for (auto& g : gamma.data()) g += 1.0;
    auto beta = rand_tensor({2}, rng, 0.3);
    std::vector<double> rm(2, 0.0), rv(2, 1.0);
    auto f = [&] {
        std::vector<double> m = rm, v = rv;  // keep buffers untouched across calls
        return sum(batchnorm2d(x, gamma, beta, m, v, true) *
                   batchnorm2d(x, gamma, beta, m, v, true));
    };
    CHECK(grad_check(f, {x, gamma, beta}) < 1e-4);
}

TEST_CASE("pooling matches the reference loops") {
    RngState rng{42, 0};
    auto x = rand_tensor({2, 3, 6, 6}, rng);
    auto a = avg_pool2d(x, 2, 2);
    CHECK(max_abs_diff(a.data(), naive_avg_pool(x.data(), 2, 3, 6, 6, 2, 2)) < 1e-12);
    auto m = max_pool2d(x, 3, 1);
    CHECK(max_abs_diff(m.data(), naive_max_pool(x.data(), 2, 3, 6, 6, 3, 1)) < 1e-12);
}

TEST_CASE("finite differences confirm pooling gradients") {
    RngState rng{43, 0};
    auto x = rand_tensor({1, 2, 4, 4}, rng);
    CHECK(grad_check([&] { return sum(avg_pool2d(x, 2, 2) * avg_pool2d(x, 2, 2)); }, {x}) < 1e-4);
    // max pool at a generic point (ties have measure zero under jitter)
    CHECK(grad_check([&] { return sum(max_pool2d(x, 2, 2) * max_pool2d(x, 2, 2)); }, {x}) < 1e-4);
}

TEST_CASE("global average pools agree with the direct mean") {
    RngState rng{44, 0};
    auto x = rand_tensor({2, 3, 4, 4}, rng);
    auto g = global_avg_pool(x);  // [N,C,1,1]
    auto flat = gap_flat(x);      // [N,C]
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 3; ++c) {
            double m = 0;
            for (int p = 0; p < 16; ++p) m += x.data()[(n * 3 + c) * 16 + p];
            m /= 16;
            CHECK(g.data()[n * 3 + c] == doctest::Approx(m).epsilon(1e-12));
            CHECK(flat.data()[n * 3 + c] == doctest::Approx(m).epsilon(1e-12));
        }
    CHECK(grad_check([&] { return sum(gap_flat(x) * gap_flat(x)); }, {x}) < 1e-4);
}

TEST_CASE("nearest upsample repeats pixels and routes gradients") {
    auto x = Tensor<double>::from({1, 2, 3, 4}, {1, 1, 2, 2});
    auto y = nearest_upsample(x, 2);
    CHECK(y.dim(2) == 4);
    CHECK(y.data() == std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});
    RngState rng{45, 0};
    auto xr = rand_tensor({1, 2, 3, 3}, rng);
    CHECK(grad_check([&] { return sum(nearest_upsample(xr, 2) * nearest_upsample(xr, 2)); },
                     {xr}) < 1e-4);
}
