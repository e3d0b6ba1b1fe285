#include <cmath>

#include "afnet/ops.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace afnet;
using testutil::grad_check;
using testutil::rand_tensor;

TEST_CASE("elementwise arithmetic forward values") {
    auto a = Tensor<double>::from({1, 2, 3, 4}, {2, 2});
    auto b = Tensor<double>::from({10, 20, 30, 40}, {2, 2});
    CHECK((a + b).data() == std::vector<double>{11, 22, 33, 44});
    CHECK((b - a).data() == std::vector<double>{9, 18, 27, 36});
    CHECK((a * b).data() == std::vector<double>{10, 40, 90, 160});
    CHECK(scale(a, 3.0).data() == std::vector<double>{3, 6, 9, 12});
    CHECK(add_scalar(a, -1.0).data() == std::vector<double>{0, 1, 2, 3});
}

TEST_CASE("unary op forward values match closed forms") {
    auto x = Tensor<double>::from({-2, -0.5, 0.5, 2}, {4});
    auto r = relu(x);
    CHECK(r.data() == std::vector<double>{0, 0, 0.5, 2});
    auto s = sigmoid(x);
    for (int i = 0; i < 4; ++i)
        CHECK(s.data()[i] == doctest::Approx(1.0 / (1.0 + std::exp(-x.data()[i]))).epsilon(1e-12));
    auto lg = log_clamped(Tensor<double>::from({1e-30, 0.5, 2.0}, {3}), 1e-20);
    CHECK(lg.data()[0] == doctest::Approx(std::log(1e-20)));
    CHECK(lg.data()[1] == doctest::Approx(std::log(0.5)));
    CHECK(lg.data()[2] == doctest::Approx(std::log(2.0)));
}

TEST_CASE("softmax rows sum to one and match direct evaluation") {
    RngState rng{11, 0};
    auto x = rand_tensor({3, 5}, rng);
    auto p = softmax(x, 1);
    for (int r = 0; r < 3; ++r) {
        double row = 0, denom = 0, mx = -1e300;
        for (int c = 0; c < 5; ++c) mx = std::max(mx, x.data()[r * 5 + c]);
        for (int c = 0; c < 5; ++c) denom += std::exp(x.data()[r * 5 + c] - mx);
        for (int c = 0; c < 5; ++c) {
            row += p.data()[r * 5 + c];
            CHECK(p.data()[r * 5 + c] ==
                  doctest::Approx(std::exp(x.data()[r * 5 + c] - mx) / denom).epsilon(1e-12));
        }
        CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("linear matches a hand-multiplied example") {
    // x [2,3] @ w^T [3,2] + b : y[i][j] = sum_k x[i][k] w[j][k] + b[j]
    auto x = Tensor<double>::from({1, 2, 3, 4, 5, 6}, {2, 3});
    auto w = Tensor<double>::from({1, 0, -1, 2, 1, 0}, {2, 3});
    auto b = Tensor<double>::from({0.5, -0.5}, {2});
    auto y = linear(x, w, b);
    CHECK(y.data() == std::vector<double>{1 - 3 + 0.5, 2 + 2 - 0.5, 4 - 6 + 0.5, 8 + 5 - 0.5});
}

TEST_CASE("reshape, column, concat preserve and arrange data") {
    auto x = Tensor<double>::from({1, 2, 3, 4, 5, 6}, {2, 3});
    auto r = reshape(x, {3, 2});
    CHECK(r.dim(0) == 3);
    CHECK(r.data() == x.data());
    CHECK(column(x, 1).data() == std::vector<double>{2, 5});
    auto a = Tensor<double>::from({1, 2}, {2, 1});
    auto b = Tensor<double>::from({3, 4}, {2, 1});
    CHECK(concat_cols(a, b).data() == std::vector<double>{1, 3, 2, 4});
}

TEST_CASE("sum and mean reduce every element") {
    auto x = Tensor<double>::from({1, 2, 3, 4}, {2, 2});
    CHECK(sum(x).item() == doctest::Approx(10.0));
    CHECK(mean(x).item() == doctest::Approx(2.5));
}

TEST_CASE("cross entropy of exactly uniform logits is log K") {
    const int k = 7;
    auto logits = Tensor<double>::zeros({3, k});
    CHECK(cross_entropy(logits, {0, 3, 6}).item() == doctest::Approx(std::log(double(k))));
}

TEST_CASE("argmax_rows picks the largest column") {
    auto x = Tensor<double>::from({0, 2, 1, 5, -1, 3}, {2, 3});
    CHECK(argmax_rows(x) == std::vector<int>{1, 0});
}

TEST_CASE("straight_through is binary forward, soft-path backward") {
    auto soft = Tensor<double>::from({0.3, 0.8, 0.5}, {3});
    soft.set_requires_grad(true);
    std::vector<double> hard{0, 1, 1};
    auto g = straight_through(soft, hard);
    CHECK(g.data() == hard);
    sum(g).backward();
    CHECK(soft.grad() == std::vector<double>{1, 1, 1});
}

TEST_CASE("detach blocks gradient flow") {
    auto x = Tensor<double>::from({2.0}, {1});
    x.set_requires_grad(true);
    auto y = detach(x) * x;  // d/dx should see only the non-detached factor
    y.backward();
    CHECK(x.grad()[0] == doctest::Approx(2.0));
}

TEST_CASE("backward accumulates through a diamond graph") {
    auto x = Tensor<double>::from({3.0}, {1});
    x.set_requires_grad(true);
    auto y = x * x + x;  // dy/dx = 2x + 1 = 7
    y.backward();
    CHECK(x.grad()[0] == doctest::Approx(7.0));
}

TEST_CASE("finite differences confirm elementwise and reduction gradients") {
    RngState rng{21, 0};
    auto a = rand_tensor({2, 3}, rng);
    auto b = rand_tensor({2, 3}, rng);
    CHECK(grad_check([&] { return sum((a + b) * a - scale(b, 0.5)); }, {a, b}) < 1e-4);
    CHECK(grad_check([&] { return mean(a * a * b); }, {a, b}) < 1e-4);
}

TEST_CASE("finite differences confirm unary op gradients at generic points") {
    RngState rng{22, 0};
    auto x = rand_tensor({3, 4}, rng);
    for (auto& v : x.data())  // keep values away from the relu kink
        if (std::abs(v) < 0.1) v += 0.3;
    CHECK(grad_check([&] { return sum(relu(x)); }, {x}) < 1e-4);
    CHECK(grad_check([&] { return sum(sigmoid(x)); }, {x}) < 1e-4);
    auto p = rand_tensor({6}, rng);
    for (auto& v : p.data()) v = 0.5 + std::abs(v);  // positive, away from the clamp
    CHECK(grad_check([&] { return sum(log_clamped(p, 1e-20)); }, {p}) < 1e-4);
}

TEST_CASE("finite differences confirm softmax, linear and cross entropy gradients") {
    RngState rng{23, 0};
    auto x = rand_tensor({3, 4}, rng);
    CHECK(grad_check([&] { return sum(softmax(x, 1) * x); }, {x}) < 1e-4);

    auto w = rand_tensor({2, 4}, rng, 0.5);
    auto b = rand_tensor({2}, rng, 0.5);
    CHECK(grad_check([&] { return sum(linear(x, w, b)); }, {x, w, b}) < 1e-4);

    std::vector<int> labels{1, 0, 1};
    auto lg = rand_tensor({3, 2}, rng);
    CHECK(grad_check([&] { return cross_entropy(lg, labels); }, {lg}) < 1e-4);
}

TEST_CASE("finite differences confirm shape op gradients") {
    RngState rng{24, 0};
    auto x = rand_tensor({2, 6}, rng);
    CHECK(grad_check([&] { return sum(reshape(x, {3, 4}) * reshape(x, {3, 4})); }, {x}) < 1e-4);
    CHECK(grad_check([&] { return sum(column(x, 2) * column(x, 4)); }, {x}) < 1e-4);
    auto a = rand_tensor({3, 2}, rng);
    auto b = rand_tensor({3, 1}, rng);
    CHECK(grad_check([&] { return sum(concat_cols(a, b) * concat_cols(a, b)); }, {a, b}) < 1e-4);
}
