#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fd_check.hpp"
#include "s5cl/error.hpp"
#include "s5cl/rng.hpp"
#include "s5cl/tensor.hpp"

using namespace s5cl;
using fdcheck::check_gradients;
using fdcheck::random_tensor;

TEST_CASE("matmul matches a naive triple loop on random matrices")
{
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 1 + rng.uniform_int(1, 5);
        const std::size_t k = 1 + rng.uniform_int(1, 5);
        const std::size_t n = 1 + rng.uniform_int(1, 5);
        Tensor a = random_tensor(rng, {m, k}, -2.0, 2.0, false);
        Tensor b = random_tensor(rng, {k, n}, -2.0, 2.0, false);
        Tensor c = matmul(a, b);
        REQUIRE(c.shape() == std::vector<std::size_t>{m, n});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double want = 0;
                for (std::size_t t = 0; t < k; ++t) want += a.at(i * k + t) * b.at(t * n + j);
                CHECK(std::abs(c.at(i * n + j) - want) < 1e-12);
            }
    }
}

TEST_CASE("elementwise forward values")
{
    Tensor x({3}, {-1.0, 0.0, 2.0});
    Tensor r = relu(x);
    CHECK(r.at(0) == 0.0);
    CHECK(r.at(1) == 0.0);
    CHECK(r.at(2) == 2.0);

    Tensor row({1, 2}, {3.0, 4.0});
    Tensor unit = l2_normalize_rows(row);
    CHECK(unit.at(0) == doctest::Approx(0.6));
    CHECK(unit.at(1) == doctest::Approx(0.8));

    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor bias({2}, {10, 20});
    Tensor shifted = add(a, bias);
    CHECK(shifted.at(0) == 11);
    CHECK(shifted.at(3) == 24);
    Tensor scaled = scalar_mul(a, -0.5);
    CHECK(scaled.at(3) == -2.0);
    CHECK(sub(a, a).at(2) == 0.0);
    CHECK(elementwise_mul(a, a).at(3) == 16.0);

    CHECK(sum(a).value() == 10.0);
    CHECK(mean(a).value() == 2.5);

    Tensor t = transpose(a);
    CHECK(t.at(1) == 3);
    CHECK(t.at(2) == 2);

    Tensor c = concat_rows(a, a);
    CHECK(c.rows() == 4);
    CHECK(c.at(5) == 2.0);
    Tensor s = slice_rows(c, 1, 2);
    CHECK(s.rows() == 2);
    CHECK(s.at(0) == 3.0);
}

TEST_CASE("log floors its argument instead of returning -inf")
{
    Tensor x({2}, {-1.0, 0.0});
    Tensor y = log(x);
    CHECK(y.at(0) == doctest::Approx(std::log(1e-12)));
    CHECK(y.at(1) == doctest::Approx(std::log(1e-12)));
    CHECK(std::isfinite(y.at(0)));
}

TEST_CASE("l2_normalize_rows emits unit rows for inputs away from zero")
{
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor x = random_tensor(rng, {4, 6}, -3.0, 3.0, false);
        Tensor n = l2_normalize_rows(x);
        for (std::size_t r = 0; r < 4; ++r) {
            double norm = 0;
            for (std::size_t c = 0; c < 6; ++c) norm += n.at(r * 6 + c) * n.at(r * 6 + c);
            CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("log_softmax rows exponentiate-and-sum to one and shift invariance holds")
{
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor x = random_tensor(rng, {3, 5}, -4.0, 4.0, false);
        Tensor ls = log_softmax_rows(x);
        for (std::size_t r = 0; r < 3; ++r) {
            double total = 0;
            for (std::size_t c = 0; c < 5; ++c) total += std::exp(ls.at(r * 5 + c));
            CHECK(std::abs(total - 1.0) < 1e-9);
        }
        std::vector<double> shifted(x.data());
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t c = 0; c < 5; ++c) shifted[r * 5 + c] += 100.0 + 10.0 * r;
        Tensor ls2 = log_softmax_rows(Tensor({3, 5}, shifted));
        for (std::size_t i = 0; i < 15; ++i) CHECK(ls.at(i) == doctest::Approx(ls2.at(i)));
    }
}

TEST_CASE("batch_stats_normalize train mode standardizes and updates running buffers")
{
    Tensor x({4, 2}, {1, 10, 2, 20, 3, 30, 4, 40});
    Tensor running_mean = Tensor::zeros({2});
    Tensor running_var = Tensor::full({2}, 1.0);
    Tensor y = batch_stats_normalize(x, running_mean, running_var, 0.1, true);

    // Column 0: mean 2.5, biased var 1.25.
    const double stdev = std::sqrt(1.25 + 1e-5);
    CHECK(y.at(0) == doctest::Approx((1 - 2.5) / stdev));
    CHECK(y.at(6) == doctest::Approx((4 - 2.5) / stdev));
    // Running buffers: momentum 0.1, unbiased variance (5/3 for column 0).
    CHECK(running_mean.at(0) == doctest::Approx(0.9 * 0.0 + 0.1 * 2.5));
    CHECK(running_var.at(0) == doctest::Approx(0.9 * 1.0 + 0.1 * (5.0 / 3.0)));

    // Eval mode uses the running buffers and leaves them untouched.
    const double rm = running_mean.at(0), rv = running_var.at(0);
    Tensor z = batch_stats_normalize(x, running_mean, running_var, 0.1, false);
    CHECK(z.at(0) == doctest::Approx((1 - rm) / std::sqrt(rv + 1e-5)));
    CHECK(running_mean.at(0) == rm);
    CHECK(running_var.at(0) == rv);
}

TEST_CASE("backward of sum is all ones and of a half square is the input")
{
    Tensor x({3}, {1, 2, 3}, true);
    {
        Tape tape;
        Tape::Scope scope(&tape);
        GradientStore grads = tape.backward(sum(x));
        Tensor g = grads.grad(x);
        for (std::size_t i = 0; i < 3; ++i) CHECK(g.at(i) == 1.0);
    }
    {
        Tape tape;
        Tape::Scope scope(&tape);
        Tensor half_square = scalar_mul(sum(elementwise_mul(x, x)), 0.5);
        GradientStore grads = tape.backward(half_square);
        Tensor g = grads.grad(x);
        CHECK(g.at(0) == doctest::Approx(1.0));
        CHECK(g.at(1) == doctest::Approx(2.0));
        CHECK(g.at(2) == doctest::Approx(3.0));
    }
}

TEST_CASE("gradient additivity: backward of a sum equals the sum of backwards")
{
    Rng rng(7);
    Tensor x = random_tensor(rng, {3, 3}, 0.5, 2.0);
    auto loss_a = [&] { return mean(elementwise_mul(x, x)); };
    auto loss_b = [&] { return sum(log(x)); };

    Tensor ga, gb, gsum;
    {
        Tape tape;
        Tape::Scope scope(&tape);
        ga = tape.backward(loss_a()).grad(x);
    }
    {
        Tape tape;
        Tape::Scope scope(&tape);
        gb = tape.backward(loss_b()).grad(x);
    }
    {
        Tape tape;
        Tape::Scope scope(&tape);
        gsum = tape.backward(add(loss_a(), loss_b())).grad(x);
    }
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(std::abs(gsum.at(i) - (ga.at(i) + gb.at(i))) < 1e-12);
}

TEST_CASE("every op kind passes central finite differences at random inputs")
{
    Rng rng(42);
    auto run = [&](const char* name, auto&& build, std::vector<Tensor> inputs) {
        const fdcheck::Result r = check_gradients(build, std::move(inputs));
        INFO(name);
        CHECK(r.coordinates > 0);
        CHECK(r.max_rel < 1e-4);
    };

    for (int trial = 0; trial < 10; ++trial) {
        run("matmul",
            [](const std::vector<Tensor>& in) { return sum(matmul(in[0], in[1])); },
            {random_tensor(rng, {3, 4}, -1, 1), random_tensor(rng, {4, 2}, -1, 1)});
        run("transpose",
            [](const std::vector<Tensor>& in) { return sum(elementwise_mul(transpose(in[0]), transpose(in[0]))); },
            {random_tensor(rng, {2, 5}, -1, 1)});
        run("add_broadcast",
            [](const std::vector<Tensor>& in) { return mean(elementwise_mul(add(in[0], in[1]), add(in[0], in[1]))); },
            {random_tensor(rng, {3, 4}, -1, 1), random_tensor(rng, {4}, -1, 1)});
        run("sub",
            [](const std::vector<Tensor>& in) { return sum(elementwise_mul(sub(in[0], in[1]), sub(in[0], in[1]))); },
            {random_tensor(rng, {2, 3}, -1, 1), random_tensor(rng, {2, 3}, -1, 1)});
        run("scalar_mul",
            [](const std::vector<Tensor>& in) { return mean(scalar_mul(in[0], -1.7)); },
            {random_tensor(rng, {4}, -1, 1)});
        run("relu", [](const std::vector<Tensor>& in) { return sum(relu(in[0])); },
            {random_tensor(rng, {3, 3}, 0.2, 1.5)});
        run("relu_negative", [](const std::vector<Tensor>& in) { return sum(relu(in[0])); },
            {random_tensor(rng, {3, 3}, -1.5, -0.2)});
        run("exp", [](const std::vector<Tensor>& in) { return sum(exp(in[0])); },
            {random_tensor(rng, {2, 4}, -1, 1)});
        run("log", [](const std::vector<Tensor>& in) { return sum(log(in[0])); },
            {random_tensor(rng, {2, 4}, 0.5, 3.0)});
        run("mean", [](const std::vector<Tensor>& in) { return mean(in[0]); },
            {random_tensor(rng, {5}, -1, 1)});
        run("concat_slice",
            [](const std::vector<Tensor>& in) {
                Tensor c = concat_rows(in[0], in[1]);
                return sum(elementwise_mul(slice_rows(c, 1, 2), slice_rows(c, 1, 2)));
            },
            {random_tensor(rng, {2, 3}, -1, 1), random_tensor(rng, {2, 3}, -1, 1)});
        run("l2_normalize_rows",
            [](const std::vector<Tensor>& in) { return sum(elementwise_mul(l2_normalize_rows(in[0]), in[1])); },
            {random_tensor(rng, {3, 4}, 0.5, 2.0), random_tensor(rng, {3, 4}, -1, 1, false)});
        run("log_softmax_rows",
            [](const std::vector<Tensor>& in) { return sum(elementwise_mul(log_softmax_rows(in[0]), in[1])); },
            {random_tensor(rng, {3, 4}, -2, 2), random_tensor(rng, {3, 4}, -1, 1, false)});
        run("batch_stats_normalize",
            [](const std::vector<Tensor>& in) {
                Tensor rm = Tensor::zeros({3});
                Tensor rv = Tensor::full({3}, 1.0);
                return sum(elementwise_mul(batch_stats_normalize(in[0], rm, rv, 0.1, true), in[1]));
            },
            {random_tensor(rng, {5, 3}, -2, 2), random_tensor(rng, {5, 3}, -1, 1, false)});
    }
}

TEST_CASE("chained composite network gradient matches finite differences")
{
    Rng rng(9);
    const fdcheck::Result r = check_gradients(
        [](const std::vector<Tensor>& in) {
            Tensor h = relu(add(matmul(in[0], in[1]), in[2]));
            Tensor logits = matmul(h, in[3]);
            return scalar_mul(mean(elementwise_mul(log_softmax_rows(logits), in[4])), -1.0);
        },
        {random_tensor(rng, {4, 3}, 0.1, 1.0), random_tensor(rng, {3, 5}, -1, 1),
         random_tensor(rng, {5}, 0.2, 0.8), random_tensor(rng, {5, 3}, -1, 1),
         random_tensor(rng, {4, 3}, 0, 1, false)});
    CHECK(r.max_rel < 1e-4);
}

TEST_CASE("gradients accumulate when a tensor feeds several consumers")
{
    Tensor x({2}, {1.0, 2.0}, true);
    Tape tape;
    Tape::Scope scope(&tape);
    GradientStore grads = tape.backward(sum(add(x, x)));
    CHECK(grads.grad(x).at(0) == 2.0);
    CHECK(grads.grad(x).at(1) == 2.0);
}

TEST_CASE("tape error handling")
{
    Tensor x({2}, {1.0, 2.0}, true);
    Tape tape;
    Tape::Scope scope(&tape);
    Tensor s = sum(x);
    tape.backward(s);
    CHECK_THROWS_AS(tape.backward(s), Error);

    Tape other;
    Tape::Scope inner(&other);
    Tensor y = relu(x); // non-scalar root
    CHECK_THROWS_AS(other.backward(y), Error);
}

TEST_CASE("pause and detach block gradient flow")
{
    Tensor x({2}, {1.0, 2.0}, true);
    {
        Tape tape;
        Tape::Scope scope(&tape);
        Tensor frozen;
        {
            Tape::Pause pause;
            frozen = scalar_mul(x, 3.0); // not recorded: x -> frozen edge is cut
        }
        GradientStore grads = tape.backward(add(sum(x), sum(frozen)));
        CHECK(grads.grad(x).at(0) == 1.0);
        CHECK(grads.grad(x).at(1) == 1.0);
    }
    {
        Tape tape;
        Tape::Scope scope(&tape);
        Tensor d = x.detach();
        Tensor loss = add(sum(x), sum(elementwise_mul(d, d)));
        GradientStore grads = tape.backward(loss);
        CHECK(grads.grad(x).at(0) == 1.0);
        CHECK(grads.grad(x).at(1) == 1.0);
    }
}

TEST_CASE("shape mismatches raise errors naming the op")
{
    Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b({2, 2}, {1, 2, 3, 4});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("matmul"), Error);
    CHECK_THROWS_AS(add(a, b), Error);
    CHECK_THROWS_AS(slice_rows(a, 1, 5), Error);
    CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), Error);
}

TEST_CASE("non-finite inputs are rejected")
{
    Tensor bad({2}, {1.0, std::numeric_limits<double>::quiet_NaN()});
    Tensor good({2}, {1.0, 2.0});
    CHECK_THROWS_AS(add(bad, good), Error);
    CHECK_THROWS_AS(exp(Tensor({1}, {std::numeric_limits<double>::infinity()})), Error);
}

TEST_CASE("seeded rng is deterministic, splits are independent, uniform mean is centered")
{
    Rng a(0), b(0);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng base(123);
    Rng left = base.split(0);
    Rng right = base.split(1);
    CHECK(left.next_u64() != right.next_u64());

    Rng u(99);
    double total = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) total += u.uniform();
    CHECK(std::abs(total / n - 0.5) < 0.01);

    // split is const and repeatable
    Rng s1 = base.split(7);
    Rng s2 = base.split(7);
    CHECK(s1.next_u64() == s2.next_u64());
}
