#include <doctest.h>

#include "licda/ops.hpp"
#include "licda/tensor.hpp"
#include "support/finite_diff.hpp"

// Finite-difference oracles (float64, h = 1e-5) for every differentiable op.
// The numeric side re-runs the forward pass only; it never touches backward().

using namespace licda;
using Td = Tensor<double>;
using testsupport::max_rel_err;
using testsupport::numeric_grad;

namespace {
constexpr double kTol = 1e-4;
}

TEST_CASE("conv2d gradients match finite differences") {
    Rng rng(11);
    Parameter<double> x("x", Td::randn({1, 2, 8, 8}, rng));
    Parameter<double> w("w", Td::randn({3, 2, 3, 3}, rng, 0.5));
    Parameter<double> b("b", Td::randn({3}, rng, 0.5));
    Td probe = Td::randn({1, 3, 8, 8}, rng);

    auto fwd = [&] { return sum(mul(conv2d(x.tensor(), w, b, 1, 1), probe)); };
    backward(fwd());
    CHECK(max_rel_err(x.grad(), numeric_grad(x.tensor(), [&] { return fwd().scalar(); })) < kTol);
    CHECK(max_rel_err(w.grad(), numeric_grad(w.tensor(), [&] { return fwd().scalar(); })) < kTol);
    CHECK(max_rel_err(b.grad(), numeric_grad(b.tensor(), [&] { return fwd().scalar(); })) < kTol);
}

TEST_CASE("strided padded conv2d gradients match finite differences") {
    Rng rng(12);
    Parameter<double> x("x", Td::randn({2, 3, 6, 6}, rng));
    Parameter<double> w("w", Td::randn({4, 3, 3, 3}, rng, 0.5));
    Parameter<double> b("b", Td::randn({4}, rng, 0.5));
    Td probe = Td::randn({2, 4, 3, 3}, rng);

    auto fwd = [&] { return sum(mul(conv2d(x.tensor(), w, b, 2, 1), probe)); };
    backward(fwd());
    CHECK(max_rel_err(x.grad(), numeric_grad(x.tensor(), [&] { return fwd().scalar(); })) < kTol);
    CHECK(max_rel_err(w.grad(), numeric_grad(w.tensor(), [&] { return fwd().scalar(); })) < kTol);
}

TEST_CASE("tconv2d gradients match finite differences") {
    Rng rng(13);
    Parameter<double> x("x", Td::randn({1, 3, 4, 4}, rng));
    Parameter<double> w("w", Td::randn({3, 2, 3, 3}, rng, 0.5));
    Parameter<double> b("b", Td::randn({2}, rng, 0.5));
    Td probe = Td::randn({1, 2, 8, 8}, rng);

    auto fwd = [&] { return sum(mul(tconv2d(x.tensor(), w, b, 2, 1, 1), probe)); };
    backward(fwd());
    CHECK(max_rel_err(x.grad(), numeric_grad(x.tensor(), [&] { return fwd().scalar(); })) < kTol);
    CHECK(max_rel_err(w.grad(), numeric_grad(w.tensor(), [&] { return fwd().scalar(); })) < kTol);
    CHECK(max_rel_err(b.grad(), numeric_grad(b.tensor(), [&] { return fwd().scalar(); })) < kTol);
}

TEST_CASE("pooling, activation, linear and softmax composite matches finite differences") {
    Rng rng(14);
    Parameter<double> x("x", Td::randn({2, 2, 8, 8}, rng));
    Parameter<double> w("w", Td::randn({5, 2 * 2 * 2, }, rng, 0.4));
    Parameter<double> b("b", Td::randn({5}, rng, 0.4));
    Td probe = Td::randn({2, 5}, rng);

    auto fwd = [&] {
        Td h = leaky_relu(x.tensor(), 0.2);
        Td p = maxpool2d(h, 2);                 // 8 -> 4
        Td a = adaptive_avg_pool2d(p, 2, 2);    // 4 -> 2
        Td flat = reshape(a, {2, 2 * 2 * 2});
        Td s = softmax(linear(flat, w, b), 1);
        return sum(mul(s, probe));
    };
    backward(fwd());
    CHECK(max_rel_err(x.grad(), numeric_grad(x.tensor(), [&] { return fwd().scalar(); })) < kTol);
    CHECK(max_rel_err(w.grad(), numeric_grad(w.tensor(), [&] { return fwd().scalar(); })) < kTol);
    CHECK(max_rel_err(b.grad(), numeric_grad(b.tensor(), [&] { return fwd().scalar(); })) < kTol);
}

TEST_CASE("relu and clamp gradients match finite differences away from kinks") {
    Rng rng(15);
    // keep all magnitudes above the FD step so no element crosses a kink
    std::vector<double> vals(24);
    std::uniform_real_distribution<double> mag(0.05, 1.0);
    std::bernoulli_distribution sign(0.5);
    for (auto& v : vals) v = (sign(rng) ? 1.0 : -1.0) * mag(rng);
    Parameter<double> x("x", Td::from({24}, vals));
    Td probe = Td::randn({24}, rng);

    auto fwd = [&] { return sum(mul(clamp(relu(x.tensor()), 0.0, 0.6), probe)); };
    backward(fwd());
    CHECK(max_rel_err(x.grad(), numeric_grad(x.tensor(), [&] { return fwd().scalar(); })) < kTol);
}

TEST_CASE("mse and scale_rows gradients match finite differences") {
    Rng rng(16);
    Parameter<double> a("a", Td::randn({3, 5}, rng));
    Parameter<double> s("s", Td::randn({3}, rng));
    Td target = Td::randn({3, 5}, rng);

    auto fwd = [&] { return mse(scale_rows(a.tensor(), s.tensor()), target); };
    backward(fwd());
    CHECK(max_rel_err(a.grad(), numeric_grad(a.tensor(), [&] { return fwd().scalar(); })) < kTol);
    CHECK(max_rel_err(s.grad(), numeric_grad(s.tensor(), [&] { return fwd().scalar(); })) < kTol);
}

TEST_CASE("cross entropy gradients match finite differences") {
    Rng rng(17);
    Parameter<double> logits("logits", Td::randn({4, 3}, rng));
    std::vector<int> labels{0, 2, 1, 2};

    auto fwd = [&] { return cross_entropy_with_logits(logits.tensor(), labels); };
    backward(fwd());
    CHECK(max_rel_err(logits.grad(), numeric_grad(logits.tensor(), [&] { return fwd().scalar(); })) < kTol);
}

TEST_CASE("gaussian interval likelihood gradients match finite differences") {
    Rng rng(18);
    Parameter<double> y("y", Td::randn({2, 3, 4, 4}, rng, 2.0));
    Parameter<double> mu("mu", Td::randn({3}, rng, 0.5));
    Parameter<double> sg("sg", Td::uniform({3}, rng, 0.5, 2.0));
    Td probe = Td::randn({2, 3, 4, 4}, rng);

    auto fwd = [&] { return sum(mul(log(clamp(gaussian_interval_likelihood(y.tensor(), mu.tensor(), sg.tensor()), 1e-9, 1.0)), probe)); };
    backward(fwd());
    CHECK(max_rel_err(y.grad(), numeric_grad(y.tensor(), [&] { return fwd().scalar(); })) < kTol);
    CHECK(max_rel_err(mu.grad(), numeric_grad(mu.tensor(), [&] { return fwd().scalar(); })) < kTol);
    CHECK(max_rel_err(sg.grad(), numeric_grad(sg.tensor(), [&] { return fwd().scalar(); })) < kTol);
}

TEST_CASE("col extraction gradients match finite differences") {
    Rng rng(19);
    Parameter<double> v("v", Td::randn({4, 3}, rng));
    Td probe = Td::randn({4}, rng);

    auto fwd = [&] { return sum(mul(col(v.tensor(), 1), probe)); };
    backward(fwd());
    CHECK(max_rel_err(v.grad(), numeric_grad(v.tensor(), [&] { return fwd().scalar(); })) < kTol);
}
