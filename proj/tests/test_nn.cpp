#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "circuitfusion/errors.hpp"
#include "circuitfusion/nn.hpp"

using namespace cfusion::nn;

namespace {

/// Largest entry-wise relative error between analytic and numeric gradients.
double worst_gradient_error(ParamStore& ps, const std::function<Var(Tape&)>& build) {
    ps.zero_grad();
    {
        Tape t;
        t.backward(build(t));
    }
    const auto f = [&] {
        Tape t;
        return t.scalar(build(t));
    };
    double worst = 0.0;
    for (Parameter* p : ps.all()) {
        for (Eigen::Index r = 0; r < p->value.rows(); ++r)
            for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
                const double num = finite_difference(*p, r, c, 1e-5, f);
                const double ana = p->grad(r, c);
                const double denom = std::max({std::abs(num), std::abs(ana), 1e-6});
                worst = std::max(worst, std::abs(num - ana) / denom);
            }
    }
    return worst;
}

}  // namespace

TEST_CASE("rng is reproducible and roughly standard normal") {
    Rng a(5), b(5);
    double s = 0, s2 = 0;
    for (int i = 0; i < 20000; ++i) {
        const double x = a.normal();
        CHECK(x == b.normal());
        s += x;
        s2 += x * x;
    }
    CHECK(std::abs(s / 20000) < 0.05);
    CHECK(std::abs(s2 / 20000 - 1.0) < 0.05);
}

TEST_CASE("every op's gradient matches finite differences") {
    Rng rng(11);
    ParamStore ps;
    auto& x = ps.normal("x", 4, 6, 1.0, rng);
    auto& w = ps.normal("w", 6, 6, 0.5, rng);
    auto& b = ps.normal("b", 1, 6, 0.5, rng);
    auto& gamma = ps.normal("gamma", 1, 6, 1.0, rng);
    auto& beta = ps.normal("beta", 1, 6, 1.0, rng);
    auto& table = ps.normal("table", 8, 3, 1.0, rng);
    auto& vals = ps.normal("vals", 3, 2, 1.0, rng);
    Eigen::MatrixXi idx(4, 4);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) idx(r, c) = (r * 3 + c) % 8;

    const auto build = [&](Tape& t) {
        const Var vx = t.param(x);
        Var h = add_row(t, matmul(t, vx, t.param(w)), t.param(b));
        h = layer_norm(t, gelu(t, h), t.param(gamma), t.param(beta));
        const Var q = slice_cols(t, h, 0, 3);
        const Var k = slice_cols(t, h, 3, 3);
        Var scores = scale(t, matmul_t(t, q, k), 0.5);
        scores = add(t, scores, lookup(t, t.param(table), idx, 1));
        scores = add(t, scores, scatter_pairs(t, t.param(vals), 1, {{0, 1}, {2, 3}, {1, 1}}, 4));
        const Var attn = softmax_rows(t, scores);
        Var ctx = matmul(t, attn, concat_cols(t, {q, k}));
        ctx = hadamard(t, tanh(t, ctx), sub(t, ctx, transpose(t, transpose(t, vx))));
        const Var picked = rows(t, ctx, {3, 0, 3});
        const Var placed = scatter_rows(t, picked, {1, 4, 2}, 6);
        const Var stacked = concat_rows(t, {pad_rows(t, placed, 7), embedding(t, t.param(w), {5, 0})});
        const Var unit = normalize_rows(t, stacked);
        const Var sims = matmul_t(t, unit, unit);
        const Var logits = gather_elements(t, sims, {{0, 1}, {1, 2}, {2, 3}, {3, 4}});
        const Var ce = cross_entropy(t, concat_rows(t, {logits, scale(t, logits, -1.0)}), {2, 0});
        Mat target = Mat::Ones(1, 6) * 0.3;
        const Var m = mse(t, mean_rows(t, stacked), target);
        return add(t, add(t, ce, m), mean(t, scale(t, sum(t, ctx), 0.01)));
    };
    CHECK(worst_gradient_error(ps, build) < 1e-6);
}

TEST_CASE("frozen parameters receive no gradient") {
    Rng rng(2);
    ParamStore ps;
    auto& a = ps.normal("enc.a", 2, 2, 1.0, rng);
    auto& b = ps.normal("head.b", 2, 2, 1.0, rng);
    ps.set_frozen("enc.", true);
    Tape t;
    t.backward(sum(t, matmul(t, t.param(a), t.param(b))));
    CHECK(a.grad.isZero());
    CHECK_FALSE(b.grad.isZero());
}

TEST_CASE("loss primitives") {
    Tape t;
    // uniform logits over 7 classes
    const Var u = t.constant(Mat::Zero(1, 7));
    CHECK(std::abs(t.scalar(cross_entropy(t, u, {3})) - std::log(7.0)) < 1e-12);
    Mat onehot = Mat::Zero(1, 4);
    onehot(0, 2) = 1.0;
    CHECK(t.scalar(mse(t, t.constant(Mat::Constant(1, 4, 0.25)), onehot)) == doctest::Approx(0.1875).epsilon(1e-12));
    CHECK_THROWS_AS(mse(t, u, onehot), cfusion::ShapeMismatch);
}

TEST_CASE("checkpoint round trip keeps float32 values and hashes") {
    Rng rng(9);
    ParamStore ps;
    ps.normal("a", 3, 5, 1.0, rng);
    ps.zeros("b", 1, 5);
    ps.save("ckpt_test.bin", "ckpt_test.json");

    ParamStore other;
    other.zeros("a", 3, 5);
    other.zeros("b", 1, 5);
    other.load("ckpt_test.bin", "ckpt_test.json");
    for (const char* n : {"a", "b"}) {
        CHECK(other.at(n).value.cast<float>() == ps.at(n).value.cast<float>());
        CHECK(ParamStore::tensor_hash(other.at(n).value) == ParamStore::tensor_hash(ps.at(n).value));
    }
    CHECK(other.checksum() == ps.checksum());
    CHECK(other.manifest() == ps.manifest());

    ParamStore wrong;
    wrong.zeros("a", 2, 5);
    CHECK_THROWS_AS(wrong.load("ckpt_test.bin", "ckpt_test.json"), cfusion::IoError);
    std::remove("ckpt_test.bin");
    std::remove("ckpt_test.json");
}
