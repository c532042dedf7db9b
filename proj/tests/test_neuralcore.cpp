#include "helpers.hpp"

#include <tfgn/neuralcore.hpp>

using namespace tfgn;
using testutil::random_matrix;
using testutil::to_mat;

namespace {

std::vector<double> flatten(const MlpParams<double>& p) {
    std::vector<double> out;
    for (const auto& b : p.blocks()) out.insert(out.end(), b.data(), b.data() + b.size());
    return out;
}

MlpParams<double> unflatten(const std::vector<double>& flat, const MlpParams<double>& shape) {
    MlpParams<double> p = shape;
    std::size_t pos = 0;
    for (auto b : p.blocks())
        for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = flat[pos++];
    return p;
}

struct Nested {
    oracle::Mat w1, w2;
    std::vector<double> b1, b2;
};

Nested nested(const MlpParams<double>& p) {
    return {to_mat(p.w1), to_mat(p.w2), testutil::to_vec(p.b1), testutil::to_vec(p.b2)};
}

MlpParams<double> random_net(int d_in, int h, int d_out, OutputActivation act, std::uint64_t seed) {
    MlpParams<double> p = init_mlp<double>(d_in, h, d_out, act, seed);
    std::mt19937_64 rng(seed + 1000);
    p.b1 = random_matrix(h, 1, rng, -0.5, 0.5);
    p.b2 = random_matrix(d_out, 1, rng, -0.5, 0.5);
    return p;
}

}  // namespace

TEST(Init, DeterministicGlorotZeroBias) {
    const auto a = init_mlp<double>(4, 8, 2, OutputActivation::linear, 1);
    EXPECT_EQ(a, init_mlp<double>(4, 8, 2, OutputActivation::linear, 1));
    EXPECT_FALSE(a == init_mlp<double>(4, 8, 2, OutputActivation::linear, 2));
    EXPECT_EQ(a.b1, VectorD::Zero(8));
    EXPECT_EQ(a.b2, VectorD::Zero(2));
    EXPECT_LE(a.w1.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 12.0));
    EXPECT_LE(a.w2.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 10.0));
    EXPECT_THROW(init_mlp<double>(0, 8, 2, OutputActivation::linear, 1), std::invalid_argument);
}

TEST(Init, AwaShapedGenerator) {
    const auto g = init_mlp<float>(2048 + 85, 64, 2048, OutputActivation::rectifier, 3);
    EXPECT_EQ(g.d_in(), 2133);
    EXPECT_EQ(g.d_out(), 2048);
    EXPECT_EQ(g.output, OutputActivation::rectifier);
}

TEST(Forward, ZeroNetEmitsZeros) {
    auto p = init_mlp<double>(3, 4, 2, OutputActivation::rectifier, 1);
    p.w1.setZero();
    p.w2.setZero();
    EXPECT_EQ(forward(p, MatrixD::Ones(5, 3)).output, MatrixD::Zero(5, 2));
}

TEST(Forward, LeakySlopeScalarExample) {
    MlpParams<double> p;
    p.w1 = MatrixD::Ones(1, 1);
    p.b1 = VectorD::Zero(1);
    p.w2 = MatrixD::Ones(1, 1);
    p.b2 = VectorD::Zero(1);
    p.output = OutputActivation::linear;
    const auto c = forward(p, MatrixD::Constant(1, 1, -2.0));
    EXPECT_DOUBLE_EQ(c.hidden(0, 0), -0.4);
    EXPECT_DOUBLE_EQ(c.output(0, 0), -0.4);
}

TEST(Forward, MatchesDuplicateEvaluation) {
    std::mt19937_64 rng(5);
    for (auto act : {OutputActivation::linear, OutputActivation::rectifier}) {
        const auto p = random_net(6, 9, 3, act, 42);
        const MatrixD x = random_matrix(7, 6, rng, -2, 2);
        const Nested n = nested(p);
        const auto ref = oracle::mlp_forward(to_mat(x), n.w1, n.b1, n.w2, n.b2, p.leaky_slope,
                                             act == OutputActivation::rectifier);
        EXPECT_LT(testutil::max_abs_diff(forward(p, x).output, ref), 1e-12);
    }
}

TEST(Forward, RejectsWrongWidthAndOverflow) {
    auto p = init_mlp<double>(3, 4, 2, OutputActivation::linear, 1);
    EXPECT_THROW(forward(p, MatrixD::Ones(2, 4)), std::invalid_argument);
    p.w2(0, 0) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(forward(p, MatrixD::Ones(2, 3)), NumericError);
}

TEST(ForwardProperty, RectifierOutputIsNonnegative) {
    std::mt19937_64 rng(6);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto p = random_net(5, 8, 4, OutputActivation::rectifier, seed);
        EXPECT_GE(forward(p, random_matrix(30, 5, rng, -3, 3)).output.minCoeff(), 0.0);
    }
}

TEST(ForwardProperty, BitDeterministic) {
    std::mt19937_64 rng(7);
    const auto p = random_net(5, 16, 3, OutputActivation::linear, 9);
    const MatrixD x = random_matrix(11, 5, rng);
    const MatrixD g = random_matrix(11, 3, rng);
    const auto a = backward(p, forward(p, x), g);
    const auto b = backward(p, forward(p, x), g);
    EXPECT_EQ(a.grads, b.grads);
    EXPECT_EQ(a.input_grad, b.input_grad);
}

TEST(Backward, ZeroOutputGradGivesZeroGradients) {
    const auto p = random_net(3, 5, 2, OutputActivation::linear, 1);
    const auto r = backward(p, forward(p, MatrixD::Ones(4, 3)), MatrixD::Zero(4, 2));
    EXPECT_EQ(r.grads, p.zeros_like());
    EXPECT_EQ(r.input_grad, MatrixD::Zero(4, 3));
}

TEST(Backward, ScalarChainRule) {
    MlpParams<double> p;
    p.w1 = MatrixD::Constant(1, 1, 3.0);
    p.b1 = VectorD::Zero(1);
    p.w2 = MatrixD::Ones(1, 1);
    p.b2 = VectorD::Zero(1);
    const auto r = backward(p, forward(p, MatrixD::Constant(1, 1, 2.0)), MatrixD::Constant(1, 1, 0.5));
    EXPECT_DOUBLE_EQ(r.input_grad(0, 0), 1.5);
    EXPECT_THROW(backward(p, forward(p, MatrixD::Ones(1, 1)), MatrixD::Ones(2, 1)), std::invalid_argument);
}

TEST(BackwardProperty, MatchesCentralDifferences) {
    std::mt19937_64 rng(8);
    int checked = 0;
    for (std::uint64_t seed = 0; checked < 10; ++seed) {
        const auto act = seed % 2 ? OutputActivation::rectifier : OutputActivation::linear;
        const auto p = random_net(4, 6, 3, act, seed);
        const MatrixD x = random_matrix(5, 4, rng, -2, 2);
        const MatrixD r = random_matrix(5, 3, rng);
        const auto fc = forward(p, x);
        // Skip draws where a unit sits within reach of a kink.
        double margin = fc.pre1.cwiseAbs().minCoeff();
        if (act == OutputActivation::rectifier) margin = std::min(margin, fc.pre2.cwiseAbs().minCoeff());
        if (margin < 1e-3) continue;

        const auto analytic = flatten(backward(p, fc, r).grads);
        const Nested shape = nested(p);
        auto loss = [&](const std::vector<double>& flat) {
            const Nested n = nested(unflatten(flat, p));
            const auto out = oracle::mlp_forward(to_mat(x), n.w1, n.b1, n.w2, n.b2, p.leaky_slope,
                                                 act == OutputActivation::rectifier);
            double s = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i)
                for (std::size_t j = 0; j < out[i].size(); ++j) s += out[i][j] * r(i, j);
            return s;
        };
        (void)shape;
        const auto numeric = oracle::central_gradient(loss, flatten(p));
        for (std::size_t i = 0; i < numeric.size(); ++i)
            EXPECT_LT(oracle::relative_error(analytic[i], numeric[i]), 1e-4) << "seed " << seed << " param " << i;
        ++checked;
    }
}

TEST(Interpolate, ExactConvexCombination) {
    std::mt19937_64 rng(9);
    const MatrixD a = random_matrix(4, 3, rng), b = random_matrix(4, 3, rng);
    VectorD alpha(4);
    alpha << 0.0, 1.0, 0.25, 0.5;
    const auto ib = interpolate(a, b, alpha);
    EXPECT_EQ(ib.x_hat.row(0), b.row(0));
    EXPECT_EQ(ib.x_hat.row(1), a.row(1));
    for (Eigen::Index j = 0; j < 3; ++j) EXPECT_EQ(ib.x_hat(2, j), 0.25 * a(2, j) + 0.75 * b(2, j));
}

TEST(Penalty, UnitNormLinearCriticIsFree) {
    // One hidden unit with positive pre-activation: D(x, c) = w . x.
    MlpParams<double> d;
    d.w1 = MatrixD::Zero(3, 1);
    d.w1(0, 0) = 0.6;
    d.w1(1, 0) = 0.8;
    d.b1 = VectorD::Constant(1, 100.0);
    d.w2 = MatrixD::Ones(1, 1);
    d.b2 = VectorD::Zero(1);
    const auto r = gradient_penalty(d, MatrixD::Ones(2, 2), MatrixD::Ones(2, 1), 10.0);
    EXPECT_NEAR(r.value, 0.0, 1e-10);
    EXPECT_LT(r.grads.w1.cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT(r.grads.w2.cwiseAbs().maxCoeff(), 1e-9);

    d.w1 *= 3.0;
    const auto r3 = gradient_penalty(d, MatrixD::Ones(1, 2), MatrixD::Ones(1, 1), 10.0);
    EXPECT_NEAR(r3.value, 40.0, 1e-9);
}

TEST(Penalty, EmbeddingColumnsDoNotCount) {
    MlpParams<double> d;
    d.w1 = MatrixD::Zero(3, 1);
    d.w1(2, 0) = 5.0;  // only the embedding input matters
    d.b1 = VectorD::Constant(1, 100.0);
    d.w2 = MatrixD::Ones(1, 1);
    d.b2 = VectorD::Zero(1);
    EXPECT_NEAR(gradient_penalty(d, MatrixD::Ones(1, 2), MatrixD::Ones(1, 1), 1.0).value, 1.0, 1e-5);
}

TEST(PenaltyProperty, MatchesCentralDifferences) {
    std::mt19937_64 rng(10);
    int checked = 0;
    for (std::uint64_t seed = 0; checked < 10; ++seed) {
        const int dx = 5, dc = 3;
        const auto d = random_net(dx + dc, 7, 1, OutputActivation::linear, seed);
        const MatrixD x = random_matrix(4, dx, rng, -1, 1);
        const MatrixD c = random_matrix(4, dc, rng, 0, 1);
        if (forward(d, concat_columns(x, c)).pre1.cwiseAbs().minCoeff() < 1e-3) continue;

        const auto res = gradient_penalty(d, x, c, 10.0);
        const MatrixD xc = concat_columns(x, c);
        auto value = [&](const std::vector<double>& flat) {
            const Nested n = nested(unflatten(flat, d));
            return oracle::gradient_penalty(to_mat(xc), n.w1, n.b1, n.w2, d.leaky_slope, dx, 10.0);
        };
        const Nested n0 = nested(d);
        EXPECT_NEAR(res.value, oracle::gradient_penalty(to_mat(xc), n0.w1, n0.b1, n0.w2, d.leaky_slope, dx, 10.0),
                    1e-12);
        const auto numeric = oracle::central_gradient(value, flatten(d));
        const auto analytic = flatten(res.grads);
        for (std::size_t i = 0; i < numeric.size(); ++i)
            EXPECT_LT(oracle::relative_error(analytic[i], numeric[i]), 1e-4) << "seed " << seed << " param " << i;
        EXPECT_EQ(res.grads.b1, VectorD::Zero(7));
        EXPECT_EQ(res.grads.b2, VectorD::Zero(1));
        ++checked;
    }
}

TEST(Adam, ZeroGradLeavesParamsAndCountsStep) {
    auto p = init_mlp<double>(3, 4, 2, OutputActivation::linear, 1);
    const auto before = p;
    auto st = AdamState<double>::zeros_like(p, {});
    adam_step(p, p.zeros_like(), st);
    EXPECT_EQ(p, before);
    EXPECT_EQ(st.t, 1);
}

TEST(Adam, FirstStepIsLrTimesSign) {
    auto p = init_mlp<double>(2, 3, 1, OutputActivation::linear, 4);
    const auto before = p;
    auto g = p.zeros_like();
    g.w1.setConstant(0.37);
    g.w2.setConstant(-2.5);
    AdamConfig cfg;
    cfg.lr = 1e-3;
    auto st = AdamState<double>::zeros_like(p, cfg);
    adam_step(p, g, st);
    EXPECT_LT(((p.w1 - before.w1).array() + 1e-3).abs().maxCoeff(), 1e-9);
    EXPECT_LT(((p.w2 - before.w2).array() - 1e-3).abs().maxCoeff(), 1e-9);
}

TEST(Adam, ConstantGradientStepsApproachLr) {
    MatrixD w = MatrixD::Zero(1, 1);
    MatrixAdam opt;
    opt.config.lr = 0.01;
    double last = 0.0;
    for (int i = 0; i < 2000; ++i) {
        const double prev = w(0, 0);
        opt.step(w, MatrixD::Constant(1, 1, 3.0));
        last = w(0, 0) - prev;
    }
    EXPECT_NEAR(last, -0.01, 1e-6);
}

TEST(Adam, ShapeMismatchThrows) {
    auto p = init_mlp<double>(2, 3, 1, OutputActivation::linear, 4);
    auto st = AdamState<double>::zeros_like(p, {});
    auto g = init_mlp<double>(2, 4, 1, OutputActivation::linear, 4);
    EXPECT_THROW(adam_step(p, g, st), std::invalid_argument);
}

TEST(GradCheck, QuadraticPasses) {
    const auto p = random_net(3, 4, 2, OutputActivation::linear, 2);
    auto loss = [](const MlpParams<double>& q) {
        double v = 0.0;
        for (const auto& b : q.blocks()) v += b.squaredNorm();
        MlpParams<double> g = q;
        g *= 2.0;
        return std::make_pair(v, g);
    };
    const auto rep = finite_difference_check(loss, p, 1e-6);
    EXPECT_TRUE(rep.passed) << rep.max_rel_error();
}

TEST(GradCheck, CorruptedBlockIsNamed) {
    std::mt19937_64 rng(3);
    const auto p = random_net(3, 4, 2, OutputActivation::linear, 2);
    const MatrixD x = random_matrix(5, 3, rng);
    auto loss = [&](const MlpParams<double>& q) {
        const auto fc = forward(q, x);
        auto b = backward(q, fc, MatrixD::Ones(5, 2));
        b.grads.w2 *= 2.0;
        return std::make_pair(fc.output.sum(), b.grads);
    };
    const auto rep = finite_difference_check(loss, p, 1e-4);
    EXPECT_FALSE(rep.passed);
    EXPECT_EQ(rep.failed_blocks(), std::vector<std::string>{"w2"});
}

TEST(MlpParams, CastAndArithmetic) {
    const auto p = random_net(3, 4, 2, OutputActivation::rectifier, 5);
    const auto f = p.cast<float>();
    EXPECT_EQ(f.output, OutputActivation::rectifier);
    EXPECT_NEAR(static_cast<double>(f.w1(1, 2)), p.w1(1, 2), 1e-7);
    auto q = p;
    q += p;
    q *= 0.5;
    EXPECT_TRUE(q.w1.isApprox(p.w1));
    EXPECT_TRUE(q.all_finite());
}
