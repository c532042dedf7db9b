#pragma once

#include <tfgn/core.hpp>

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace tfgn {

enum class OutputActivation { rectifier, linear };

inline const char* to_string(OutputActivation a) { return a == OutputActivation::rectifier ? "rectifier" : "linear"; }

inline constexpr double kDefaultLeakySlope = 0.2;
inline constexpr double kGradNormEpsilon = 1e-12;

/// Two-layer perceptron: act_out(lrelu(x * w1 + b1) * w2 + b2).
///
/// Gradients are carried in the same struct, so every block has a
/// parameter-shaped counterpart.
template <typename Scalar>
struct MlpParams {
    Matrix<Scalar> w1;  // d_in x h
    Vector<Scalar> b1;  // h
    Matrix<Scalar> w2;  // h x d_out
    Vector<Scalar> b2;  // d_out
    Scalar leaky_slope = Scalar(kDefaultLeakySlope);
    OutputActivation output = OutputActivation::linear;

    int d_in() const { return static_cast<int>(w1.rows()); }
    int hidden() const { return static_cast<int>(w1.cols()); }
    int d_out() const { return static_cast<int>(w2.cols()); }

    static constexpr std::array<const char*, 4> block_names{"w1", "b1", "w2", "b2"};

    std::array<Eigen::Map<Vector<Scalar>>, 4> blocks() {
        return {Eigen::Map<Vector<Scalar>>(w1.data(), w1.size()), Eigen::Map<Vector<Scalar>>(b1.data(), b1.size()),
                Eigen::Map<Vector<Scalar>>(w2.data(), w2.size()), Eigen::Map<Vector<Scalar>>(b2.data(), b2.size())};
    }
    std::array<Eigen::Map<const Vector<Scalar>>, 4> blocks() const {
        return {Eigen::Map<const Vector<Scalar>>(w1.data(), w1.size()),
                Eigen::Map<const Vector<Scalar>>(b1.data(), b1.size()),
                Eigen::Map<const Vector<Scalar>>(w2.data(), w2.size()),
                Eigen::Map<const Vector<Scalar>>(b2.data(), b2.size())};
    }

    MlpParams zeros_like() const {
        MlpParams z = *this;
        z.w1.setZero();
        z.b1.setZero();
        z.w2.setZero();
        z.b2.setZero();
        return z;
    }

    MlpParams& operator+=(const MlpParams& o) {
        w1 += o.w1;
        b1 += o.b1;
        w2 += o.w2;
        b2 += o.b2;
        return *this;
    }
    MlpParams& operator*=(Scalar s) {
        w1 *= s;
        b1 *= s;
        w2 *= s;
        b2 *= s;
        return *this;
    }

    bool all_finite() const { return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite(); }

    template <typename Other>
    MlpParams<Other> cast() const {
        MlpParams<Other> p;
        p.w1 = w1.template cast<Other>();
        p.b1 = b1.template cast<Other>();
        p.w2 = w2.template cast<Other>();
        p.b2 = b2.template cast<Other>();
        p.leaky_slope = static_cast<Other>(leaky_slope);
        p.output = output;
        return p;
    }

    bool operator==(const MlpParams& o) const {
        return w1 == o.w1 && b1 == o.b1 && w2 == o.w2 && b2 == o.b2 && leaky_slope == o.leaky_slope &&
               output == o.output;
    }
};

template <typename Scalar>
MlpParams<Scalar> init_mlp(int d_in, int hidden, int d_out, OutputActivation output, std::uint64_t seed,
                           Scalar leaky_slope = Scalar(kDefaultLeakySlope)) {
    if (d_in < 1 || hidden < 1 || d_out < 1) throw std::invalid_argument("init_mlp: dimensions must be positive");
    Rng rng(seed);
    auto glorot = [&](int fan_in, int fan_out) {
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> u(-a, a);
        Matrix<Scalar> w(fan_in, fan_out);
        // Row-major fill order so the draw sequence does not depend on storage.
        for (int i = 0; i < fan_in; ++i)
            for (int j = 0; j < fan_out; ++j) w(i, j) = static_cast<Scalar>(u(rng));
        return w;
    };
    MlpParams<Scalar> p;
    p.w1 = glorot(d_in, hidden);
    p.b1 = Vector<Scalar>::Zero(hidden);
    p.w2 = glorot(hidden, d_out);
    p.b2 = Vector<Scalar>::Zero(d_out);
    p.leaky_slope = leaky_slope;
    p.output = output;
    return p;
}

template <typename Scalar>
struct ForwardCache {
    Matrix<Scalar> input;   // n x d_in
    Matrix<Scalar> pre1;    // n x h
    Matrix<Scalar> hidden;  // n x h
    Matrix<Scalar> pre2;    // n x d_out
    Matrix<Scalar> output;  // n x d_out
};

template <typename Scalar>
ForwardCache<Scalar> forward(const MlpParams<Scalar>& p, const std::type_identity_t<Matrix<Scalar>>& input) {
    if (input.cols() != p.d_in())
        throw std::invalid_argument("forward: input width " + std::to_string(input.cols()) + ", expected " +
                                    std::to_string(p.d_in()));
    ForwardCache<Scalar> c;
    c.input = input;
    c.pre1 = (input * p.w1).rowwise() + p.b1.transpose();
    const Scalar s = p.leaky_slope;
    c.hidden = c.pre1.unaryExpr([s](Scalar v) { return v > Scalar(0) ? v : s * v; });
    c.pre2 = (c.hidden * p.w2).rowwise() + p.b2.transpose();
    if (p.output == OutputActivation::rectifier)
        c.output = c.pre2.cwiseMax(Scalar(0));
    else
        c.output = c.pre2;
    if (!c.output.allFinite()) throw NumericError("forward: non-finite network output");
    return c;
}

template <typename Scalar>
Matrix<Scalar> output_derivative(const MlpParams<Scalar>& p, const Matrix<Scalar>& pre2) {
    if (p.output == OutputActivation::rectifier)
        return pre2.unaryExpr([](Scalar v) { return v > Scalar(0) ? Scalar(1) : Scalar(0); });
    return Matrix<Scalar>::Ones(pre2.rows(), pre2.cols());
}

template <typename Scalar>
Matrix<Scalar> leaky_derivative(const MlpParams<Scalar>& p, const Matrix<Scalar>& pre1) {
    const Scalar s = p.leaky_slope;
    return pre1.unaryExpr([s](Scalar v) { return v > Scalar(0) ? Scalar(1) : s; });
}

template <typename Scalar>
struct BackwardResult {
    MlpParams<Scalar> grads;
    Matrix<Scalar> input_grad;
};

/// Exact reverse pass for the scalar whose derivative w.r.t. the network
/// output is `output_grad`.
template <typename Scalar>
BackwardResult<Scalar> backward(const MlpParams<Scalar>& p, const ForwardCache<Scalar>& c,
                                const std::type_identity_t<Matrix<Scalar>>& output_grad) {
    if (output_grad.rows() != c.output.rows() || output_grad.cols() != c.output.cols())
        throw std::invalid_argument("backward: output gradient shape mismatch");
    BackwardResult<Scalar> r;
    r.grads = p.zeros_like();
    const Matrix<Scalar> d_pre2 = output_grad.cwiseProduct(output_derivative(p, c.pre2));
    r.grads.w2.noalias() = c.hidden.transpose() * d_pre2;
    r.grads.b2 = d_pre2.colwise().sum().transpose();
    const Matrix<Scalar> d_pre1 = (d_pre2 * p.w2.transpose()).cwiseProduct(leaky_derivative(p, c.pre1));
    r.grads.w1.noalias() = c.input.transpose() * d_pre1;
    r.grads.b1 = d_pre1.colwise().sum().transpose();
    r.input_grad.noalias() = d_pre1 * p.w1.transpose();
    return r;
}

template <typename Scalar>
Matrix<Scalar> concat_columns(const Matrix<Scalar>& a, const Matrix<Scalar>& b) {
    if (a.rows() != b.rows()) throw std::invalid_argument("concat_columns: row count mismatch");
    Matrix<Scalar> out(a.rows(), a.cols() + b.cols());
    out << a, b;
    return out;
}

/// Interpolated critic inputs x_hat = alpha * x_real + (1 - alpha) * x_fake.
template <typename Scalar>
struct InterpolationBatch {
    Matrix<Scalar> x_hat;
    Vector<Scalar> alpha;
};

template <typename Scalar>
InterpolationBatch<Scalar> interpolate(const Matrix<Scalar>& x_real, const Matrix<Scalar>& x_fake,
                                       const Vector<Scalar>& alpha) {
    if (x_real.rows() != x_fake.rows() || x_real.cols() != x_fake.cols() || alpha.size() != x_real.rows())
        throw std::invalid_argument("interpolate: shape mismatch");
    InterpolationBatch<Scalar> b;
    b.alpha = alpha;
    b.x_hat.resize(x_real.rows(), x_real.cols());
    for (Eigen::Index i = 0; i < x_real.rows(); ++i)
        b.x_hat.row(i) = alpha(i) * x_real.row(i) + (Scalar(1) - alpha(i)) * x_fake.row(i);
    return b;
}

template <typename Scalar>
struct PenaltyResult {
    Scalar value = 0;
    MlpParams<Scalar> grads;
    Vector<Scalar> grad_norms;  // per-sample ||d D / d x_hat||
};

/// lambda * mean_i (||grad_{x_hat} D(x_hat_i, c_i)|| - 1)^2 and its exact
/// parameter gradient.
///
/// The input gradient of sample i is W1x * s_i with
/// s_i = lrelu'(pre1_i) .* (w2 * act_out'(pre2_i)); the activation
/// derivatives are piecewise constant, so only W1x and w2 receive gradient
/// from the penalty and the biases get exactly zero. The norm runs over the
/// feature coordinates only.
template <typename Scalar>
PenaltyResult<Scalar> gradient_penalty(const MlpParams<Scalar>& d, const std::type_identity_t<Matrix<Scalar>>& x_hat,
                                       const std::type_identity_t<Matrix<Scalar>>& c,
                                       std::type_identity_t<Scalar> lambda) {
    if (d.d_out() != 1) throw std::invalid_argument("gradient_penalty: critic must have a scalar output");
    const Eigen::Index n = x_hat.rows();
    const Eigen::Index dx = x_hat.cols();
    if (dx + c.cols() != d.d_in()) throw std::invalid_argument("gradient_penalty: input width mismatch");

    const ForwardCache<Scalar> fc = forward(d, concat_columns(x_hat, c));
    const Matrix<Scalar> lrelu_d = leaky_derivative(d, fc.pre1);     // n x h
    const Matrix<Scalar> out_d = output_derivative(d, fc.pre2);      // n x 1
    const Matrix<Scalar> s = lrelu_d.cwiseProduct(out_d * d.w2.transpose());  // n x h
    const auto w1x = d.w1.topRows(dx);                                // dx x h
    const Matrix<Scalar> gx = s * w1x.transpose();                    // n x dx

    PenaltyResult<Scalar> r;
    r.grads = d.zeros_like();
    r.grad_norms.resize(n);
    Matrix<Scalar> dgx(n, dx);  // d value / d gx
    double acc = 0.0;
    const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Scalar norm = std::sqrt(gx.row(i).squaredNorm() + Scalar(kGradNormEpsilon));
        r.grad_norms(i) = norm;
        const Scalar dev = norm - Scalar(1);
        acc += static_cast<double>(dev * dev);
        dgx.row(i) = (lambda * inv_n * Scalar(2) * dev / norm) * gx.row(i);
    }
    r.value = lambda * static_cast<Scalar>(acc / static_cast<double>(n));

    r.grads.w1.topRows(dx).noalias() = dgx.transpose() * s;
    const Matrix<Scalar> ds = dgx * w1x;  // n x h
    r.grads.w2.noalias() = ds.cwiseProduct(lrelu_d).transpose() * out_d;
    return r;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename Scalar>
struct AdamState {
    MlpParams<Scalar> m;
    MlpParams<Scalar> v;
    long t = 0;
    AdamConfig config;

    static AdamState zeros_like(const MlpParams<Scalar>& p, AdamConfig cfg) {
        return AdamState{p.zeros_like(), p.zeros_like(), 0, cfg};
    }
};

namespace detail {

template <typename P, typename G, typename M, typename V>
void adam_block(P&& param, const G& grad, M&& m, V&& v, long t, const AdamConfig& cfg) {
    using Scalar = typename std::decay_t<P>::Scalar;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (Eigen::Index i = 0; i < param.size(); ++i) {
        const double g = static_cast<double>(grad(i));
        const double mi = cfg.beta1 * static_cast<double>(m(i)) + (1.0 - cfg.beta1) * g;
        const double vi = cfg.beta2 * static_cast<double>(v(i)) + (1.0 - cfg.beta2) * g * g;
        m(i) = static_cast<Scalar>(mi);
        v(i) = static_cast<Scalar>(vi);
        const double step = cfg.lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.epsilon);
        param(i) = static_cast<Scalar>(static_cast<double>(param(i)) - step);
    }
}

}  // namespace detail

/// One bias-corrected Adam update; increments state.t.
template <typename Scalar>
void adam_step(MlpParams<Scalar>& params, const MlpParams<Scalar>& grads, AdamState<Scalar>& state) {
    ++state.t;
    auto pb = params.blocks();
    auto gb = grads.blocks();
    auto mb = state.m.blocks();
    auto vb = state.v.blocks();
    for (std::size_t b = 0; b < pb.size(); ++b) {
        if (pb[b].size() != gb[b].size() || mb[b].size() != pb[b].size())
            throw std::invalid_argument("adam_step: shape mismatch in block " + std::string(MlpParams<Scalar>::block_names[b]));
        detail::adam_block(pb[b], gb[b], mb[b], vb[b], state.t, state.config);
    }
}

/// Adam moments for a single dense weight matrix.
struct MatrixAdam {
    MatrixD m;
    MatrixD v;
    long t = 0;
    AdamConfig config;

    void step(MatrixD& w, const MatrixD& g) {
        if (m.size() == 0) {
            m = MatrixD::Zero(w.rows(), w.cols());
            v = MatrixD::Zero(w.rows(), w.cols());
        }
        ++t;
        Eigen::Map<VectorD> wp(w.data(), w.size());
        Eigen::Map<const VectorD> gp(g.data(), g.size());
        Eigen::Map<VectorD> mp(m.data(), m.size());
        Eigen::Map<VectorD> vp(v.data(), v.size());
        detail::adam_block(wp, gp, mp, vp, t, config);
    }
};

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct BlockCheck {
    std::string name;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    bool passed = true;
};

struct GradCheckReport {
    std::vector<BlockCheck> blocks;
    double tolerance = 0.0;
    bool passed = true;

    double max_rel_error() const {
        double m = 0.0;
        for (const auto& b : blocks) m = std::max(m, b.max_rel_error);
        return m;
    }
    std::vector<std::string> failed_blocks() const {
        std::vector<std::string> out;
        for (const auto& b : blocks)
            if (!b.passed) out.push_back(b.name);
        return out;
    }
};

struct GradCheckOptions {
    double step = 1e-5;
    // Denominator floor so entries whose true gradient is ~0 are judged on
    // absolute error instead of dividing rounding noise by zero.
    double abs_floor = 1e-6;
};

using LossWithGrad = std::function<std::pair<double, MlpParams<double>>(const MlpParams<double>&)>;

/// Compares the analytic gradient returned by `loss_fn` with central
/// differences, block by block.
inline GradCheckReport finite_difference_check(const LossWithGrad& loss_fn, const MlpParams<double>& params,
                                               double tolerance, GradCheckOptions opt = {}) {
    GradCheckReport report;
    report.tolerance = tolerance;
    const MlpParams<double> analytic = loss_fn(params).second;
    MlpParams<double> probe = params;
    auto probe_blocks = probe.blocks();
    const auto grad_blocks = analytic.blocks();
    for (std::size_t b = 0; b < probe_blocks.size(); ++b) {
        BlockCheck bc;
        bc.name = MlpParams<double>::block_names[b];
        for (Eigen::Index i = 0; i < probe_blocks[b].size(); ++i) {
            double& x = probe_blocks[b](i);
            const double saved = x;
            x = saved + opt.step;
            const double up = loss_fn(probe).first;
            x = saved - opt.step;
            const double down = loss_fn(probe).first;
            x = saved;
            const double numeric = (up - down) / (2.0 * opt.step);
            const double a = grad_blocks[b](i);
            const double abs_err = std::abs(a - numeric);
            const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), opt.abs_floor});
            bc.max_abs_error = std::max(bc.max_abs_error, abs_err);
            bc.max_rel_error = std::max(bc.max_rel_error, rel);
        }
        bc.passed = bc.max_rel_error < tolerance;
        report.passed = report.passed && bc.passed;
        report.blocks.push_back(bc);
    }
    return report;
}

}  // namespace tfgn
