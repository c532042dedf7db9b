#pragma once

#include <tfgn/classify.hpp>
#include <tfgn/core.hpp>
#include <tfgn/dataset.hpp>
#include <tfgn/neuralcore.hpp>
#include <tfgn/semgraph.hpp>

#include <chrono>
#include <string>
#include <vector>

namespace tfgn {

struct LossSwitches {
    bool cls = true;
    bool tra1 = true;
    bool tra2 = true;

    bool operator==(const LossSwitches&) const = default;
};

struct TrainingConfig {
    double lambda_gp = 10.0;
    double beta_cls = 0.01;
    double gamma_tra1 = 0.01;
    double eta_tra2 = 1.0;
    int k_neighbors = 5;
    bool include_self = true;
    int n_critic = 5;
    int batch_size = 64;
    long g_steps = 2000;
    int hidden_units = 4096;
    double leaky_slope = kDefaultLeakySlope;
    int noise_dim = 0;  // 0 means "same as d_c"; any other value must equal d_c
    AdamConfig adam{};
    TransferVariant transfer{};
    LossSwitches switches{};
    bool tra2_in_critic = false;  // see README, "Training notes"
    SoftmaxTrainConfig seen_classifier{};
    std::uint64_t seed = 0;
};

inline void validate_training_config(const TrainingConfig& c) {
    auto need = [](bool ok, const char* path, const char* what) {
        if (!ok) throw ConfigError(std::string(path) + ": " + what);
    };
    need(c.lambda_gp >= 0, "training.lambda_gp", "must be >= 0");
    need(c.beta_cls >= 0, "training.beta_cls", "must be >= 0");
    need(c.gamma_tra1 >= 0, "training.gamma_tra1", "must be >= 0");
    need(c.eta_tra2 >= 0, "training.eta_tra2", "must be >= 0");
    need(c.k_neighbors >= 1, "training.k_neighbors", "must be >= 1");
    need(c.n_critic >= 1, "training.n_critic", "must be >= 1");
    need(c.batch_size >= 1, "training.batch_size", "must be >= 1");
    need(c.g_steps >= 0, "training.g_steps", "must be >= 0");
    need(c.hidden_units >= 1, "training.hidden_units", "must be >= 1");
    need(c.noise_dim >= 0, "training.noise_dim", "must be >= 0");
    need(c.adam.lr > 0, "training.adam.lr", "must be > 0");
    need(c.adam.beta1 >= 0 && c.adam.beta1 < 1, "training.adam.beta1", "must be in [0, 1)");
    need(c.adam.beta2 >= 0 && c.adam.beta2 < 1, "training.adam.beta2", "must be in [0, 1)");
    need(!c.transfer.ridge || *c.transfer.ridge >= 0, "training.ridge", "must be >= 0");
    need(c.seen_classifier.epochs >= 0, "training.seen_classifier.epochs", "must be >= 0");
}

struct GanModel {
    MlpParams<double> generator;      // [z | c] -> x, rectifier output
    MlpParams<double> discriminator;  // [x | c] -> critic value, linear output

    int d_x() const { return generator.d_out(); }
    int d_c() const { return discriminator.d_in() - generator.d_out(); }

    bool operator==(const GanModel&) const = default;
};

inline GanModel init_model(int d_x, int d_c, const TrainingConfig& cfg) {
    if (cfg.noise_dim != 0 && cfg.noise_dim != d_c)
        throw ConfigError("training.noise_dim: must equal d_c (" + std::to_string(d_c) + ")");
    GanModel m;
    m.generator = init_mlp<double>(d_c + d_c, cfg.hidden_units, d_x, OutputActivation::rectifier,
                                   substream_seed(cfg.seed, "init.generator"), cfg.leaky_slope);
    m.discriminator = init_mlp<double>(d_x + d_c, cfg.hidden_units, 1, OutputActivation::linear,
                                       substream_seed(cfg.seed, "init.discriminator"), cfg.leaky_slope);
    return m;
}

inline MatrixD sample_noise(int n, int d_z, Rng& rng) {
    if (n < 1 || d_z < 1) throw std::invalid_argument("sample_noise: n and d_z must be >= 1");
    std::normal_distribution<double> gauss(0.0, 1.0);
    MatrixD z(n, d_z);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d_z; ++j) z(i, j) = gauss(rng);
    return z;
}

// ---------------------------------------------------------------------------
// Loss terms

struct WganLoss {
    double value = 0.0;     // mean D(real) - mean D(fake) - penalty
    double penalty = 0.0;
    MlpParams<double> d_grads;  // d value / d critic parameters
    MatrixD fake_grad;          // d (-mean D(fake)) / d x_fake, penalty excluded
};

inline WganLoss loss_wgan(const MlpParams<double>& d, const MatrixD& x_real, const MatrixD& x_fake, const MatrixD& c,
                          const VectorD& alpha, double lambda_gp) {
    const auto n = static_cast<double>(x_real.rows());
    const auto real = forward(d, concat_columns(x_real, c));
    const auto fake = forward(d, concat_columns(x_fake, c));
    const auto gp = gradient_penalty(d, interpolate(x_real, x_fake, alpha).x_hat, c, lambda_gp);

    WganLoss r;
    r.penalty = gp.value;
    r.value = real.output.mean() - fake.output.mean() - gp.value;
    if (!std::isfinite(r.value)) throw NumericError("loss_wgan: non-finite loss");

    const MatrixD ones = MatrixD::Constant(x_real.rows(), 1, 1.0 / n);
    auto br = backward(d, real, ones);
    auto bf = backward(d, fake, MatrixD(-ones));
    r.d_grads = br.grads;
    r.d_grads += bf.grads;
    MlpParams<double> neg_gp = gp.grads;
    neg_gp *= -1.0;
    r.d_grads += neg_gp;
    r.fake_grad = bf.input_grad.leftCols(x_fake.cols());
    return r;
}

inline WganLoss loss_wgan(const MlpParams<double>& d, const MatrixD& x_real, const MatrixD& x_fake, const MatrixD& c,
                          double lambda_gp, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    VectorD alpha(x_real.rows());
    for (Eigen::Index i = 0; i < alpha.size(); ++i) alpha(i) = u(rng);
    return loss_wgan(d, x_real, x_fake, c, alpha, lambda_gp);
}

struct ClassifierLoss {
    double value = 0.0;
    MatrixD input_grad;  // d value / d features
};

namespace detail {

inline ClassifierLoss frozen_classifier_loss(const SoftmaxClassifier& clf, const MatrixD& x,
                                             const std::vector<ClassId>& y, const char* context) {
    const auto cols = label_columns(clf, y, context);
    auto l = softmax_nll(clf.weights, x, cols);
    return {l.value, std::move(l.input_grad)};
}

}  // namespace detail

/// Negative log-likelihood of generated seen features under the frozen
/// seen-class classifier.
inline ClassifierLoss loss_cls(const SoftmaxClassifier& seen_clf, const MatrixD& x_fake_seen,
                               const std::vector<ClassId>& y_seen) {
    return detail::frozen_classifier_loss(seen_clf, x_fake_seen, y_seen, "loss_cls");
}

/// Negative log-likelihood of generated unseen features under the
/// transferred classifier.
inline ClassifierLoss loss_tra1(const SoftmaxClassifier& transfer_clf, const MatrixD& x_fake_unseen,
                                const std::vector<ClassId>& y_unseen) {
    return detail::frozen_classifier_loss(transfer_clf, x_fake_unseen, y_unseen, "loss_tra1");
}

struct CriticScoreLoss {
    double value = 0.0;          // -mean D(x, c)
    MlpParams<double> d_grads;   // d value / d critic parameters
    MatrixD input_grad;          // d value / d x
};

inline CriticScoreLoss loss_tra2(const MlpParams<double>& d, const MatrixD& x_fake_unseen, const MatrixD& c_unseen) {
    const auto fc = forward(d, concat_columns(x_fake_unseen, c_unseen));
    CriticScoreLoss r;
    r.value = -fc.output.mean();
    auto b = backward(d, fc, MatrixD::Constant(x_fake_unseen.rows(), 1, -1.0 / static_cast<double>(x_fake_unseen.rows())));
    r.d_grads = std::move(b.grads);
    r.input_grad = b.input_grad.leftCols(x_fake_unseen.cols());
    return r;
}

// ---------------------------------------------------------------------------
// Batches

/// Everything random in one critic step, drawn up front so the objective
/// itself is a deterministic function.
struct CriticBatch {
    MatrixD x_real;
    std::vector<ClassId> y_seen;
    MatrixD c_seen;
    MatrixD z_seen;
    VectorD alpha;
    std::vector<ClassId> y_unseen;
    MatrixD c_unseen;
    MatrixD z_unseen;
};

struct GeneratorBatch {
    std::vector<ClassId> y_seen;
    MatrixD c_seen;
    MatrixD z_seen;
    std::vector<ClassId> y_unseen;
    MatrixD c_unseen;
    MatrixD z_unseen;
};

namespace detail {

inline std::vector<ClassId> draw_unseen_labels(const DatasetBundle& b, int n, Rng& rng) {
    std::uniform_int_distribution<int> pick(0, b.n_unseen() - 1);
    std::vector<ClassId> y(static_cast<std::size_t>(n));
    for (auto& v : y) v = b.unseen_classes[static_cast<std::size_t>(pick(rng))];
    return y;
}

}  // namespace detail

inline CriticBatch draw_critic_batch(const DatasetBundle& b, int batch_size, Rng& rng) {
    if (b.train_indices.empty()) throw DataError("draw_critic_batch: empty train split");
    if (b.unseen_classes.empty()) throw DataError("draw_critic_batch: no unseen classes");
    CriticBatch cb;
    std::uniform_int_distribution<std::size_t> pick(0, b.train_indices.size() - 1);
    cb.x_real.resize(batch_size, b.d_x);
    for (int i = 0; i < batch_size; ++i) {
        const int row = b.train_indices[pick(rng)];
        cb.x_real.row(i) = b.features.row(row);
        cb.y_seen.push_back(b.sample_labels[row]);
    }
    cb.c_seen = b.embeddings_of(cb.y_seen);
    cb.z_seen = sample_noise(batch_size, b.d_c, rng);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    cb.alpha.resize(batch_size);
    for (int i = 0; i < batch_size; ++i) cb.alpha(i) = u(rng);
    cb.y_unseen = detail::draw_unseen_labels(b, batch_size, rng);
    cb.c_unseen = b.embeddings_of(cb.y_unseen);
    cb.z_unseen = sample_noise(batch_size, b.d_c, rng);
    return cb;
}

/// Seen conditions are reused from the preceding critic batch; noise and the
/// unseen conditions are fresh.
inline GeneratorBatch draw_generator_batch(const DatasetBundle& b, const CriticBatch& last_critic, Rng& rng) {
    GeneratorBatch gb;
    const int n = static_cast<int>(last_critic.y_seen.size());
    gb.y_seen = last_critic.y_seen;
    gb.c_seen = last_critic.c_seen;
    gb.z_seen = sample_noise(n, b.d_c, rng);
    gb.y_unseen = detail::draw_unseen_labels(b, n, rng);
    gb.c_unseen = b.embeddings_of(gb.y_unseen);
    gb.z_unseen = sample_noise(n, b.d_c, rng);
    return gb;
}

// ---------------------------------------------------------------------------
// Objectives

enum class StepPhase { critic, generator };

inline const char* to_string(StepPhase p) { return p == StepPhase::critic ? "critic" : "generator"; }

struct StepRecord {
    long step = 0;
    StepPhase phase = StepPhase::critic;
    double l_wgan = 0.0;
    double l_cls = 0.0;
    double l_tra1 = 0.0;
    double l_tra2 = 0.0;
    double total = 0.0;
    double wall_ms = 0.0;

    // Wall time is excluded: it is the only nondeterministic field.
    bool same_values(const StepRecord& o) const {
        return step == o.step && phase == o.phase && l_wgan == o.l_wgan && l_cls == o.l_cls && l_tra1 == o.l_tra1 &&
               l_tra2 == o.l_tra2 && total == o.total;
    }
};

struct TrainLog {
    std::vector<StepRecord> records;

    bool same_values(const TrainLog& o) const {
        if (records.size() != o.records.size()) return false;
        for (std::size_t i = 0; i < records.size(); ++i)
            if (!records[i].same_values(o.records[i])) return false;
        return true;
    }
};

inline double weighted_total(const StepRecord& r, const TrainingConfig& cfg) {
    return r.l_wgan + cfg.beta_cls * r.l_cls + cfg.gamma_tra1 * r.l_tra1 + cfg.eta_tra2 * r.l_tra2;
}

struct ObjectiveResult {
    StepRecord record;         // component values; record.total is the weighted sum
    MlpParams<double> grads;   // gradient of the minimized loss w.r.t. the updated network
    double minimized = 0.0;    // scalar the grads differentiate
};

inline bool term_active(bool on, double weight) { return on && weight != 0.0; }

/// Critic side of the min-max: the critic maximizes L_WGAN (+ eta * L_TRA2
/// when tra2 is enabled and tra2_in_critic), so the minimized loss is the
/// negation.
inline ObjectiveResult critic_objective(const GanModel& model, const CriticBatch& batch, const TrainingConfig& cfg) {
    const MatrixD x_fake = forward(model.generator, concat_columns(batch.z_seen, batch.c_seen)).output;
    WganLoss w = loss_wgan(model.discriminator, batch.x_real, x_fake, batch.c_seen, batch.alpha, cfg.lambda_gp);

    ObjectiveResult r;
    r.record.phase = StepPhase::critic;
    r.record.l_wgan = w.value;
    r.grads = w.d_grads;
    r.grads *= -1.0;
    r.minimized = -w.value;

    if (cfg.switches.tra2 && cfg.tra2_in_critic) {
        const MatrixD x_fake_u = forward(model.generator, concat_columns(batch.z_unseen, batch.c_unseen)).output;
        CriticScoreLoss t = loss_tra2(model.discriminator, x_fake_u, batch.c_unseen);
        r.record.l_tra2 = t.value;
        if (term_active(true, cfg.eta_tra2)) {
            t.d_grads *= -cfg.eta_tra2;
            r.grads += t.d_grads;
            r.minimized -= cfg.eta_tra2 * t.value;
        }
    }
    r.record.total = weighted_total(r.record, cfg);
    if (!std::isfinite(r.minimized) || !r.grads.all_finite()) throw NumericError("critic objective is not finite");
    return r;
}

/// Generator side: minimizes -mean D(G(z, c_s), c_s) + beta * L_CLS
/// + gamma * L_TRA1 + eta * L_TRA2.
inline ObjectiveResult generator_objective(const GanModel& model, const GeneratorBatch& batch,
                                           const TrainingConfig& cfg, const SoftmaxClassifier& seen_clf,
                                           const SoftmaxClassifier& transfer_clf) {
    const int dx = model.d_x();
    const auto gs = forward(model.generator, concat_columns(batch.z_seen, batch.c_seen));
    const auto ds = forward(model.discriminator, concat_columns(gs.output, batch.c_seen));
    const double ns = static_cast<double>(gs.output.rows());

    ObjectiveResult r;
    r.record.phase = StepPhase::generator;
    r.record.l_wgan = -ds.output.mean();
    r.minimized = r.record.l_wgan;
    MatrixD grad_xs =
        backward(model.discriminator, ds, MatrixD::Constant(ds.output.rows(), 1, -1.0 / ns)).input_grad.leftCols(dx);

    if (cfg.switches.cls) {
        const ClassifierLoss l = loss_cls(seen_clf, gs.output, batch.y_seen);
        r.record.l_cls = l.value;
        if (term_active(true, cfg.beta_cls)) {
            grad_xs += cfg.beta_cls * l.input_grad;
            r.minimized += cfg.beta_cls * l.value;
        }
    }

    r.grads = backward(model.generator, gs, grad_xs).grads;

    const bool need_unseen = cfg.switches.tra1 || cfg.switches.tra2;
    if (need_unseen) {
        const auto gu = forward(model.generator, concat_columns(batch.z_unseen, batch.c_unseen));
        MatrixD grad_xu = MatrixD::Zero(gu.output.rows(), dx);
        bool any = false;
        if (cfg.switches.tra1) {
            const ClassifierLoss l = loss_tra1(transfer_clf, gu.output, batch.y_unseen);
            r.record.l_tra1 = l.value;
            if (term_active(true, cfg.gamma_tra1)) {
                grad_xu += cfg.gamma_tra1 * l.input_grad;
                r.minimized += cfg.gamma_tra1 * l.value;
                any = true;
            }
        }
        if (cfg.switches.tra2) {
            const CriticScoreLoss l = loss_tra2(model.discriminator, gu.output, batch.c_unseen);
            r.record.l_tra2 = l.value;
            if (term_active(true, cfg.eta_tra2)) {
                grad_xu += cfg.eta_tra2 * l.input_grad;
                r.minimized += cfg.eta_tra2 * l.value;
                any = true;
            }
        }
        if (any) r.grads += backward(model.generator, gu, grad_xu).grads;
    }
    r.record.total = weighted_total(r.record, cfg);
    if (!std::isfinite(r.minimized) || !r.grads.all_finite()) throw NumericError("generator objective is not finite");
    return r;
}

// ---------------------------------------------------------------------------
// Steps and training loop

struct OptimizerStates {
    AdamState<double> generator;
    AdamState<double> discriminator;

    static OptimizerStates for_model(const GanModel& m, const AdamConfig& cfg) {
        return {AdamState<double>::zeros_like(m.generator, cfg), AdamState<double>::zeros_like(m.discriminator, cfg)};
    }
};

inline StepRecord critic_step(GanModel& model, OptimizerStates& opt, const CriticBatch& batch,
                              const TrainingConfig& cfg) {
    ObjectiveResult r = critic_objective(model, batch, cfg);
    adam_step(model.discriminator, r.grads, opt.discriminator);
    return r.record;
}

inline StepRecord generator_step(GanModel& model, OptimizerStates& opt, const GeneratorBatch& batch,
                                 const TrainingConfig& cfg, const SoftmaxClassifier& seen_clf,
                                 const SoftmaxClassifier& transfer_clf) {
    ObjectiveResult r = generator_objective(model, batch, cfg, seen_clf, transfer_clf);
    adam_step(model.generator, r.grads, opt.generator);
    return r.record;
}

struct TrainResult {
    GanModel model;
    TrainLog log;
    SoftmaxClassifier seen_classifier;
    SoftmaxClassifier transfer_classifier;
};

/// Seen-class classifier on the real train split.
inline SoftmaxClassifier train_seen_classifier(const DatasetBundle& b, const SoftmaxTrainConfig& cfg) {
    MatrixD x(static_cast<Eigen::Index>(b.train_indices.size()), b.d_x);
    std::vector<ClassId> y;
    for (std::size_t i = 0; i < b.train_indices.size(); ++i) {
        x.row(static_cast<Eigen::Index>(i)) = b.features.row(b.train_indices[i]);
        y.push_back(b.sample_labels[b.train_indices[i]]);
    }
    return train_softmax(x, y, b.seen_classes, cfg, ClassifierRole::seen_real);
}

inline SimilarityGraph build_graph(const DatasetBundle& b, const TrainingConfig& cfg) {
    return build_graph(b.embeddings_of(b.seen_classes), b.embeddings_of(b.unseen_classes), cfg.k_neighbors,
                       cfg.include_self);
}

/// Classifiers first, then n_critic critic updates per generator update for
/// cfg.g_steps generator updates. The transfer classifier is fixed for the
/// whole loop.
inline TrainResult train(const DatasetBundle& bundle, const TrainingConfig& cfg, const SimilarityGraph& graph) {
    validate_training_config(cfg);
    if (graph.k_neighbors != cfg.k_neighbors)
        throw ConfigError("training.k_neighbors: graph was built with k=" + std::to_string(graph.k_neighbors));
    if (const auto v = validate_bundle(bundle); !v.empty())
        throw DataError("train: invalid bundle: " + v.front().invariant + ": " + v.front().message);

    TrainResult out;
    out.seen_classifier = train_seen_classifier(bundle, cfg.seen_classifier);
    out.transfer_classifier =
        build_transfer_classifier(out.seen_classifier, graph, cfg.transfer, bundle.unseen_classes);
    out.model = init_model(bundle.d_x, bundle.d_c, cfg);

    OptimizerStates opt = OptimizerStates::for_model(out.model, cfg.adam);
    Rng rng = make_rng(cfg.seed, "train.batches");
    long step = 0;
    out.log.records.reserve(static_cast<std::size_t>(cfg.g_steps * (cfg.n_critic + 1)));
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    auto stamp = [&](StepRecord rec) {
        rec.step = step++;
        rec.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        out.log.records.push_back(rec);
    };

    for (long g = 0; g < cfg.g_steps; ++g) {
        CriticBatch last;
        int c = 0;
        try {
            for (c = 0; c < cfg.n_critic; ++c) {
                last = draw_critic_batch(bundle, cfg.batch_size, rng);
                stamp(critic_step(out.model, opt, last, cfg));
            }
            c = -1;
            const GeneratorBatch gb = draw_generator_batch(bundle, last, rng);
            stamp(generator_step(out.model, opt, gb, cfg, out.seen_classifier, out.transfer_classifier));
        } catch (const NumericError& e) {
            const std::string where = c >= 0 ? "critic update " + std::to_string(c) : std::string("generator update");
            throw NumericError("train: generator step " + std::to_string(g) + ", " + where + ": " + e.what());
        }
    }
    return out;
}

inline TrainResult train(const DatasetBundle& bundle, const TrainingConfig& cfg) {
    return train(bundle, cfg, build_graph(bundle, cfg));
}

/// per_class draws x = G(z, c(y)) for each class in `class_ids`, grouped by
/// class in the given order.
inline LabeledFeatures generate_features(const MlpParams<double>& g, const std::vector<ClassId>& class_ids,
                                         const MatrixD& class_embeddings, int per_class, std::uint64_t seed) {
    if (per_class < 1) throw std::invalid_argument("generate_features: per_class must be >= 1");
    const auto d_c = class_embeddings.cols();
    if (g.d_in() != 2 * d_c) throw std::invalid_argument("generate_features: generator input does not match d_c");
    Rng rng(seed);
    LabeledFeatures out;
    const int n = per_class * static_cast<int>(class_ids.size());
    if (n == 0) {
        out.features.resize(0, g.d_out());
        return out;
    }
    MatrixD cond(n, d_c);
    for (std::size_t k = 0; k < class_ids.size(); ++k) {
        for (int s = 0; s < per_class; ++s) {
            cond.row(static_cast<Eigen::Index>(k) * per_class + s) = class_embeddings.row(class_ids[k]);
            out.labels.push_back(class_ids[k]);
        }
    }
    const MatrixD z = sample_noise(n, static_cast<int>(d_c), rng);
    out.features = forward(g, concat_columns(z, cond)).output;
    return out;
}

}  // namespace tfgn
