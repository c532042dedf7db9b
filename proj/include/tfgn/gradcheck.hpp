#pragma once

#include <tfgn/classify.hpp>
#include <tfgn/dataset.hpp>
#include <tfgn/gan.hpp>
#include <tfgn/neuralcore.hpp>

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

namespace tfgn {

/// A small random training state on which both adversarial objectives can be
/// differentiated numerically.
struct GradCheckInstance {
    DatasetBundle bundle;
    TrainingConfig config;
    GanModel model;
    SoftmaxClassifier seen_classifier;
    SoftmaxClassifier transfer_classifier;
    CriticBatch critic_batch;
    GeneratorBatch generator_batch;
};

inline GradCheckInstance make_gradcheck_instance(std::uint64_t seed, int hidden = 16, int d_x = 8, int d_c = 4,
                                                 int batch_size = 4) {
    GradCheckInstance g;
    SyntheticBenchmarkSpec spec;
    spec.n_seen = 4;
    spec.n_unseen = 3;
    spec.d_x = d_x;
    spec.d_c = d_c;
    spec.samples_per_class = 4;
    spec.cluster_spread = 0.3;
    spec.seed = substream_seed(seed, "gradcheck.data");
    g.bundle = synthesize_benchmark(spec);

    g.config.hidden_units = hidden;
    g.config.batch_size = batch_size;
    g.config.k_neighbors = 2;
    g.config.tra2_in_critic = true;
    g.config.seed = seed;
    g.model = init_model(d_x, d_c, g.config);

    // Random (untrained) classifier weights keep the instance cheap.
    Rng rng = make_rng(seed, "gradcheck.classifier");
    std::normal_distribution<double> gauss(0.0, 1.0);
    g.seen_classifier.class_ids = g.bundle.seen_classes;
    g.seen_classifier.weights.resize(d_x, g.bundle.n_seen());
    for (Eigen::Index i = 0; i < g.seen_classifier.weights.size(); ++i) g.seen_classifier.weights(i) = gauss(rng);
    g.transfer_classifier = build_transfer_classifier(g.seen_classifier, build_graph(g.bundle, g.config),
                                                      g.config.transfer, g.bundle.unseen_classes);

    Rng batches = make_rng(seed, "gradcheck.batches");
    g.critic_batch = draw_critic_batch(g.bundle, batch_size, batches);
    g.generator_batch = draw_generator_batch(g.bundle, g.critic_batch, batches);
    return g;
}

/// Minimized critic loss as a function of the discriminator parameters.
inline LossWithGrad critic_loss_fn(const GradCheckInstance& g) {
    return [&g](const MlpParams<double>& d) {
        GanModel m = g.model;
        m.discriminator = d;
        ObjectiveResult r = critic_objective(m, g.critic_batch, g.config);
        return std::make_pair(r.minimized, std::move(r.grads));
    };
}

/// Minimized generator loss as a function of the generator parameters.
inline LossWithGrad generator_loss_fn(const GradCheckInstance& g) {
    return [&g](const MlpParams<double>& gen) {
        GanModel m = g.model;
        m.generator = gen;
        ObjectiveResult r =
            generator_objective(m, g.generator_batch, g.config, g.seen_classifier, g.transfer_classifier);
        return std::make_pair(r.minimized, std::move(r.grads));
    };
}

/// Smallest |pre-activation| at any rectifier or leaky-ReLU unit touched by
/// either objective. Central differences are meaningless when a parameter
/// step can push one of these across zero.
inline double min_kink_distance(const GradCheckInstance& g) {
    double m = std::numeric_limits<double>::infinity();
    auto scan = [&](const MlpParams<double>& net, const MatrixD& in) {
        const auto fc = forward(net, in);
        m = std::min(m, fc.pre1.cwiseAbs().minCoeff());
        if (net.output == OutputActivation::rectifier) m = std::min(m, fc.pre2.cwiseAbs().minCoeff());
        return fc.output;
    };
    const auto& cb = g.critic_batch;
    const auto& gb = g.generator_batch;
    const MatrixD xf = scan(g.model.generator, concat_columns(cb.z_seen, cb.c_seen));
    const MatrixD xu = scan(g.model.generator, concat_columns(cb.z_unseen, cb.c_unseen));
    const MatrixD gs = scan(g.model.generator, concat_columns(gb.z_seen, gb.c_seen));
    const MatrixD gu = scan(g.model.generator, concat_columns(gb.z_unseen, gb.c_unseen));
    const MatrixD xh = interpolate(cb.x_real, xf, cb.alpha).x_hat;
    scan(g.model.discriminator, concat_columns(cb.x_real, cb.c_seen));
    scan(g.model.discriminator, concat_columns(xf, cb.c_seen));
    scan(g.model.discriminator, concat_columns(xh, cb.c_seen));
    scan(g.model.discriminator, concat_columns(xu, cb.c_unseen));
    scan(g.model.discriminator, concat_columns(gs, gb.c_seen));
    scan(g.model.discriminator, concat_columns(gu, gb.c_unseen));
    return m;
}

struct ObjectiveCheck {
    std::uint64_t seed = 0;
    double kink_distance = 0.0;
    GradCheckReport critic;
    GradCheckReport generator;
};

inline ObjectiveCheck check_objective_gradients(std::uint64_t seed, double tolerance, int hidden = 16, int d_x = 8,
                                                int d_c = 4) {
    const GradCheckInstance g = make_gradcheck_instance(seed, hidden, d_x, d_c);
    ObjectiveCheck out;
    out.seed = seed;
    out.kink_distance = min_kink_distance(g);
    out.critic = finite_difference_check(critic_loss_fn(g), g.model.discriminator, tolerance);
    out.generator = finite_difference_check(generator_loss_fn(g), g.model.generator, tolerance);
    return out;
}

}  // namespace tfgn
