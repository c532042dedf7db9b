#include "helpers.hpp"

#include <tfgn/classify.hpp>

#include <set>

using namespace tfgn;
using testutil::random_matrix;

namespace {

SoftmaxClassifier fixed(MatrixD w, std::vector<ClassId> ids) {
    SoftmaxClassifier c;
    c.weights = std::move(w);
    c.class_ids = std::move(ids);
    return c;
}

VectorD vec(std::initializer_list<double> v) {
    VectorD out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

}  // namespace

TEST(Softmax, SeparableLineIsLearned) {
    // Class 3 on the positive side, class 5 on the negative side, plus a
    // constant column so the bias-free model can still separate them.
    MatrixD x(6, 2);
    x << 1, 1, 2, 1, 3, 1, -1, 1, -2, 1, -3, 1;
    const std::vector<ClassId> y{3, 3, 3, 5, 5, 5};
    std::vector<double> trace;
    const auto clf = train_softmax(x, y, {3, 5}, {200, {1e-2, 0.9, 0.999, 1e-8}}, ClassifierRole::seen_real, &trace);
    ASSERT_EQ(trace.size(), 201u);
    for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1] + 1e-12) << "epoch " << i;
    EXPECT_NEAR(trace.front(), std::log(2.0), 1e-12);
    EXPECT_EQ(predict_labels(clf, x), y);
}

TEST(Softmax, SingleClassHasZeroLoss) {
    std::mt19937_64 rng(1);
    const MatrixD x = random_matrix(4, 3, rng);
    std::vector<double> trace;
    train_softmax(x, {7, 7, 7, 7}, {7}, {5, {}}, ClassifierRole::seen_real, &trace);
    for (double v : trace) EXPECT_EQ(v, 0.0);
}

TEST(Softmax, DuplicatingTheDataChangesNothing) {
    std::mt19937_64 rng(2);
    const MatrixD x = random_matrix(6, 3, rng);
    const std::vector<ClassId> y{0, 1, 2, 0, 1, 2};
    MatrixD x2(12, 3);
    x2 << x, x;
    std::vector<ClassId> y2 = y;
    y2.insert(y2.end(), y.begin(), y.end());
    const auto a = train_softmax(x, y, {0, 1, 2}, {});
    const auto b = train_softmax(x2, y2, {0, 1, 2}, {});
    EXPECT_LT((a.weights - b.weights).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Softmax, LossMatchesTermByTermOracle) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const MatrixD w = random_matrix(4, 5, rng, -2, 2);
        const MatrixD x = random_matrix(7, 4, rng, -2, 2);
        std::vector<int> cols;
        for (int i = 0; i < 7; ++i) cols.push_back((i * 3 + trial) % 5);
        const auto l = softmax_nll(w, x, cols);
        EXPECT_NEAR(l.value, oracle::softmax_nll(testutil::to_mat(x * w), cols), 1e-12);

        std::vector<double> flat(w.data(), w.data() + w.size());
        auto f = [&](const std::vector<double>& v) {
            const MatrixD wv = Eigen::Map<const MatrixD>(v.data(), 4, 5);
            return oracle::softmax_nll(testutil::to_mat(x * wv), cols);
        };
        const auto g = oracle::central_gradient(f, flat);
        for (std::size_t i = 0; i < g.size(); ++i)
            EXPECT_LT(oracle::relative_error(l.weight_grad.data()[i], g[i]), 1e-6);
    }
}

TEST(Softmax, EmptyClassIsAnError) {
    EXPECT_THROW(train_softmax(MatrixD::Ones(2, 2), {0, 0}, {0, 1}, {}), DataError);
    EXPECT_THROW(train_softmax(MatrixD::Ones(2, 2), {0, 9}, {0, 1}, {}), std::invalid_argument);
    EXPECT_THROW(train_softmax(MatrixD::Ones(2, 2), {0}, {0, 1}, {}), std::invalid_argument);
}

TEST(Predict, ProbabilityExamples) {
    EXPECT_TRUE(predict_probs(fixed(MatrixD::Zero(2, 4), {0, 1, 2, 3}), vec({1, 2})).isApprox(VectorD::Constant(4, 0.25)));
    const VectorD p = softmax(vec({std::log(3.0), 0.0}));
    EXPECT_NEAR(p(0), 0.75, 1e-15);
    EXPECT_NEAR(p(1), 0.25, 1e-15);
    EXPECT_LT((softmax(vec({1, 2, 3})) - softmax(vec({101, 102, 103}))).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_THROW(predict_probs(fixed(MatrixD::Zero(2, 4), {0, 1, 2, 3}), vec({1, 2, 3})), std::invalid_argument);
}

TEST(Predict, TiesGoToTheLowestId) {
    const auto clf = fixed(MatrixD::Zero(1, 3), {9, 4, 6});
    EXPECT_EQ(predict_label(clf, vec({1.0})), 4);
}

TEST(PredictProperty, MatchesArgmaxOracle) {
    std::mt19937_64 rng(4);
    const std::vector<ClassId> ids{10, 3, 7, 1, 5};
    for (int trial = 0; trial < 50; ++trial) {
        const auto clf = fixed(random_matrix(3, 5, rng), ids);
        const VectorD x = random_matrix(3, 1, rng);
        const VectorD s = clf.weights.transpose() * x;
        int best = 0;
        for (int j = 1; j < 5; ++j)
            if (s(j) > s(best)) best = j;
        EXPECT_EQ(predict_label(clf, x), ids[best]);
        EXPECT_NEAR(predict_probs(clf, x).sum(), 1.0, 1e-12);
    }
}

TEST(Transfer, IdentityGraphCopiesWeights) {
    std::mt19937_64 rng(5);
    SimilarityGraph g;
    g.w_ss = MatrixD::Identity(3, 3);
    g.w_su = MatrixD::Identity(3, 3);
    g.w_uu = MatrixD::Identity(3, 3);
    g.k_neighbors = 1;
    auto seen = fixed(random_matrix(4, 3, rng), {0, 1, 2});
    const auto q = build_transfer_classifier(seen, g, {TransferKind::structure_product, std::nullopt}, {5, 6, 7});
    EXPECT_LT((q.weights - seen.weights).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(q.trained_on, ClassifierRole::transferred);
    EXPECT_EQ(q.class_ids, (std::vector<ClassId>{5, 6, 7}));

    EXPECT_THROW(build_transfer_classifier(q, g, {}, {5, 6, 7}), std::invalid_argument);
    EXPECT_THROW(build_transfer_classifier(seen, g, {}, {5, 6}), std::invalid_argument);
}

TEST(Transfer, PermutedSeenColumnsGivePermutedSources) {
    // With W_su a permutation the transferred column j is the seen column
    // that maps to it.
    std::mt19937_64 rng(6);
    SimilarityGraph g;
    g.w_ss = MatrixD::Identity(3, 3);
    g.w_su = MatrixD::Zero(3, 3);
    g.w_su(0, 2) = g.w_su(1, 0) = g.w_su(2, 1) = 1.0;
    g.w_uu = MatrixD::Identity(3, 3);
    g.k_neighbors = 1;
    const auto seen = fixed(random_matrix(4, 3, rng), {0, 1, 2});
    const auto q = build_transfer_classifier(seen, g, {}, {3, 4, 5});
    EXPECT_TRUE(q.weights.col(2).isApprox(seen.weights.col(0)));
    EXPECT_TRUE(q.weights.col(0).isApprox(seen.weights.col(1)));
    EXPECT_TRUE(q.weights.col(1).isApprox(seen.weights.col(2)));
}

TEST(Assemble, ZslAndGzslCounts) {
    const DatasetBundle b = synthesize_benchmark({});
    LabeledFeatures syn;
    syn.features = MatrixD::Ones(200, b.d_x);
    for (int i = 0; i < 200; ++i) syn.labels.push_back(b.unseen_classes[static_cast<std::size_t>(i / 50)]);

    const TrainingSet z = assemble_final_training_set(b, syn, EvalMode::zsl);
    EXPECT_EQ(z.features.rows(), 200);
    EXPECT_EQ(z.class_ids.size(), 4u);
    EXPECT_TRUE(std::is_sorted(z.class_ids.begin(), z.class_ids.end()));

    const TrainingSet gz = assemble_final_training_set(b, syn, EvalMode::gzsl);
    EXPECT_EQ(gz.features.rows(), 600);
    EXPECT_EQ(gz.labels.size(), 600u);
    EXPECT_EQ(gz.class_ids.size(), 12u);
    EXPECT_TRUE(std::is_sorted(gz.class_ids.begin(), gz.class_ids.end()));
}

TEST(Assemble, GzslNeverUsesTestRows) {
    SyntheticBenchmarkSpec s;
    s.seen_test_per_class = 5;
    const DatasetBundle b = synthesize_benchmark(s);
    LabeledFeatures syn;
    syn.features = MatrixD::Zero(4, b.d_x);
    syn.labels.assign(b.unseen_classes.begin(), b.unseen_classes.end());
    const TrainingSet t = assemble_final_training_set(b, syn, EvalMode::gzsl);
    const std::set<int> test(b.test_indices.begin(), b.test_indices.end());
    for (int row : t.source_indices) EXPECT_FALSE(test.count(row)) << row;
}

TEST(Assemble, RejectsSeenLabelsInSynthetic) {
    const DatasetBundle b = synthesize_benchmark({});
    LabeledFeatures syn;
    syn.features = MatrixD::Zero(1, b.d_x);
    syn.labels = {b.seen_classes.front()};
    EXPECT_THROW(assemble_final_training_set(b, syn, EvalMode::zsl), std::invalid_argument);
    EXPECT_THROW(assemble_final_training_set(b, LabeledFeatures{}, EvalMode::zsl), DataError);
}

TEST(Roles, ParseRoundTrip) {
    for (auto r : {ClassifierRole::seen_real, ClassifierRole::transferred, ClassifierRole::final_zsl,
                   ClassifierRole::final_gzsl})
        EXPECT_EQ(parse_classifier_role(to_string(r)), r);
    EXPECT_FALSE(parse_classifier_role("other"));
    EXPECT_EQ(parse_eval_mode("gzsl"), EvalMode::gzsl);
    EXPECT_FALSE(parse_eval_mode("GZSL"));
}
