#pragma once

#include <tfgn/core.hpp>
#include <tfgn/dataset.hpp>
#include <tfgn/neuralcore.hpp>
#include <tfgn/semgraph.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <optional>
#include <string>
#include <vector>

namespace tfgn {

enum class ClassifierRole { seen_real, transferred, final_zsl, final_gzsl };

inline const char* to_string(ClassifierRole r) {
    switch (r) {
        case ClassifierRole::seen_real: return "seen_real";
        case ClassifierRole::transferred: return "transferred";
        case ClassifierRole::final_zsl: return "final_zsl";
        case ClassifierRole::final_gzsl: return "final_gzsl";
    }
    return "unknown";
}

inline std::optional<ClassifierRole> parse_classifier_role(const std::string& s) {
    for (auto r : {ClassifierRole::seen_real, ClassifierRole::transferred, ClassifierRole::final_zsl,
                   ClassifierRole::final_gzsl})
        if (s == to_string(r)) return r;
    return std::nullopt;
}

/// Bias-free linear softmax classifier; column j scores class_ids[j].
struct SoftmaxClassifier {
    MatrixD weights;  // d_x x C
    std::vector<ClassId> class_ids;
    ClassifierRole trained_on = ClassifierRole::seen_real;

    int n_classes() const { return static_cast<int>(class_ids.size()); }

    int column_of(ClassId id) const {
        auto it = std::find(class_ids.begin(), class_ids.end(), id);
        return it == class_ids.end() ? -1 : static_cast<int>(it - class_ids.begin());
    }
};

struct LabeledFeatures {
    MatrixD features;  // n x d_x
    std::vector<ClassId> labels;

    int size() const { return static_cast<int>(labels.size()); }
};

struct SoftmaxTrainConfig {
    int epochs = 100;
    AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
};

// ---------------------------------------------------------------------------

inline VectorD softmax(const Eigen::Ref<const VectorD>& logits) {
    const double mx = logits.maxCoeff();
    VectorD e = (logits.array() - mx).exp().matrix();
    return e / e.sum();
}

inline VectorD predict_probs(const SoftmaxClassifier& clf, const Eigen::Ref<const VectorD>& x) {
    if (x.size() != clf.weights.rows())
        throw std::invalid_argument("predict_probs: feature length " + std::to_string(x.size()) + ", expected " +
                                    std::to_string(clf.weights.rows()));
    return softmax(clf.weights.transpose() * x);
}

namespace detail {

/// Argmax over scores with ties going to the lowest class id.
inline ClassId argmax_lowest_id(const Eigen::Ref<const VectorD>& scores, const std::vector<ClassId>& ids) {
    int best = 0;
    for (int j = 1; j < static_cast<int>(ids.size()); ++j) {
        if (scores(j) > scores(best) || (scores(j) == scores(best) && ids[j] < ids[best])) best = j;
    }
    return ids[best];
}

}  // namespace detail

inline ClassId predict_label(const SoftmaxClassifier& clf, const Eigen::Ref<const VectorD>& x) {
    return detail::argmax_lowest_id(predict_probs(clf, x), clf.class_ids);
}

inline std::vector<ClassId> predict_labels(const SoftmaxClassifier& clf, const MatrixD& x) {
    std::vector<ClassId> out;
    out.reserve(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) out.push_back(predict_label(clf, x.row(i).transpose()));
    return out;
}

struct SoftmaxLoss {
    double value = 0.0;
    MatrixD weight_grad;  // d_x x C
    MatrixD input_grad;   // n x d_x
};

/// Mean negative log-likelihood of `columns` (target column per row) under
/// softmax(x * w), with gradients for both w and x.
inline SoftmaxLoss softmax_nll(const MatrixD& w, const MatrixD& x, const std::vector<int>& columns) {
    const Eigen::Index n = x.rows();
    if (static_cast<Eigen::Index>(columns.size()) != n) throw std::invalid_argument("softmax_nll: label count mismatch");
    MatrixD logits = x * w;
    MatrixD delta(n, w.cols());  // p - onehot
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mx = logits.row(i).maxCoeff();
        const auto shifted = (logits.row(i).array() - mx).eval();
        const double lse = std::log(shifted.exp().sum());
        acc += lse - shifted(columns[i]);
        delta.row(i) = (shifted - lse).exp().matrix();
        delta(i, columns[i]) -= 1.0;
    }
    SoftmaxLoss r;
    const double inv_n = 1.0 / static_cast<double>(n);
    r.value = acc * inv_n;
    delta *= inv_n;
    r.weight_grad.noalias() = x.transpose() * delta;
    r.input_grad.noalias() = delta * w.transpose();
    return r;
}

inline std::vector<int> label_columns(const SoftmaxClassifier& clf, const std::vector<ClassId>& labels,
                                      const char* context) {
    std::vector<int> cols;
    cols.reserve(labels.size());
    for (ClassId y : labels) {
        const int c = clf.column_of(y);
        if (c < 0) throw std::invalid_argument(std::string(context) + ": label " + std::to_string(y) + " not in classifier");
        cols.push_back(c);
    }
    return cols;
}

/// Full-batch Adam on the mean negative log-likelihood, starting from zero
/// weights. `loss_trace`, when given, receives the loss before each epoch
/// and after the last.
inline SoftmaxClassifier train_softmax(const MatrixD& features, const std::vector<ClassId>& labels,
                                       const std::vector<ClassId>& class_ids, const SoftmaxTrainConfig& cfg,
                                       ClassifierRole role = ClassifierRole::seen_real,
                                       std::vector<double>* loss_trace = nullptr) {
    if (static_cast<Eigen::Index>(labels.size()) != features.rows())
        throw std::invalid_argument("train_softmax: label count mismatch");
    if (class_ids.empty()) throw std::invalid_argument("train_softmax: no classes");
    SoftmaxClassifier clf;
    clf.class_ids = class_ids;
    clf.trained_on = role;
    clf.weights = MatrixD::Zero(features.cols(), static_cast<Eigen::Index>(class_ids.size()));

    const std::vector<int> cols = label_columns(clf, labels, "train_softmax");
    std::vector<int> per_class(class_ids.size(), 0);
    for (int c : cols) ++per_class[c];
    for (std::size_t j = 0; j < per_class.size(); ++j)
        if (per_class[j] == 0) throw DataError("train_softmax: class " + std::to_string(class_ids[j]) + " has no samples");

    MatrixAdam opt;
    opt.config = cfg.adam;
    for (int e = 0; e < cfg.epochs; ++e) {
        const SoftmaxLoss l = softmax_nll(clf.weights, features, cols);
        if (loss_trace) loss_trace->push_back(l.value);
        if (!std::isfinite(l.value)) throw NumericError("train_softmax: non-finite loss at epoch " + std::to_string(e));
        opt.step(clf.weights, l.weight_grad);
    }
    if (loss_trace) loss_trace->push_back(softmax_nll(clf.weights, features, cols).value);
    return clf;
}

inline SoftmaxClassifier build_transfer_classifier(const SoftmaxClassifier& seen_clf, const SimilarityGraph& graph,
                                                   const TransferVariant& variant,
                                                   const std::vector<ClassId>& unseen_ids) {
    if (seen_clf.trained_on != ClassifierRole::seen_real)
        throw std::invalid_argument("build_transfer_classifier: source classifier is not a seen-class classifier");
    if (static_cast<Eigen::Index>(unseen_ids.size()) != graph.w_uu.rows())
        throw std::invalid_argument("build_transfer_classifier: unseen id count does not match graph");
    SoftmaxClassifier q;
    q.weights = apply_transfer(seen_clf.weights, graph, variant);
    q.class_ids = unseen_ids;
    q.trained_on = ClassifierRole::transferred;
    return q;
}

enum class EvalMode { zsl, gzsl };

inline const char* to_string(EvalMode m) { return m == EvalMode::zsl ? "zsl" : "gzsl"; }

inline std::optional<EvalMode> parse_eval_mode(const std::string& s) {
    if (s == "zsl") return EvalMode::zsl;
    if (s == "gzsl") return EvalMode::gzsl;
    return std::nullopt;
}

struct TrainingSet {
    MatrixD features;
    std::vector<ClassId> labels;
    std::vector<ClassId> class_ids;  // ascending
    std::vector<int> source_indices; // bundle row per sample, -1 for synthetic
};

/// ZSL: synthetic unseen features only. GZSL: real seen train samples
/// followed by the synthetic set.
inline TrainingSet assemble_final_training_set(const DatasetBundle& bundle, const LabeledFeatures& synthetic,
                                               EvalMode mode) {
    const std::set<ClassId> unseen(bundle.unseen_classes.begin(), bundle.unseen_classes.end());
    for (ClassId y : synthetic.labels)
        if (!unseen.count(y)) throw std::invalid_argument("assemble_final_training_set: synthetic label " +
                                                          std::to_string(y) + " is not an unseen class");
    if (synthetic.size() > 0 && synthetic.features.cols() != bundle.d_x)
        throw std::invalid_argument("assemble_final_training_set: synthetic feature width mismatch");

    TrainingSet t;
    if (mode == EvalMode::zsl) {
        if (synthetic.size() == 0) throw DataError("assemble_final_training_set: empty synthetic set in zsl mode");
        t.features = synthetic.features;
        t.labels = synthetic.labels;
        t.source_indices.assign(synthetic.labels.size(), -1);
        t.class_ids = bundle.unseen_classes;
    } else {
        const auto n_real = static_cast<Eigen::Index>(bundle.train_indices.size());
        t.features.resize(n_real + synthetic.size(), bundle.d_x);
        for (Eigen::Index i = 0; i < n_real; ++i) {
            const int row = bundle.train_indices[static_cast<std::size_t>(i)];
            t.features.row(i) = bundle.features.row(row);
            t.labels.push_back(bundle.sample_labels[row]);
            t.source_indices.push_back(row);
        }
        if (synthetic.size() > 0) t.features.bottomRows(synthetic.size()) = synthetic.features;
        t.labels.insert(t.labels.end(), synthetic.labels.begin(), synthetic.labels.end());
        t.source_indices.insert(t.source_indices.end(), synthetic.labels.size(), -1);
        t.class_ids = bundle.seen_classes;
        t.class_ids.insert(t.class_ids.end(), bundle.unseen_classes.begin(), bundle.unseen_classes.end());
    }
    std::sort(t.class_ids.begin(), t.class_ids.end());
    return t;
}

}  // namespace tfgn
