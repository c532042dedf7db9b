#pragma once

#include <tfgn/classify.hpp>
#include <tfgn/core.hpp>
#include <tfgn/dataset.hpp>
#include <tfgn/gan.hpp>

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace tfgn {

// Adam at 1e-3 for 100 epochs leaves a zero-initialized softmax far from
// converged on ~100 samples per class; these defaults do converge.
struct FinalClassifierConfig {
    int per_class = 100;
    SoftmaxTrainConfig softmax{500, {1e-2, 0.9, 0.999, 1e-8}};
    std::uint64_t seed = 0;
};

struct EvalReport {
    EvalMode mode = EvalMode::zsl;
    std::map<ClassId, double> per_class_acc;  // percent
    double ts = 0.0;
    std::optional<double> tr;
    std::optional<double> h;
    std::string fingerprint;
    std::uint64_t seed = 0;

    bool same_metrics(const EvalReport& o) const {
        return mode == o.mode && per_class_acc == o.per_class_acc && ts == o.ts && tr == o.tr && h == o.h;
    }
};

/// Produces `per_class` labeled features for each requested class.
using FeatureSource =
    std::function<LabeledFeatures(const std::vector<ClassId>& class_ids, int per_class, std::uint64_t seed)>;

inline FeatureSource generator_source(MlpParams<double> generator, MatrixD class_embeddings) {
    return [g = std::move(generator), emb = std::move(class_embeddings)](const std::vector<ClassId>& ids,
                                                                          int per_class, std::uint64_t seed) {
        return generate_features(g, ids, emb, per_class, seed);
    };
}

// ---------------------------------------------------------------------------
// Metrics

/// Mean over `class_set` of per-class top-1 accuracy, in percent.
inline double per_class_top1(const std::vector<ClassId>& predictions, const std::vector<ClassId>& labels,
                             const std::vector<ClassId>& class_set,
                             std::map<ClassId, double>* per_class = nullptr) {
    if (predictions.size() != labels.size()) throw std::invalid_argument("per_class_top1: length mismatch");
    if (class_set.empty()) throw std::invalid_argument("per_class_top1: empty class set");
    std::map<ClassId, std::pair<long, long>> tally;  // correct, total
    for (ClassId c : class_set) tally[c] = {0, 0};
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto it = tally.find(labels[i]);
        if (it == tally.end())
            throw std::invalid_argument("per_class_top1: label " + std::to_string(labels[i]) + " not in class set");
        ++it->second.second;
        if (predictions[i] == labels[i]) ++it->second.first;
    }
    double sum = 0.0;
    for (const auto& [c, ct] : tally) {
        if (ct.second == 0) throw DataError("per_class_top1: class " + std::to_string(c) + " has no test samples");
        const double acc = 100.0 * static_cast<double>(ct.first) / static_cast<double>(ct.second);
        if (per_class) (*per_class)[c] = acc;
        sum += acc;
    }
    return sum / static_cast<double>(tally.size());
}

/// 2 * tr * ts / (tr + ts); zero when either side is zero.
inline double harmonic_mean(double tr, double ts) {
    if (tr < 0 || ts < 0) throw std::invalid_argument("harmonic_mean: negative accuracy");
    if (tr == 0.0 && ts == 0.0) log_warning("harmonic_mean: both accuracies are zero, H defined as 0");
    if (tr == 0.0 || ts == 0.0) return 0.0;
    return 2.0 * tr * ts / (tr + ts);
}

// ---------------------------------------------------------------------------
// Protocols

inline std::string fingerprint_of(const nlohmann::json& j) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
    return buf;
}

inline nlohmann::json to_json(const FinalClassifierConfig& c) {
    return {{"per_class", c.per_class},
            {"epochs", c.softmax.epochs},
            {"lr", c.softmax.adam.lr},
            {"beta1", c.softmax.adam.beta1},
            {"beta2", c.softmax.adam.beta2},
            {"epsilon", c.softmax.adam.epsilon},
            {"seed", c.seed}};
}

namespace detail {

struct TestSplit {
    MatrixD x;
    std::vector<ClassId> y;
};

inline TestSplit test_samples_in(const DatasetBundle& b, const std::vector<ClassId>& classes) {
    const std::set<ClassId> keep(classes.begin(), classes.end());
    std::vector<int> rows;
    for (int i : b.test_indices)
        if (keep.count(b.sample_labels[i])) rows.push_back(i);
    TestSplit t;
    t.x.resize(static_cast<Eigen::Index>(rows.size()), b.d_x);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        t.x.row(static_cast<Eigen::Index>(k)) = b.features.row(rows[k]);
        t.y.push_back(b.sample_labels[rows[k]]);
    }
    return t;
}

inline LabeledFeatures synthesize_unseen(const DatasetBundle& b, const FeatureSource& source,
                                         const FinalClassifierConfig& cfg) {
    if (cfg.per_class < 1) throw ConfigError("final.per_class: must be >= 1");
    LabeledFeatures u = source(b.unseen_classes, cfg.per_class, substream_seed(cfg.seed, "eval.generate"));
    if (u.features.rows() != u.size() || u.features.cols() != b.d_x)
        throw DataError("feature source returned a mis-shaped batch");
    return u;
}

}  // namespace detail

/// Trains the final classifier on synthetic unseen features only and scores
/// unseen test samples against the unseen label set.
inline EvalReport run_zsl(const DatasetBundle& b, const FeatureSource& source, const FinalClassifierConfig& cfg,
                          SoftmaxClassifier* trained = nullptr) {
    const LabeledFeatures u = detail::synthesize_unseen(b, source, cfg);
    const TrainingSet t = assemble_final_training_set(b, u, EvalMode::zsl);
    SoftmaxClassifier clf = train_softmax(t.features, t.labels, t.class_ids, cfg.softmax, ClassifierRole::final_zsl);

    const auto test = detail::test_samples_in(b, b.unseen_classes);
    EvalReport r;
    r.mode = EvalMode::zsl;
    r.ts = per_class_top1(predict_labels(clf, test.x), test.y, b.unseen_classes, &r.per_class_acc);
    r.fingerprint = fingerprint_of(to_json(cfg));
    r.seed = cfg.seed;
    if (trained) *trained = std::move(clf);
    return r;
}

/// Trains over seen and unseen classes on real seen + synthetic unseen
/// features; tr and ts come from the seen and unseen test samples.
inline EvalReport run_gzsl(const DatasetBundle& b, const FeatureSource& source, const FinalClassifierConfig& cfg,
                           SoftmaxClassifier* trained = nullptr) {
    const LabeledFeatures u = detail::synthesize_unseen(b, source, cfg);
    const TrainingSet t = assemble_final_training_set(b, u, EvalMode::gzsl);
    SoftmaxClassifier clf = train_softmax(t.features, t.labels, t.class_ids, cfg.softmax, ClassifierRole::final_gzsl);

    const auto seen_test = detail::test_samples_in(b, b.seen_classes);
    const auto unseen_test = detail::test_samples_in(b, b.unseen_classes);
    if (seen_test.y.empty()) throw DataError("run_gzsl: test split holds no seen-class samples");

    EvalReport r;
    r.mode = EvalMode::gzsl;
    r.tr = per_class_top1(predict_labels(clf, seen_test.x), seen_test.y, b.seen_classes, &r.per_class_acc);
    r.ts = per_class_top1(predict_labels(clf, unseen_test.x), unseen_test.y, b.unseen_classes, &r.per_class_acc);
    r.h = harmonic_mean(*r.tr, r.ts);
    r.fingerprint = fingerprint_of(to_json(cfg));
    r.seed = cfg.seed;
    if (trained) *trained = std::move(clf);
    return r;
}

inline EvalReport run_protocol(EvalMode mode, const DatasetBundle& b, const FeatureSource& source,
                               const FinalClassifierConfig& cfg) {
    return mode == EvalMode::zsl ? run_zsl(b, source, cfg) : run_gzsl(b, source, cfg);
}

inline EvalReport run_zsl(const DatasetBundle& b, const GanModel& model, const FinalClassifierConfig& cfg) {
    return run_zsl(b, generator_source(model.generator, b.class_embeddings), cfg);
}

inline EvalReport run_gzsl(const DatasetBundle& b, const GanModel& model, const FinalClassifierConfig& cfg) {
    return run_gzsl(b, generator_source(model.generator, b.class_embeddings), cfg);
}

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json per_class = nlohmann::json::object();
    for (const auto& [c, acc] : r.per_class_acc) per_class[std::to_string(c)] = acc;
    nlohmann::json j = {{"mode", to_string(r.mode)},
                        {"per_class_acc", per_class},
                        {"ts", r.ts},
                        {"fingerprint", r.fingerprint},
                        {"seed", r.seed}};
    if (r.tr) j["tr"] = *r.tr;
    if (r.h) j["h"] = *r.h;
    return j;
}

inline std::string summary_line(const EvalReport& r) {
    char buf[160];
    if (r.mode == EvalMode::gzsl)
        std::snprintf(buf, sizeof buf, "mode=gzsl ts=%.1f tr=%.1f H=%.1f", r.ts, r.tr.value_or(0.0), r.h.value_or(0.0));
    else
        std::snprintf(buf, sizeof buf, "mode=zsl ts=%.1f", r.ts);
    return buf;
}

// ---------------------------------------------------------------------------
// Ablation grid

struct AblationVariant {
    std::string name;
    LossSwitches switches;
    TransferKind transfer;
};

inline std::vector<AblationVariant> ablation_variants() {
    return {
        {"FGN", {true, false, false}, TransferKind::structure_product},
        {"TFGNSCS-1", {true, true, false}, TransferKind::structure_product},
        {"TFGNSCS-2", {true, false, true}, TransferKind::structure_product},
        {"TFGNSCS", {true, true, true}, TransferKind::structure_product},
        {"TFGNSCS-alt", {true, true, true}, TransferKind::absorbing_markov},
    };
}

struct AblationRow {
    std::string variant;
    EvalReport report;
};

struct AblationResult {
    std::vector<AblationRow> rows;            // variant-major, zsl then gzsl
    std::map<std::string, TrainLog> logs;     // per variant
};

/// Trains every variant from the same seed and evaluates each in both modes.
inline AblationResult run_ablation(const DatasetBundle& b, const TrainingConfig& base,
                                   const FinalClassifierConfig& final_cfg) {
    AblationResult out;
    for (const auto& v : ablation_variants()) {
        TrainingConfig cfg = base;
        cfg.switches = v.switches;
        cfg.transfer.kind = v.transfer;
        try {
            TrainResult tr = train(b, cfg);
            const FeatureSource src = generator_source(tr.model.generator, b.class_embeddings);
            out.rows.push_back({v.name, run_zsl(b, src, final_cfg)});
            out.rows.push_back({v.name, run_gzsl(b, src, final_cfg)});
            out.logs[v.name] = std::move(tr.log);
        } catch (const NumericError& e) {
            throw NumericError("ablation variant " + v.name + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError("ablation variant " + v.name + ": " + e.what());
        }
    }
    return out;
}

inline void write_ablation_csv(const AblationResult& a, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "variant,mode,ts,tr,h,seed\n";
    for (const auto& row : a.rows) {
        const auto& r = row.report;
        out << row.variant << ',' << to_string(r.mode) << ',' << detail::format_double(r.ts) << ','
            << (r.tr ? detail::format_double(*r.tr) : "") << ',' << (r.h ? detail::format_double(*r.h) : "") << ','
            << r.seed << '\n';
    }
}

// ---------------------------------------------------------------------------
// Feature-count sweep

struct SweepRow {
    int count = 0;
    double ts = 0.0;  // zsl
    double h = 0.0;   // gzsl
    std::uint64_t seed = 0;
};

/// Trains once, then regenerates the synthetic set and retrains the final
/// classifiers for every count. Counts are per unseen class.
inline std::vector<SweepRow> run_feature_count_sweep(const DatasetBundle& b, const TrainingConfig& cfg,
                                                     const FinalClassifierConfig& final_cfg,
                                                     const std::vector<int>& counts) {
    if (counts.empty()) throw ConfigError("sweep.counts: must be nonempty");
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] < 1) throw ConfigError("sweep.counts: entries must be >= 1");
        if (i > 0 && counts[i] <= counts[i - 1]) throw ConfigError("sweep.counts: must be strictly ascending");
    }
    const TrainResult tr = train(b, cfg);
    const FeatureSource src = generator_source(tr.model.generator, b.class_embeddings);
    std::vector<SweepRow> rows;
    for (int count : counts) {
        FinalClassifierConfig cell = final_cfg;
        cell.per_class = count;
        cell.seed = substream_seed(final_cfg.seed, "sweep", static_cast<std::uint64_t>(count));
        SweepRow row;
        row.count = count;
        row.seed = cfg.seed;
        row.ts = run_zsl(b, src, cell).ts;
        row.h = run_gzsl(b, src, cell).h.value_or(0.0);
        rows.push_back(row);
    }
    return rows;
}

struct SweepSummaryRow {
    int count = 0;
    double ts_mean = 0.0, ts_stdev = 0.0;
    double h_mean = 0.0, h_stdev = 0.0;
    int n_seeds = 0;
};

/// Per-count mean and sample standard deviation across seeds.
inline std::vector<SweepSummaryRow> summarize_sweep(const std::vector<SweepRow>& rows) {
    std::map<int, std::vector<const SweepRow*>> by_count;
    for (const auto& r : rows) by_count[r.count].push_back(&r);
    std::vector<SweepSummaryRow> out;
    for (const auto& [count, cell] : by_count) {
        SweepSummaryRow s;
        s.count = count;
        s.n_seeds = static_cast<int>(cell.size());
        for (const auto* r : cell) {
            s.ts_mean += r->ts;
            s.h_mean += r->h;
        }
        s.ts_mean /= s.n_seeds;
        s.h_mean /= s.n_seeds;
        if (s.n_seeds > 1) {
            for (const auto* r : cell) {
                s.ts_stdev += (r->ts - s.ts_mean) * (r->ts - s.ts_mean);
                s.h_stdev += (r->h - s.h_mean) * (r->h - s.h_mean);
            }
            s.ts_stdev = std::sqrt(s.ts_stdev / (s.n_seeds - 1));
            s.h_stdev = std::sqrt(s.h_stdev / (s.n_seeds - 1));
        }
        out.push_back(s);
    }
    return out;
}

inline void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "count,ts,h,seed\n";
    for (const auto& r : rows)
        out << r.count << ',' << detail::format_double(r.ts) << ',' << detail::format_double(r.h) << ',' << r.seed
            << '\n';
}

inline void write_sweep_summary_csv(const std::vector<SweepSummaryRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "count,ts_mean,ts_stdev,h_mean,h_stdev,n_seeds\n";
    for (const auto& r : rows)
        out << r.count << ',' << detail::format_double(r.ts_mean) << ',' << detail::format_double(r.ts_stdev) << ','
            << detail::format_double(r.h_mean) << ',' << detail::format_double(r.h_stdev) << ',' << r.n_seeds << '\n';
}

}  // namespace tfgn
