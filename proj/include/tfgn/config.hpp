#pragma once

#include <tfgn/classify.hpp>
#include <tfgn/core.hpp>
#include <tfgn/dataset.hpp>
#include <tfgn/evaluate.hpp>
#include <tfgn/gan.hpp>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace tfgn {

/// Everything one CLI invocation needs. Exactly one of dataset_path and
/// synthetic is set.
struct RunConfig {
    std::optional<std::filesystem::path> dataset_path;
    std::optional<SyntheticBenchmarkSpec> synthetic;
    TrainingConfig training{};
    FinalClassifierConfig final_classifier{};
    std::vector<EvalMode> modes{EvalMode::zsl, EvalMode::gzsl};
    std::filesystem::path output_dir = "tfgn_out";
    std::uint64_t seed = 0;
    std::vector<int> sweep_counts{1, 10, 50, 100};
    std::vector<std::uint64_t> sweep_seeds{0, 1, 2, 3, 4};

    /// Pushes the root seed into the training and final-classifier configs.
    void set_seed(std::uint64_t s) {
        seed = s;
        training.seed = s;
        final_classifier.seed = s;
    }
};

namespace detail {

using nlohmann::json;

inline std::string join_path(const std::string& base, const std::string& key) {
    return base.empty() ? key : base + "." + key;
}

/// Reads object members with type checks, remembering which keys were seen
/// so leftovers can be reported.
class Fields {
public:
    Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ConfigError((path_.empty() ? std::string("config") : path_) + ": must be an object");
    }

    bool has(const std::string& key) const { return obj_.contains(key); }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return obj_.at(key);
    }

    std::string path(const std::string& key) const { return join_path(path_, key); }

    template <typename T>
    void read(const std::string& key, T& out) {
        if (!obj_.contains(key)) return;
        seen_.insert(key);
        const json& v = obj_.at(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(path(key) + ": expected a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError(path(key) + ": expected an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)
                    throw ConfigError(path(key) + ": must be >= 0");
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(path(key) + ": expected a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(path(key) + ": expected a string");
        }
        try {
            out = v.get<T>();
        } catch (const json::exception&) {
            throw ConfigError(path(key) + ": wrong type");
        }
    }

    void reject_unknown() const {
        for (const auto& [k, _] : obj_.items())
            if (!seen_.count(k)) throw ConfigError(path(k) + ": unknown key");
    }

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

inline void read_adam(Fields& parent, const std::string& key, AdamConfig& a) {
    if (!parent.has(key)) return;
    Fields f(parent.raw(key), parent.path(key));
    f.read("lr", a.lr);
    f.read("beta1", a.beta1);
    f.read("beta2", a.beta2);
    f.read("epsilon", a.epsilon);
    f.reject_unknown();
    const std::string p = parent.path(key);
    if (!(a.lr > 0)) throw ConfigError(p + ".lr: must be > 0");
    if (a.beta1 < 0 || a.beta1 >= 1) throw ConfigError(p + ".beta1: must be in [0, 1)");
    if (a.beta2 < 0 || a.beta2 >= 1) throw ConfigError(p + ".beta2: must be in [0, 1)");
    if (!(a.epsilon > 0)) throw ConfigError(p + ".epsilon: must be > 0");
}

inline json adam_json(const AdamConfig& a) {
    return {{"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"epsilon", a.epsilon}};
}

inline void read_softmax(Fields& parent, const std::string& key, SoftmaxTrainConfig& s) {
    if (!parent.has(key)) return;
    Fields f(parent.raw(key), parent.path(key));
    f.read("epochs", s.epochs);
    read_adam(f, "adam", s.adam);
    f.reject_unknown();
    if (s.epochs < 0) throw ConfigError(f.path("epochs") + ": must be >= 0");
}

inline void read_synthetic(Fields& f, SyntheticBenchmarkSpec& s) {
    f.read("n_seen", s.n_seen);
    f.read("n_unseen", s.n_unseen);
    f.read("d_x", s.d_x);
    f.read("d_c", s.d_c);
    f.read("samples_per_class", s.samples_per_class);
    f.read("seen_test_per_class", s.seen_test_per_class);
    f.read("cluster_spread", s.cluster_spread);
    f.read("seed", s.seed);
    f.reject_unknown();
    auto need = [&](bool ok, const char* key, const char* what) {
        if (!ok) throw ConfigError(f.path(key) + ": " + what);
    };
    need(s.n_seen >= 2, "n_seen", "must be >= 2");
    need(s.n_unseen >= 2, "n_unseen", "must be >= 2");
    need(s.d_x >= 1, "d_x", "must be >= 1");
    need(s.d_c >= 1, "d_c", "must be >= 1");
    need(s.samples_per_class >= 2, "samples_per_class", "must be >= 2");
    need(s.seen_test_per_class >= 0, "seen_test_per_class", "must be >= 0");
    need(s.cluster_spread >= 0, "cluster_spread", "must be >= 0");
}

inline void read_training(Fields& f, TrainingConfig& t) {
    f.read("lambda_gp", t.lambda_gp);
    f.read("beta_cls", t.beta_cls);
    f.read("gamma_tra1", t.gamma_tra1);
    f.read("eta_tra2", t.eta_tra2);
    f.read("k_neighbors", t.k_neighbors);
    f.read("include_self", t.include_self);
    f.read("n_critic", t.n_critic);
    f.read("batch_size", t.batch_size);
    f.read("g_steps", t.g_steps);
    f.read("hidden_units", t.hidden_units);
    f.read("leaky_slope", t.leaky_slope);
    f.read("noise_dim", t.noise_dim);
    f.read("tra2_in_critic", t.tra2_in_critic);
    read_adam(f, "adam", t.adam);
    read_softmax(f, "seen_classifier", t.seen_classifier);

    if (f.has("transfer_variant")) {
        const json& v = f.raw("transfer_variant");
        const auto kind = v.is_string() ? parse_transfer_kind(v.get<std::string>()) : std::nullopt;
        if (!kind)
            throw ConfigError(f.path("transfer_variant") + ": expected \"structure_product\" or \"absorbing_markov\"");
        t.transfer.kind = *kind;
    }
    if (f.has("ridge")) {
        const json& v = f.raw("ridge");
        if (v.is_null())
            t.transfer.ridge.reset();
        else if (v.is_number())
            t.transfer.ridge = v.get<double>();
        else
            throw ConfigError(f.path("ridge") + ": expected a number or null");
    }
    if (f.has("loss_switches")) {
        Fields s(f.raw("loss_switches"), f.path("loss_switches"));
        s.read("cls", t.switches.cls);
        s.read("tra1", t.switches.tra1);
        s.read("tra2", t.switches.tra2);
        s.reject_unknown();
    }
    f.reject_unknown();
    validate_training_config(t);
}

inline void read_final(Fields& f, FinalClassifierConfig& c) {
    f.read("per_class", c.per_class);
    f.read("epochs", c.softmax.epochs);
    read_adam(f, "adam", c.softmax.adam);
    f.reject_unknown();
    if (c.per_class < 1) throw ConfigError(f.path("per_class") + ": must be >= 1");
    if (c.softmax.epochs < 0) throw ConfigError(f.path("epochs") + ": must be >= 0");
}

}  // namespace detail

/// Parses a config document. Missing keys take defaults; unknown keys and
/// type errors raise ConfigError naming the field path. Relative dataset
/// paths resolve against `base_dir`.
inline RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {}) {
    using detail::Fields;
    RunConfig rc;
    Fields top(doc, "");

    std::uint64_t seed = 0;
    top.read("seed", seed);

    if (top.has("dataset_path") && top.has("synthetic"))
        throw ConfigError("dataset_path: give either dataset_path or synthetic, not both");
    if (top.has("dataset_path")) {
        std::string p;
        top.read("dataset_path", p);
        std::filesystem::path path(p);
        if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
        rc.dataset_path = std::filesystem::absolute(path).lexically_normal();
    } else {
        SyntheticBenchmarkSpec spec;
        if (top.has("synthetic")) {
            Fields f(top.raw("synthetic"), "synthetic");
            detail::read_synthetic(f, spec);
        }
        rc.synthetic = spec;
    }

    if (top.has("training")) {
        Fields f(top.raw("training"), "training");
        detail::read_training(f, rc.training);
    }
    if (top.has("final")) {
        Fields f(top.raw("final"), "final");
        detail::read_final(f, rc.final_classifier);
    }
    if (top.has("evaluation")) {
        Fields f(top.raw("evaluation"), "evaluation");
        if (f.has("modes")) {
            const auto& m = f.raw("modes");
            if (!m.is_array() || m.empty()) throw ConfigError("evaluation.modes: expected a nonempty array");
            rc.modes.clear();
            for (const auto& v : m) {
                const auto mode = v.is_string() ? parse_eval_mode(v.get<std::string>()) : std::nullopt;
                if (!mode) throw ConfigError("evaluation.modes: entries must be \"zsl\" or \"gzsl\"");
                rc.modes.push_back(*mode);
            }
        }
        f.reject_unknown();
    }
    if (top.has("output_dir")) {
        std::string out;
        top.read("output_dir", out);
        if (out.empty()) throw ConfigError("output_dir: must be nonempty");
        rc.output_dir = out;
    }
    if (top.has("sweep")) {
        Fields f(top.raw("sweep"), "sweep");
        f.read("counts", rc.sweep_counts);
        f.read("seeds", rc.sweep_seeds);
        f.reject_unknown();
        if (rc.sweep_seeds.empty()) throw ConfigError("sweep.seeds: must be nonempty");
    }
    top.reject_unknown();
    rc.set_seed(seed);
    return rc;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_run_config(doc, path.parent_path());
}

/// The configuration with every default written out. Feeding it back to
/// parse_run_config yields the same configuration.
inline nlohmann::json resolved_json(const RunConfig& rc) {
    using detail::adam_json;
    const TrainingConfig& t = rc.training;
    nlohmann::json j;
    j["seed"] = rc.seed;
    if (rc.dataset_path) {
        j["dataset_path"] = rc.dataset_path->string();
    } else {
        const auto& s = *rc.synthetic;
        j["synthetic"] = {{"n_seen", s.n_seen},
                          {"n_unseen", s.n_unseen},
                          {"d_x", s.d_x},
                          {"d_c", s.d_c},
                          {"samples_per_class", s.samples_per_class},
                          {"seen_test_per_class", s.seen_test_per_class},
                          {"cluster_spread", s.cluster_spread},
                          {"seed", s.seed}};
    }
    j["training"] = {{"lambda_gp", t.lambda_gp},
                     {"beta_cls", t.beta_cls},
                     {"gamma_tra1", t.gamma_tra1},
                     {"eta_tra2", t.eta_tra2},
                     {"k_neighbors", t.k_neighbors},
                     {"include_self", t.include_self},
                     {"n_critic", t.n_critic},
                     {"batch_size", t.batch_size},
                     {"g_steps", t.g_steps},
                     {"hidden_units", t.hidden_units},
                     {"leaky_slope", t.leaky_slope},
                     {"noise_dim", t.noise_dim},
                     {"tra2_in_critic", t.tra2_in_critic},
                     {"transfer_variant", to_string(t.transfer.kind)},
                     {"ridge", t.transfer.ridge ? nlohmann::json(*t.transfer.ridge) : nlohmann::json(nullptr)},
                     {"loss_switches", {{"cls", t.switches.cls}, {"tra1", t.switches.tra1}, {"tra2", t.switches.tra2}}},
                     {"adam", adam_json(t.adam)},
                     {"seen_classifier", {{"epochs", t.seen_classifier.epochs}, {"adam", adam_json(t.seen_classifier.adam)}}}};
    j["final"] = {{"per_class", rc.final_classifier.per_class},
                  {"epochs", rc.final_classifier.softmax.epochs},
                  {"adam", adam_json(rc.final_classifier.softmax.adam)}};
    nlohmann::json modes = nlohmann::json::array();
    for (auto m : rc.modes) modes.push_back(to_string(m));
    j["evaluation"] = {{"modes", modes}};
    j["output_dir"] = rc.output_dir.string();
    j["sweep"] = {{"counts", rc.sweep_counts}, {"seeds", rc.sweep_seeds}};
    return j;
}

/// Loads or synthesizes the dataset named by the config.
inline DatasetBundle load_bundle(const RunConfig& rc) {
    return rc.dataset_path ? load_dataset(*rc.dataset_path) : synthesize_benchmark(*rc.synthetic);
}

}  // namespace tfgn
