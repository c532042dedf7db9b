// tfgn: command-line front end for training and evaluating transfer-aware
// feature generators.

#include <tfgn/tfgn.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace tfgn;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kData = 3, kNumeric = 4 };

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

RunConfig resolve(const CommonOptions& o) {
    RunConfig rc = o.config.empty() ? parse_run_config(nlohmann::json::object()) : load_run_config(o.config);
    if (o.seed) rc.set_seed(*o.seed);
    if (!o.out.empty()) rc.output_dir = o.out;
    return rc;
}

fs::path prepare_output(const RunConfig& rc) {
    std::error_code ec;
    fs::create_directories(rc.output_dir, ec);
    if (ec || !fs::is_directory(rc.output_dir))
        throw ConfigError("output_dir: cannot create " + rc.output_dir.string() + (ec ? ": " + ec.message() : ""));
    const fs::path probe = rc.output_dir / ".tfgn_write_probe";
    {
        std::ofstream p(probe);
        if (!p) throw ConfigError("output_dir: " + rc.output_dir.string() + " is not writable");
    }
    fs::remove(probe, ec);
    return rc.output_dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

void write_trainlog(const TrainLog& log, const fs::path& path) {
    std::ostringstream s;
    s << "step,l_wgan,l_cls,l_tra1,l_tra2,total,phase\n";
    for (const auto& r : log.records)
        s << r.step << ',' << detail::format_double(r.l_wgan) << ',' << detail::format_double(r.l_cls) << ','
          << detail::format_double(r.l_tra1) << ',' << detail::format_double(r.l_tra2) << ','
          << detail::format_double(r.total) << ',' << to_string(r.phase) << '\n';
    write_text(path, s.str());
}

std::vector<int> parse_counts(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            out.push_back(v);
        } catch (const std::exception&) {
            throw ConfigError("--counts: \"" + tok + "\" is not an integer");
        }
    }
    return out;
}

void check_dims(const GanModel& m, const DatasetBundle& b) {
    if (m.d_x() != b.d_x || m.d_c() != b.d_c || m.generator.d_in() != 2 * b.d_c)
        throw DataError("checkpoint/dataset dimension mismatch: dataset has d_x=" + std::to_string(b.d_x) +
                        ", d_c=" + std::to_string(b.d_c) + "; checkpoint has d_x=" + std::to_string(m.d_x()) +
                        ", d_c=" + std::to_string(m.d_c()));
}

// ---------------------------------------------------------------------------

int cmd_synth(const CommonOptions& o) {
    RunConfig rc = resolve(o);
    if (!rc.synthetic) throw ConfigError("synthetic: synth needs a synthetic spec, not dataset_path");
    if (o.seed) rc.synthetic->seed = *o.seed;
    const fs::path out = prepare_output(rc);
    const DatasetBundle b = synthesize_benchmark(*rc.synthetic);
    save_dataset(b, out);
    std::cout << "wrote " << b.n_samples() << " samples (" << b.n_seen() << " seen, " << b.n_unseen()
              << " unseen classes) to " << out.string() << '\n';
    return kOk;
}

int cmd_train(const CommonOptions& o) {
    const RunConfig rc = resolve(o);
    const fs::path out = prepare_output(rc);
    const DatasetBundle b = load_bundle(rc);

    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult tr = train(b, rc.training);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    save_model(tr.model, out / "model.ckpt", rc.seed);
    save_classifier(tr.seen_classifier, out / "seen_classifier.ckpt", rc.seed);
    save_classifier(tr.transfer_classifier, out / "transfer_classifier.ckpt", rc.seed);
    write_trainlog(tr.log, out / "trainlog.csv");
    write_text(out / "resolved_config.json", resolved_json(rc).dump(2) + "\n");
    std::clog << "trained " << rc.training.g_steps << " generator steps in " << secs << " s\n";
    std::cout << "wrote model.ckpt, seen_classifier.ckpt, transfer_classifier.ckpt, trainlog.csv, "
                 "resolved_config.json to "
              << out.string() << '\n';
    return kOk;
}

int cmd_evaluate(const CommonOptions& o, const std::string& mode_flag, const std::string& model_flag) {
    RunConfig rc = resolve(o);
    if (!mode_flag.empty()) {
        const auto m = parse_eval_mode(mode_flag);
        if (!m) throw ConfigError("--mode: expected zsl or gzsl");
        rc.modes = {*m};
    }
    const fs::path out = prepare_output(rc);
    const fs::path model_path = model_flag.empty() ? out / "model.ckpt" : fs::path(model_flag);
    const GanModel model = load_model(model_path);
    const DatasetBundle b = load_bundle(rc);
    check_dims(model, b);

    const FeatureSource src = generator_source(model.generator, b.class_embeddings);
    nlohmann::json reports = nlohmann::json::array();
    for (EvalMode m : rc.modes) {
        const EvalReport r = run_protocol(m, b, src, rc.final_classifier);
        reports.push_back(to_json(r));
        std::cout << summary_line(r) << '\n';
    }
    write_text(out / "report.json", nlohmann::json{{"reports", reports}}.dump(2) + "\n");
    return kOk;
}

int cmd_ablate(const CommonOptions& o) {
    const RunConfig rc = resolve(o);
    const fs::path out = prepare_output(rc);
    const DatasetBundle b = load_bundle(rc);
    const AblationResult a = run_ablation(b, rc.training, rc.final_classifier);
    write_ablation_csv(a, out / "ablation.csv");
    for (const auto& [name, log] : a.logs) write_trainlog(log, out / ("trainlog_" + name + ".csv"));
    for (const auto& row : a.rows) std::cout << row.variant << ' ' << summary_line(row.report) << '\n';
    return kOk;
}

int cmd_sweep(const CommonOptions& o, const std::string& counts_flag) {
    RunConfig rc = resolve(o);
    if (!counts_flag.empty()) rc.sweep_counts = parse_counts(counts_flag);
    const fs::path out = prepare_output(rc);
    const DatasetBundle b = load_bundle(rc);
    std::vector<SweepRow> rows;
    for (std::uint64_t s : rc.sweep_seeds) {
        RunConfig cell = rc;
        cell.set_seed(s);
        const auto r = run_feature_count_sweep(b, cell.training, cell.final_classifier, rc.sweep_counts);
        rows.insert(rows.end(), r.begin(), r.end());
    }
    write_sweep_csv(rows, out / "sweep.csv");
    const auto summary = summarize_sweep(rows);
    write_sweep_summary_csv(summary, out / "sweep_summary.csv");
    for (const auto& s : summary) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "count=%d ts=%.1f+-%.1f H=%.1f+-%.1f seeds=%d", s.count, s.ts_mean,
                      s.ts_stdev, s.h_mean, s.h_stdev, s.n_seeds);
        std::cout << buf << '\n';
    }
    return kOk;
}

int cmd_check_grad(std::optional<std::uint64_t> seed, int n_seeds, double tolerance) {
    const double step = GradCheckOptions{}.step;
    std::uint64_t s = seed.value_or(0);
    int checked = 0, skipped = 0;
    bool ok = true;
    double worst = 0.0;
    while (checked < n_seeds) {
        const ObjectiveCheck c = check_objective_gradients(s, tolerance);
        if (c.kink_distance < 10.0 * step) {
            std::printf("seed %llu skipped: activation %.2g from a kink\n", static_cast<unsigned long long>(s),
                        c.kink_distance);
            ++skipped;
            ++s;
            continue;
        }
        for (const auto* rep : {&c.critic, &c.generator}) {
            const char* who = rep == &c.critic ? "critic" : "generator";
            for (const auto& blk : rep->blocks) {
                std::printf("seed %llu %-9s %s max_rel_error=%.3e%s\n", static_cast<unsigned long long>(s), who,
                            blk.name.c_str(), blk.max_rel_error, blk.passed ? "" : "  FAIL");
                worst = std::max(worst, blk.max_rel_error);
            }
            ok = ok && rep->passed;
        }
        ++checked;
        ++s;
    }
    std::printf("checked %d seeds (%d skipped), max relative error %.3e, tolerance %.1e: %s\n", checked, skipped,
                worst, tolerance, ok ? "ok" : "FAILED");
    return ok ? kOk : kNumeric;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Transfer-aware feature generation for zero-shot learning"};
    app.require_subcommand(1);
    CommonOptions common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "JSON run configuration");
        sub->add_option("--seed", common.seed, "root seed (overrides the config)");
        sub->add_option("--out", common.out, "output directory (overrides the config)");
    };

    auto* synth = app.add_subcommand("synth", "write a synthetic benchmark dataset directory");
    add_common(synth);
    auto* train_cmd = app.add_subcommand("train", "train the generator and write checkpoints");
    add_common(train_cmd);
    auto* eval = app.add_subcommand("evaluate", "train final classifiers on generated features and score them");
    add_common(eval);
    std::string mode, model;
    eval->add_option("--mode", mode, "zsl or gzsl (default: the config's evaluation.modes)");
    eval->add_option("--model", model, "model checkpoint (default: <out>/model.ckpt)");
    auto* ablate = app.add_subcommand("ablate", "train and evaluate every ablation variant");
    add_common(ablate);
    auto* sweep = app.add_subcommand("sweep", "accuracy versus synthetic features per class");
    add_common(sweep);
    std::string counts;
    sweep->add_option("--counts", counts, "comma-separated features per class, ascending");
    auto* grad = app.add_subcommand("check-grad", "finite-difference check of both adversarial objectives");
    std::optional<std::uint64_t> grad_seed;
    int grad_seeds = 10;
    double grad_tol = 1e-4;
    grad->add_option("--seed", grad_seed, "first seed");
    grad->add_option("--seeds", grad_seeds, "number of seeds to check")->check(CLI::PositiveNumber);
    grad->add_option("--tolerance", grad_tol, "maximum relative error");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        if (*synth) return cmd_synth(common);
        if (*train_cmd) return cmd_train(common);
        if (*eval) return cmd_evaluate(common, mode, model);
        if (*ablate) return cmd_ablate(common);
        if (*sweep) return cmd_sweep(common, counts);
        if (*grad) return cmd_check_grad(grad_seed, grad_seeds, grad_tol);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kNumeric;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const std::domain_error& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kNumeric;
    }
    return kOk;
}
