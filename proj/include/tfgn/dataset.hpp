#pragma once

#include <tfgn/core.hpp>

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace tfgn {

/// Features, labels and class embeddings of a zero-shot split.
///
/// Class ids are dense and 0-based; row `c` of `class_embeddings` belongs to
/// class `c`. Seen and unseen class lists are kept sorted ascending.
struct DatasetBundle {
    std::string name;
    int d_x = 0;
    int d_c = 0;
    MatrixD features;                      // n_samples x d_x
    std::vector<ClassId> sample_labels;    // n_samples
    MatrixD class_embeddings;              // n_classes x d_c
    std::vector<std::string> class_names;  // n_classes
    std::vector<ClassId> seen_classes;
    std::vector<ClassId> unseen_classes;
    std::vector<int> train_indices;
    std::vector<int> test_indices;
    std::vector<int> val_indices;  // carried through, no semantics attached

    int n_samples() const { return static_cast<int>(features.rows()); }
    int n_classes() const { return static_cast<int>(class_embeddings.rows()); }
    int n_seen() const { return static_cast<int>(seen_classes.size()); }
    int n_unseen() const { return static_cast<int>(unseen_classes.size()); }

    MatrixD embeddings_of(const std::vector<ClassId>& ids) const {
        MatrixD out(static_cast<Eigen::Index>(ids.size()), class_embeddings.cols());
        for (std::size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = class_embeddings.row(ids[i]);
        return out;
    }

    bool operator==(const DatasetBundle&) const = default;
};

struct SyntheticBenchmarkSpec {
    int n_seen = 8;
    int n_unseen = 4;
    int d_x = 16;
    int d_c = 8;
    int samples_per_class = 50;
    double cluster_spread = 0.1;
    std::uint64_t seed = 7;
    // Extra held-out samples per seen class placed in the test split so that
    // seen-class accuracy can be measured. Zero keeps the train split equal
    // to every seen sample.
    int seen_test_per_class = 0;
};

struct Violation {
    std::string invariant;
    long index = -1;
    std::string message;
};

enum class DatasetErrorKind { missing_file, parse, dimension_mismatch, unknown_class, split_violation };

class DatasetError : public DataError {
public:
    DatasetError(DatasetErrorKind kind, const std::string& what) : DataError(what), kind_(kind) {}
    DatasetErrorKind kind() const { return kind_; }

private:
    DatasetErrorKind kind_;
};

// ---------------------------------------------------------------------------

inline std::vector<Violation> validate_bundle(const DatasetBundle& b) {
    std::vector<Violation> out;
    auto add = [&](std::string inv, long idx, std::string msg) {
        out.push_back({std::move(inv), idx, std::move(msg)});
    };

    if (b.d_x <= 0) add("positive_dims", -1, "d_x must be positive");
    if (b.d_c <= 0) add("positive_dims", -1, "d_c must be positive");
    if (b.features.cols() != b.d_x)
        add("feature_dim", -1,
            "features have " + std::to_string(b.features.cols()) + " columns, d_x is " + std::to_string(b.d_x));
    if (b.class_embeddings.cols() != b.d_c)
        add("embedding_dim", -1,
            "class embeddings have " + std::to_string(b.class_embeddings.cols()) + " columns, d_c is " +
                std::to_string(b.d_c));
    if (static_cast<long>(b.sample_labels.size()) != b.features.rows())
        add("sample_count", -1,
            std::to_string(b.sample_labels.size()) + " labels for " + std::to_string(b.features.rows()) + " samples");

    const long n_classes = b.class_embeddings.rows();
    for (long c = 0; c < n_classes; ++c) {
        if (b.class_embeddings.row(c).squaredNorm() == 0.0)
            add("nonzero_embedding", c, "class " + std::to_string(c) + " has an all-zero embedding");
    }

    for (std::size_t i = 0; i < b.sample_labels.size(); ++i) {
        const ClassId y = b.sample_labels[i];
        if (y < 0 || y >= n_classes)
            add("label_has_embedding", static_cast<long>(i),
                "sample " + std::to_string(i) + " has label " + std::to_string(y) + " without an embedding row");
    }

    std::set<ClassId> seen(b.seen_classes.begin(), b.seen_classes.end());
    for (ClassId c : b.unseen_classes) {
        if (seen.count(c)) add("seen_unseen_disjoint", c, "class " + std::to_string(c) + " is both seen and unseen");
    }
    for (const auto* split : {&b.seen_classes, &b.unseen_classes}) {
        for (ClassId c : *split) {
            if (c < 0 || c >= n_classes)
                add("class_in_range", c, "class id " + std::to_string(c) + " out of range");
        }
    }

    auto check_indices = [&](const std::vector<int>& idx, const char* which) {
        for (int i : idx) {
            if (i < 0 || i >= b.n_samples() || i >= static_cast<int>(b.sample_labels.size()))
                add("index_in_range", i, std::string(which) + " index " + std::to_string(i) + " out of range");
        }
    };
    check_indices(b.train_indices, "train");
    check_indices(b.test_indices, "test");
    check_indices(b.val_indices, "val");

    for (int i : b.train_indices) {
        if (i < 0 || i >= static_cast<int>(b.sample_labels.size())) continue;
        if (!seen.count(b.sample_labels[i]))
            add("unseen_in_train", i,
                "train sample " + std::to_string(i) + " has non-seen label " + std::to_string(b.sample_labels[i]));
    }
    return out;
}

inline std::map<ClassId, int> class_counts(const std::vector<ClassId>& labels) {
    std::map<ClassId, int> counts;
    for (ClassId y : labels) ++counts[y];
    return counts;
}

// ---------------------------------------------------------------------------
// Synthetic benchmark

inline DatasetBundle synthesize_benchmark(const SyntheticBenchmarkSpec& spec) {
    if (spec.n_seen < 2 || spec.n_unseen < 2) throw ConfigError("synthetic spec needs at least 2 seen and 2 unseen classes");
    if (spec.samples_per_class < 2) throw ConfigError("synthetic spec needs samples_per_class >= 2");
    if (spec.d_x < 1 || spec.d_c < 1) throw ConfigError("synthetic spec dimensions must be positive");
    if (spec.cluster_spread < 0.0) throw ConfigError("synthetic spec cluster_spread must be nonnegative");
    if (spec.seen_test_per_class < 0) throw ConfigError("synthetic spec seen_test_per_class must be nonnegative");

    Rng rng(spec.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const int n_classes = spec.n_seen + spec.n_unseen;
    DatasetBundle b;
    b.name = "synthetic";
    b.d_x = spec.d_x;
    b.d_c = spec.d_c;

    b.class_embeddings.resize(n_classes, spec.d_c);
    for (int c = 0; c < n_classes; ++c) {
        do {
            for (int j = 0; j < spec.d_c; ++j) b.class_embeddings(c, j) = unif(rng);
        } while (b.class_embeddings.row(c).squaredNorm() == 0.0);
        b.class_names.push_back("class_" + std::to_string(c));
    }

    // Shared attribute -> feature map.
    MatrixD map(spec.d_c, spec.d_x);
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec.d_c));
    for (int i = 0; i < spec.d_c; ++i)
        for (int j = 0; j < spec.d_x; ++j) map(i, j) = gauss(rng) * scale;
    const MatrixD centers = b.class_embeddings * map;

    for (int c = 0; c < spec.n_seen; ++c) b.seen_classes.push_back(c);
    for (int c = spec.n_seen; c < n_classes; ++c) b.unseen_classes.push_back(c);

    const int n_samples = n_classes * spec.samples_per_class + spec.n_seen * spec.seen_test_per_class;
    b.features.resize(n_samples, spec.d_x);
    b.sample_labels.reserve(n_samples);

    int row = 0;
    auto emit = [&](int c) {
        for (int j = 0; j < spec.d_x; ++j)
            b.features(row, j) = std::max(0.0, centers(c, j) + spec.cluster_spread * gauss(rng));
        b.sample_labels.push_back(c);
        return row++;
    };
    for (int c = 0; c < n_classes; ++c) {
        const bool seen = c < spec.n_seen;
        for (int s = 0; s < spec.samples_per_class; ++s) {
            const int r = emit(c);
            (seen ? b.train_indices : b.test_indices).push_back(r);
        }
        if (seen) {
            for (int s = 0; s < spec.seen_test_per_class; ++s) b.test_indices.push_back(emit(c));
        }
    }
    std::sort(b.test_indices.begin(), b.test_indices.end());
    return b;
}

// ---------------------------------------------------------------------------
// On-disk format: manifest.json, features.csv, labels.csv, attributes.csv.

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(std::string_view tok, const std::string& where) {
    while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
    while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t' || tok.back() == '\r')) tok.remove_suffix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
        throw DatasetError(DatasetErrorKind::parse, where + ": cannot parse '" + std::string(tok) + "' as a number");
    return v;
}

inline std::vector<std::vector<double>> read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError(DatasetErrorKind::missing_file, "missing file: " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::string_view rest(line);
        const std::string where = path.filename().string() + ":" + std::to_string(line_no);
        while (true) {
            auto comma = rest.find(',');
            row.push_back(parse_double(rest.substr(0, comma), where));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline MatrixD rows_to_matrix(const std::vector<std::vector<double>>& rows, int cols, const std::string& file,
                              const char* dim_name) {
    MatrixD m(static_cast<Eigen::Index>(rows.size()), cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (static_cast<int>(rows[i].size()) != cols)
            throw DatasetError(DatasetErrorKind::dimension_mismatch,
                               file + " row " + std::to_string(i + 1) + " has " + std::to_string(rows[i].size()) +
                                   " values, manifest " + dim_name + " is " + std::to_string(cols));
        for (int j = 0; j < cols; ++j) m(static_cast<Eigen::Index>(i), j) = rows[i][j];
    }
    return m;
}

inline void write_matrix_csv(const std::filesystem::path& path, const MatrixD& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << format_double(m(i, j));
        }
        out << '\n';
    }
}

}  // namespace detail

inline DatasetBundle load_dataset(const std::filesystem::path& dir) {
    using nlohmann::json;
    const auto manifest_path = dir / "manifest.json";
    std::ifstream mf(manifest_path);
    if (!mf) throw DatasetError(DatasetErrorKind::missing_file, "missing file: " + manifest_path.string());
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw DatasetError(DatasetErrorKind::parse, "manifest.json: " + std::string(e.what()));
    }

    DatasetBundle b;
    try {
        b.name = manifest.value("name", std::string("dataset"));
        b.d_x = manifest.at("d_x").get<int>();
        b.d_c = manifest.at("d_c").get<int>();
        const auto& classes = manifest.at("classes");
        b.class_names.resize(classes.size());
        std::vector<bool> present(classes.size(), false);
        for (const auto& c : classes) {
            const int id = c.at("id").get<int>();
            if (id < 0 || id >= static_cast<int>(classes.size()) || present[id])
                throw DatasetError(DatasetErrorKind::parse, "manifest.json: class ids must be dense 0-based and unique");
            present[id] = true;
            b.class_names[id] = c.value("name", "class_" + std::to_string(id));
        }
        b.seen_classes = manifest.at("seen").get<std::vector<ClassId>>();
        b.unseen_classes = manifest.at("unseen").get<std::vector<ClassId>>();
        b.train_indices = manifest.at("train").get<std::vector<int>>();
        b.test_indices = manifest.at("test").get<std::vector<int>>();
        if (manifest.contains("val")) b.val_indices = manifest.at("val").get<std::vector<int>>();
    } catch (const json::exception& e) {
        throw DatasetError(DatasetErrorKind::parse, "manifest.json: " + std::string(e.what()));
    }
    if (b.d_x <= 0 || b.d_c <= 0)
        throw DatasetError(DatasetErrorKind::dimension_mismatch, "manifest.json: d_x and d_c must be positive");
    std::sort(b.seen_classes.begin(), b.seen_classes.end());
    std::sort(b.unseen_classes.begin(), b.unseen_classes.end());

    b.features = detail::rows_to_matrix(detail::read_csv(dir / "features.csv"), b.d_x, "features.csv", "d_x");
    const auto attr_rows = detail::read_csv(dir / "attributes.csv");
    if (attr_rows.size() != b.class_names.size())
        throw DatasetError(DatasetErrorKind::dimension_mismatch,
                           "attributes.csv has " + std::to_string(attr_rows.size()) + " rows, manifest lists " +
                               std::to_string(b.class_names.size()) + " classes");
    b.class_embeddings = detail::rows_to_matrix(attr_rows, b.d_c, "attributes.csv", "d_c");

    const auto label_rows = detail::read_csv(dir / "labels.csv");
    if (static_cast<long>(label_rows.size()) != b.features.rows())
        throw DatasetError(DatasetErrorKind::dimension_mismatch,
                           "labels.csv has " + std::to_string(label_rows.size()) + " rows, features.csv has " +
                               std::to_string(b.features.rows()));
    for (std::size_t i = 0; i < label_rows.size(); ++i) {
        if (label_rows[i].size() != 1)
            throw DatasetError(DatasetErrorKind::dimension_mismatch, "labels.csv row " + std::to_string(i + 1) +
                                                                         " must hold exactly one class id");
        const double v = label_rows[i][0];
        const auto id = static_cast<ClassId>(v);
        if (static_cast<double>(id) != v || id < 0 || id >= b.n_classes())
            throw DatasetError(DatasetErrorKind::unknown_class,
                               "labels.csv row " + std::to_string(i + 1) + " references absent class " +
                                   detail::format_double(v));
        b.sample_labels.push_back(id);
    }

    for (const auto& v : validate_bundle(b)) {
        const bool split = v.invariant == "seen_unseen_disjoint" || v.invariant == "unseen_in_train" ||
                           v.invariant == "index_in_range" || v.invariant == "class_in_range";
        if (split) throw DatasetError(DatasetErrorKind::split_violation, v.invariant + ": " + v.message);
        if (v.invariant == "label_has_embedding") throw DatasetError(DatasetErrorKind::unknown_class, v.message);
        throw DatasetError(DatasetErrorKind::dimension_mismatch, v.invariant + ": " + v.message);
    }
    return b;
}

inline void save_dataset(const DatasetBundle& b, const std::filesystem::path& dir) {
    using nlohmann::json;
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["name"] = b.name;
    manifest["d_x"] = b.d_x;
    manifest["d_c"] = b.d_c;
    json classes = json::array();
    for (int c = 0; c < b.n_classes(); ++c) {
        const std::string name = c < static_cast<int>(b.class_names.size()) ? b.class_names[c] : "class_" + std::to_string(c);
        classes.push_back({{"id", c}, {"name", name}});
    }
    manifest["classes"] = classes;
    manifest["seen"] = b.seen_classes;
    manifest["unseen"] = b.unseen_classes;
    manifest["train"] = b.train_indices;
    manifest["test"] = b.test_indices;
    if (!b.val_indices.empty()) manifest["val"] = b.val_indices;
    {
        std::ofstream out(dir / "manifest.json", std::ios::binary);
        if (!out) throw DataError("cannot write " + (dir / "manifest.json").string());
        out << manifest.dump(2) << '\n';
    }
    detail::write_matrix_csv(dir / "features.csv", b.features);
    detail::write_matrix_csv(dir / "attributes.csv", b.class_embeddings);
    std::ofstream labels(dir / "labels.csv", std::ios::binary);
    if (!labels) throw DataError("cannot write " + (dir / "labels.csv").string());
    for (ClassId y : b.sample_labels) labels << y << '\n';
}

}  // namespace tfgn
