#pragma once

#include <tfgn/classify.hpp>
#include <tfgn/core.hpp>
#include <tfgn/gan.hpp>
#include <tfgn/neuralcore.hpp>

#include <json.hpp>

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace tfgn {

// Binary layout:
//
//   bytes 0..7   "TFGNCKPT"
//   bytes 8..11  header length n, uint32 little-endian
//   next n bytes JSON header
//   rest         float32 little-endian payload
//
// The header has a "records" array. Each record names its role, shape and
// value count; payloads follow in record order. Network records store w1,
// b1, w2, b2 in that order, each matrix row-major. Classifier records store
// the d_x x C weight matrix row-major.

inline constexpr std::array<char, 8> kCheckpointMagic{'T', 'F', 'G', 'N', 'C', 'K', 'P', 'T'};
inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public DataError {
public:
    using DataError::DataError;
};

struct CheckpointFile {
    nlohmann::json header;
    std::vector<float> payload;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

inline void put_f32(std::string& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    put_u32(out, bits);
}

inline float get_f32(const unsigned char* p) {
    const std::uint32_t bits = get_u32(p);
    float f;
    std::memcpy(&f, &bits, sizeof f);
    return f;
}

template <typename Derived>
void append_row_major(std::vector<float>& out, const Eigen::MatrixBase<Derived>& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(static_cast<float>(m(i, j)));
}

inline MatrixD take_row_major(const std::vector<float>& in, std::size_t& pos, Eigen::Index rows, Eigen::Index cols) {
    MatrixD m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<double>(in[pos++]);
    return m;
}

template <typename T>
T header_field(const nlohmann::json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key))
        throw CheckpointError("checkpoint header: " + where + " is missing \"" + key + "\"");
    try {
        return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw CheckpointError("checkpoint header: " + where + "." + key + " has the wrong type");
    }
}

}  // namespace detail

inline void write_checkpoint(const CheckpointFile& f, const std::filesystem::path& path) {
    const std::string header = f.header.dump();
    std::string bytes(kCheckpointMagic.begin(), kCheckpointMagic.end());
    detail::put_u32(bytes, static_cast<std::uint32_t>(header.size()));
    bytes += header;
    bytes.reserve(bytes.size() + 4 * f.payload.size());
    for (float v : f.payload) detail::put_f32(bytes, v);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed: " + path.string());
}

/// Reads and structurally checks a checkpoint: magic, header JSON, record
/// list and payload length.
inline CheckpointFile read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    const std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
    const std::string name = path.filename().string();

    if (raw.size() < 12 || !std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), raw.begin()))
        throw CheckpointError(name + ": not a checkpoint (bad magic)");
    const std::uint32_t n = detail::get_u32(p + 8);
    if (raw.size() - 12 < n) throw CheckpointError(name + ": header length " + std::to_string(n) + " exceeds file size");

    CheckpointFile f;
    try {
        f.header = nlohmann::json::parse(raw.begin() + 12, raw.begin() + 12 + n);
    } catch (const nlohmann::json::parse_error& e) {
        throw CheckpointError(name + ": checkpoint header: " + e.what());
    }
    if (detail::header_field<int>(f.header, "version", "header") != kCheckpointVersion)
        throw CheckpointError(name + ": unsupported checkpoint version");
    if (!f.header.contains("records") || !f.header["records"].is_array())
        throw CheckpointError(name + ": checkpoint header: missing \"records\" array");

    std::size_t expected = 0;
    for (const auto& r : f.header["records"]) expected += detail::header_field<std::size_t>(r, "n_values", "record");
    const std::size_t body = raw.size() - 12 - n;
    if (body != 4 * expected)
        throw CheckpointError(name + ": payload holds " + std::to_string(body) + " bytes, header describes " +
                              std::to_string(4 * expected));
    f.payload.resize(expected);
    for (std::size_t i = 0; i < expected; ++i) f.payload[i] = detail::get_f32(p + 12 + n + 4 * i);
    return f;
}

// ---------------------------------------------------------------------------
// Networks

inline nlohmann::json network_record(const MlpParams<double>& m, const std::string& role, std::uint64_t root_seed,
                                     const std::string& stream) {
    return {{"role", role},
            {"d_in", m.d_in()},
            {"hidden", m.hidden()},
            {"d_out", m.d_out()},
            {"hidden_activation", "leaky_relu"},
            {"leaky_slope", m.leaky_slope},
            {"output_activation", to_string(m.output)},
            {"seed", {{"root", root_seed}, {"stream", stream}}},
            {"n_values", m.w1.size() + m.b1.size() + m.w2.size() + m.b2.size()}};
}

inline void append_network(std::vector<float>& payload, const MlpParams<double>& m) {
    detail::append_row_major(payload, m.w1);
    detail::append_row_major(payload, m.b1.transpose());
    detail::append_row_major(payload, m.w2);
    detail::append_row_major(payload, m.b2.transpose());
}

inline MlpParams<double> take_network(const nlohmann::json& rec, const std::vector<float>& payload, std::size_t& pos) {
    const int d_in = detail::header_field<int>(rec, "d_in", "record");
    const int h = detail::header_field<int>(rec, "hidden", "record");
    const int d_out = detail::header_field<int>(rec, "d_out", "record");
    const auto act = detail::header_field<std::string>(rec, "output_activation", "record");
    if (d_in < 1 || h < 1 || d_out < 1) throw CheckpointError("checkpoint header: nonpositive network dimension");
    const std::size_t count = static_cast<std::size_t>(d_in) * h + h + static_cast<std::size_t>(h) * d_out + d_out;
    if (count != detail::header_field<std::size_t>(rec, "n_values", "record"))
        throw CheckpointError("checkpoint header: n_values does not match network dimensions");
    MlpParams<double> m;
    if (act == "rectifier")
        m.output = OutputActivation::rectifier;
    else if (act == "linear")
        m.output = OutputActivation::linear;
    else
        throw CheckpointError("checkpoint header: unknown output_activation \"" + act + "\"");
    m.leaky_slope = detail::header_field<double>(rec, "leaky_slope", "record");
    m.w1 = detail::take_row_major(payload, pos, d_in, h);
    m.b1 = detail::take_row_major(payload, pos, 1, h).transpose();
    m.w2 = detail::take_row_major(payload, pos, h, d_out);
    m.b2 = detail::take_row_major(payload, pos, 1, d_out).transpose();
    return m;
}

/// Generator and discriminator in one file, tagged by role.
inline void save_model(const GanModel& model, const std::filesystem::path& path, std::uint64_t root_seed) {
    CheckpointFile f;
    f.header = {{"version", kCheckpointVersion},
                {"kind", "gan"},
                {"records",
                 {network_record(model.generator, "generator", root_seed, "init.generator"),
                  network_record(model.discriminator, "discriminator", root_seed, "init.discriminator")}}};
    append_network(f.payload, model.generator);
    append_network(f.payload, model.discriminator);
    write_checkpoint(f, path);
}

inline GanModel load_model(const std::filesystem::path& path) {
    const CheckpointFile f = read_checkpoint(path);
    if (detail::header_field<std::string>(f.header, "kind", "header") != "gan")
        throw CheckpointError(path.filename().string() + ": not a model checkpoint");
    GanModel m;
    bool have_g = false, have_d = false;
    std::size_t pos = 0;
    for (const auto& rec : f.header["records"]) {
        const auto role = detail::header_field<std::string>(rec, "role", "record");
        if (role == "generator") {
            m.generator = take_network(rec, f.payload, pos);
            have_g = true;
        } else if (role == "discriminator") {
            m.discriminator = take_network(rec, f.payload, pos);
            have_d = true;
        } else {
            throw CheckpointError("checkpoint header: unknown role \"" + role + "\"");
        }
    }
    if (!have_g || !have_d) throw CheckpointError("checkpoint header: model needs a generator and a discriminator");
    if (m.discriminator.d_in() <= m.generator.d_out() || m.discriminator.d_out() != 1)
        throw CheckpointError("checkpoint header: generator and discriminator shapes disagree");
    return m;
}

// ---------------------------------------------------------------------------
// Classifiers

inline void save_classifier(const SoftmaxClassifier& clf, const std::filesystem::path& path, std::uint64_t root_seed) {
    CheckpointFile f;
    nlohmann::json rec = {{"role", to_string(clf.trained_on)},
                          {"d_x", clf.weights.rows()},
                          {"n_classes", clf.weights.cols()},
                          {"class_ids", clf.class_ids},
                          {"seed", {{"root", root_seed}}},
                          {"n_values", clf.weights.size()}};
    f.header = {{"version", kCheckpointVersion}, {"kind", "classifier"}, {"records", {rec}}};
    detail::append_row_major(f.payload, clf.weights);
    write_checkpoint(f, path);
}

inline SoftmaxClassifier load_classifier(const std::filesystem::path& path) {
    const CheckpointFile f = read_checkpoint(path);
    if (detail::header_field<std::string>(f.header, "kind", "header") != "classifier" || f.header["records"].size() != 1)
        throw CheckpointError(path.filename().string() + ": not a classifier checkpoint");
    const auto& rec = f.header["records"][0];
    SoftmaxClassifier clf;
    const auto role = parse_classifier_role(detail::header_field<std::string>(rec, "role", "record"));
    if (!role) throw CheckpointError("checkpoint header: unknown classifier role");
    clf.trained_on = *role;
    clf.class_ids = detail::header_field<std::vector<ClassId>>(rec, "class_ids", "record");
    const int d_x = detail::header_field<int>(rec, "d_x", "record");
    const int c = detail::header_field<int>(rec, "n_classes", "record");
    if (d_x < 1 || c != static_cast<int>(clf.class_ids.size()) ||
        static_cast<std::size_t>(d_x) * c != f.payload.size())
        throw CheckpointError("checkpoint header: classifier shape disagrees with class_ids or payload");
    std::size_t pos = 0;
    clf.weights = detail::take_row_major(f.payload, pos, d_x, c);
    return clf;
}

}  // namespace tfgn
