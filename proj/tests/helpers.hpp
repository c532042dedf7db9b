#pragma once

#include "oracles.hpp"

#include <tfgn/core.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

namespace testutil {

inline oracle::Mat to_mat(const tfgn::MatrixD& m) {
    oracle::Mat out = oracle::zeros(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
    return out;
}

inline tfgn::MatrixD from_mat(const oracle::Mat& m) {
    tfgn::MatrixD out(static_cast<Eigen::Index>(m.size()), m.empty() ? 0 : static_cast<Eigen::Index>(m[0].size()));
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = 0; j < m[i].size(); ++j) out(i, j) = m[i][j];
    return out;
}

inline std::vector<double> to_vec(const tfgn::VectorD& v) { return {v.data(), v.data() + v.size()}; }

inline double max_abs_diff(const tfgn::MatrixD& a, const oracle::Mat& b) {
    EXPECT_EQ(static_cast<std::size_t>(a.rows()), b.size());
    double m = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) m = std::max(m, std::abs(a(i, j) - b[i][j]));
    return m;
}

inline tfgn::MatrixD random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = -1.0,
                                   double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    tfgn::MatrixD m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = u(rng);
    return m;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        std::string name = "tfgn_" + tag;
        if (info) name += std::string("_") + info->test_suite_name() + "_" + info->name();
        path_ = std::filesystem::temp_directory_path() / name;
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Silences library warnings for the lifetime of the object and counts them.
class CaptureLog {
public:
    CaptureLog() : saved_(tfgn::log_sink()) {
        tfgn::log_sink() = [this](std::string_view m) { messages.emplace_back(m); };
    }
    ~CaptureLog() { tfgn::log_sink() = saved_; }
    std::vector<std::string> messages;

private:
    tfgn::LogSink saved_;
};

}  // namespace testutil
