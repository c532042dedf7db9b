#pragma once

#include <tfgn/core.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace tfgn {

/// kNN cosine similarity matrices over class embeddings.
///
/// Column j of each matrix holds the similarities of the k row classes
/// nearest to class j; every other entry is zero.
struct SimilarityGraph {
    MatrixD w_ss;  // K x K
    MatrixD w_uu;  // M x M
    MatrixD w_su;  // K x M
    int k_neighbors = 5;
    bool include_self = true;
};

enum class TransferKind { structure_product, absorbing_markov };

inline const char* to_string(TransferKind k) {
    return k == TransferKind::structure_product ? "structure_product" : "absorbing_markov";
}

inline std::optional<TransferKind> parse_transfer_kind(const std::string& s) {
    if (s == "structure_product") return TransferKind::structure_product;
    if (s == "absorbing_markov") return TransferKind::absorbing_markov;
    return std::nullopt;
}

struct TransferVariant {
    TransferKind kind = TransferKind::structure_product;
    // Unset: 1e-6 * trace(W_ss) / K, applied only when W_ss is ill-conditioned.
    // Zero: never regularize; an ill-conditioned W_ss is an error.
    std::optional<double> ridge;
};

class SingularMatrixError : public NumericError {
public:
    using NumericError::NumericError;
};

inline constexpr double kMinReciprocalCondition = 1e-10;

inline double cosine_similarity(const Eigen::Ref<const VectorD>& a, const Eigen::Ref<const VectorD>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) throw std::domain_error("cosine_similarity: zero-norm vector");
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

namespace detail {

inline MatrixD knn_mask(const MatrixD& rows, const MatrixD& cols, int k, bool same_set, bool include_self) {
    if (k < 1) throw std::invalid_argument("knn_similarity: k must be >= 1");
    if (rows.cols() != cols.cols()) throw std::invalid_argument("knn_similarity: embedding widths differ");
    const Eigen::Index n_rows = rows.rows();
    const Eigen::Index n_cols = cols.rows();

    VectorD row_norm = rows.rowwise().norm();
    VectorD col_norm = cols.rowwise().norm();
    if ((row_norm.array() == 0.0).any() || (col_norm.array() == 0.0).any())
        throw std::domain_error("knn_similarity: zero embedding row");

    const int candidates = static_cast<int>(same_set && !include_self ? n_rows - 1 : n_rows);
    int kk = k;
    if (kk > candidates) {
        log_warning("knn_similarity: k=" + std::to_string(k) + " exceeds " + std::to_string(candidates) +
                    " candidates, clamped");
        kk = candidates;
    }

    MatrixD out = MatrixD::Zero(n_rows, n_cols);
    std::vector<Eigen::Index> order;
    VectorD sim(n_rows);
    for (Eigen::Index j = 0; j < n_cols; ++j) {
        for (Eigen::Index i = 0; i < n_rows; ++i)
            sim(i) = std::clamp(rows.row(i).dot(cols.row(j)) / (row_norm(i) * col_norm(j)), -1.0, 1.0);
        order.clear();
        for (Eigen::Index i = 0; i < n_rows; ++i) {
            if (same_set && !include_self && i == j) continue;
            order.push_back(i);
        }
        std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return sim(a) > sim(b); });
        for (int t = 0; t < kk; ++t) out(order[t], j) = sim(order[t]);
    }
    return out;
}

}  // namespace detail

/// Square kNN similarity over one embedding set. With include_self false a
/// class never counts as its own neighbor.
inline MatrixD knn_similarity(const MatrixD& embeddings, int k, bool include_self) {
    return detail::knn_mask(embeddings, embeddings, k, true, include_self);
}

/// Cross kNN similarity: entry (i,j) is nonzero when row class i is among the
/// k nearest row classes of column class j. Ties go to the lower index.
inline MatrixD knn_similarity(const MatrixD& rows, const MatrixD& cols, int k) {
    return detail::knn_mask(rows, cols, k, false, true);
}

inline SimilarityGraph build_graph(const MatrixD& seen_embeddings, const MatrixD& unseen_embeddings, int k,
                                   bool include_self = true) {
    SimilarityGraph g;
    g.k_neighbors = k;
    g.include_self = include_self;
    g.w_ss = knn_similarity(seen_embeddings, k, include_self);
    g.w_uu = knn_similarity(unseen_embeddings, k, include_self);
    g.w_su = knn_similarity(seen_embeddings, unseen_embeddings, k);
    return g;
}

namespace detail {

inline void check_graph_dims(const MatrixD& theta, const SimilarityGraph& g) {
    const auto K = g.w_ss.rows();
    const auto M = g.w_uu.rows();
    if (g.w_ss.cols() != K || g.w_uu.cols() != M || g.w_su.rows() != K || g.w_su.cols() != M)
        throw std::invalid_argument("transfer: inconsistent graph dimensions");
    if (theta.cols() != K)
        throw std::invalid_argument("transfer: classifier has " + std::to_string(theta.cols()) +
                                    " columns, graph has " + std::to_string(K) + " seen classes");
}

}  // namespace detail

/// Q = theta * W_ss^-1 * W_su * W_uu, with a ridge fallback when W_ss is
/// numerically singular.
inline MatrixD transfer_structure_product(const MatrixD& theta, const SimilarityGraph& g,
                                          std::optional<double> ridge = std::nullopt) {
    detail::check_graph_dims(theta, g);
    if (ridge && *ridge < 0.0) throw std::invalid_argument("transfer: ridge must be nonnegative");
    const auto K = g.w_ss.rows();

    Eigen::PartialPivLU<MatrixD> lu(g.w_ss);
    double rcond = lu.rcond();
    MatrixD solved;  // W_ss^-1 * W_su
    if (std::isfinite(rcond) && rcond >= kMinReciprocalCondition) {
        solved = lu.solve(g.w_su);
    } else {
        const double r = ridge ? *ridge : 1e-6 * g.w_ss.trace() / static_cast<double>(K);
        if (r == 0.0)
            throw SingularMatrixError("W_ss is singular (reciprocal condition " + std::to_string(rcond) +
                                      ") and ridge is 0");
        log_warning("transfer: W_ss reciprocal condition " + std::to_string(rcond) + ", solving with ridge " +
                    std::to_string(r));
        Eigen::PartialPivLU<MatrixD> reg(g.w_ss + r * MatrixD::Identity(K, K));
        rcond = reg.rcond();
        if (!std::isfinite(rcond) || rcond < kMinReciprocalCondition)
            throw SingularMatrixError("W_ss + ridge*I is singular (reciprocal condition " + std::to_string(rcond) + ")");
        solved = reg.solve(g.w_su);
    }
    MatrixD q = theta * solved * g.w_uu;
    if (!q.allFinite()) throw NumericError("transfer_structure_product: non-finite result");
    return q;
}

/// Rows of [W_ss | W_su] divided by their common row sum.
inline std::pair<MatrixD, MatrixD> normalize_transition_block(const SimilarityGraph& g) {
    const auto K = g.w_ss.rows();
    MatrixD ss = g.w_ss;
    MatrixD su = g.w_su;
    for (Eigen::Index i = 0; i < K; ++i) {
        const double s = ss.row(i).sum() + su.row(i).sum();
        if (s == 0.0)
            throw NumericError("transfer_absorbing_markov: row " + std::to_string(i) + " of [W_ss | W_su] sums to zero");
        ss.row(i) /= s;
        su.row(i) /= s;
    }
    return {ss, su};
}

/// Q = theta * (I - W~_ss)^-1 * W~_su, solved exactly.
inline MatrixD transfer_absorbing_markov(const MatrixD& theta, const SimilarityGraph& g) {
    detail::check_graph_dims(theta, g);
    const auto K = g.w_ss.rows();
    auto [ss, su] = normalize_transition_block(g);
    const MatrixD a = MatrixD::Identity(K, K) - ss;
    Eigen::PartialPivLU<MatrixD> lu(a);
    const double rcond = lu.rcond();
    if (!std::isfinite(rcond) || rcond < kMinReciprocalCondition)
        throw SingularMatrixError("I - W~_ss is singular (reciprocal condition " + std::to_string(rcond) + ")");
    MatrixD q = theta * lu.solve(su);
    if (!q.allFinite()) throw NumericError("transfer_absorbing_markov: non-finite result");
    return q;
}

inline MatrixD apply_transfer(const MatrixD& theta, const SimilarityGraph& g, const TransferVariant& v) {
    return v.kind == TransferKind::structure_product ? transfer_structure_product(theta, g, v.ridge)
                                                     : transfer_absorbing_markov(theta, g);
}

inline nlohmann::json graph_to_json(const SimilarityGraph& g) {
    auto dense = [](const MatrixD& m) {
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            std::vector<double> r(m.cols());
            for (Eigen::Index j = 0; j < m.cols(); ++j) r[j] = m(i, j);
            rows.push_back(r);
        }
        return rows;
    };
    return {{"k_neighbors", g.k_neighbors},
            {"include_self", g.include_self},
            {"w_ss", dense(g.w_ss)},
            {"w_uu", dense(g.w_uu)},
            {"w_su", dense(g.w_su)}};
}

}  // namespace tfgn
