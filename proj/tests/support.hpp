#pragma once

// Shared fixtures and independent oracles for the test binaries. The oracles
// re-derive each quantity from its defining formula without calling the
// library code they check.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "factcrs/corpus.hpp"
#include "factcrs/embeddings.hpp"
#include "factcrs/facttree.hpp"
#include "factcrs/forest.hpp"
#include "factcrs/random.hpp"

namespace testing {

using namespace factcrs;

// --- fixtures ----------------------------------------------------------------

/// The planted corpus used by the recovery and ablation experiments.
inline SyntheticSpec planted_spec(std::uint64_t seed = 1) {
    SyntheticSpec spec;
    spec.users = 60;
    spec.items = 48;
    spec.attributes = 8;
    spec.interactions = 800;
    spec.depth = 3;
    spec.noise = 0.0;
    spec.seed = seed;
    return spec;
}

inline ForestConfig planted_forest_config(std::uint64_t seed = 1) {
    ForestConfig c;
    c.dim = 16;
    c.num_trees = 5;
    c.tree.max_depth = 5;
    c.top_k = 10;
    c.max_turns = 10;
    c.seed = seed;
    return c;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("factcrs-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline InteractionRecord record(UserId u, ItemId i, std::vector<bool> mentions) {
    return InteractionRecord{u, i, std::move(mentions)};
}

/// Item table from explicit rows.
inline ItemEmbeddingTable table_of(const std::vector<std::vector<double>>& rows) {
    ItemEmbeddingTable t(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(rows[i].begin(), rows[i].end(), t.row(static_cast<ItemId>(i)).begin());
    return t;
}

/// Hand-built forest: each tree is given as a node list whose ids match positions.
inline InteractionForest forest_of(std::vector<std::vector<TreeNode>> trees, ItemEmbeddingTable items, std::size_t p) {
    InteractionForest f;
    std::vector<std::string> names;
    for (std::size_t a = 0; a < p; ++a) names.push_back("attr" + std::to_string(a));
    f.vocabulary = AttributeVocabulary(names);
    f.items = std::move(items);
    f.items.set_frozen(true);
    f.config.dim = f.items.dim();
    f.config.num_trees = trees.size();
    for (auto& nodes : trees) {
        std::vector<AttributeId> pool;
        for (std::size_t a = 0; a < p; ++a) pool.push_back(static_cast<AttributeId>(a));
        InteractionTree t(pool, 8);
        t.nodes() = std::move(nodes);
        f.trees.push_back(std::move(t));
    }
    return f;
}

inline TreeNode leaf(int id, Vector embedding, std::vector<ItemId> items, int depth = 0) {
    TreeNode n;
    n.id = id;
    n.depth = depth;
    n.embedding = std::move(embedding);
    n.candidate_items = std::move(items);
    n.interaction_count = n.candidate_items.size();
    return n;
}

inline TreeNode split(int id, AttributeId attribute, int yes, int no, Vector embedding, std::vector<ItemId> items,
                      int depth = 0) {
    TreeNode n = leaf(id, std::move(embedding), std::move(items), depth);
    n.split_attribute = attribute;
    n.positive_child = yes;
    n.negative_child = no;
    return n;
}

// --- scalar oracles ----------------------------------------------------------

/// -ln sigma(x) written out as ln(1 + e^-x), valid for moderate |x|.
inline double neg_log_sigmoid(double x) { return std::log(1.0 + std::exp(-x)); }

inline double inner(const std::vector<double>& a, const double* b) {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
    return acc;
}

/// Plain-matrix view of an item table for the oracles.
struct Matrix {
    std::size_t n = 0, d = 0;
    std::vector<double> v;
    explicit Matrix(const ItemEmbeddingTable& t) : n(t.size()), d(t.dim()), v(t.values()) {}
    const double* row(ItemId i) const { return v.data() + static_cast<std::size_t>(i) * d; }
    double* row(ItemId i) { return v.data() + static_cast<std::size_t>(i) * d; }
};

struct OracleRecord {
    ItemId item;
    std::vector<ItemId> negatives;
};

/// Objective of one side: sum_r [-ln s(s.v_r) + lambda_bpr sum_j -ln s(s.v_r - s.v_j)] + lambda_s |s|^2.
inline double oracle_side(const std::vector<double>& s, const Matrix& V, const std::vector<OracleRecord>& part,
                          const OptimizerConfig& c) {
    double total = 0.0;
    for (const auto& r : part) {
        const double pos = inner(s, V.row(r.item));
        total += neg_log_sigmoid(pos);
        for (ItemId j : r.negatives) total += c.lambda_bpr * neg_log_sigmoid(pos - inner(s, V.row(j)));
    }
    return total + c.lambda_s * inner(s, s.data());
}

inline double oracle_objective(const std::vector<double>& s_pos, const std::vector<double>& s_neg, const Matrix& V,
                               const std::vector<OracleRecord>& pos, const std::vector<OracleRecord>& neg,
                               const OptimizerConfig& c) {
    std::vector<bool> touched(V.n, false);
    for (const auto* part : {&pos, &neg})
        for (const auto& r : *part) {
            touched[static_cast<std::size_t>(r.item)] = true;
            for (ItemId j : r.negatives) touched[static_cast<std::size_t>(j)] = true;
        }
    double reg = 0.0;
    for (std::size_t i = 0; i < V.n; ++i)
        if (touched[i])
            for (std::size_t k = 0; k < V.d; ++k) reg += V.v[i * V.d + k] * V.v[i * V.d + k];
    double total = 0.0;
    if (!pos.empty()) total += oracle_side(s_pos, V, pos, c);
    if (!neg.empty()) total += oracle_side(s_neg, V, neg, c);
    return total + c.lambda_v * reg;
}

/// d/ds of oracle_side, from sigma'(x) = sigma(x)(1 - sigma(x)):
///   -(1 - s(p)) v_r - lambda_bpr (1 - s(p - n_j)) (v_r - v_j) + 2 lambda_s s
inline std::vector<double> oracle_side_grad(const std::vector<double>& s, const Matrix& V,
                                            const std::vector<OracleRecord>& part, const OptimizerConfig& c) {
    std::vector<double> g(s.size(), 0.0);
    auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    for (const auto& r : part) {
        const double* vr = V.row(r.item);
        const double pos = inner(s, vr);
        for (std::size_t k = 0; k < s.size(); ++k) g[k] -= (1.0 - sig(pos)) * vr[k];
        for (ItemId j : r.negatives) {
            const double* vj = V.row(j);
            const double w = c.lambda_bpr * (1.0 - sig(pos - inner(s, vj)));
            for (std::size_t k = 0; k < s.size(); ++k) g[k] -= w * (vr[k] - vj[k]);
        }
    }
    for (std::size_t k = 0; k < s.size(); ++k) g[k] += 2.0 * c.lambda_s * s[k];
    return g;
}

struct OracleFit {
    std::vector<double> s_pos, s_neg;
    double objective;
};

/// Gradient descent on the split objective with V held fixed: s starts at zero, each side steps by
/// learning_rate / max(1, |side|), and the best of the epochs + 1 evaluated iterates is returned.
inline OracleFit oracle_fit(const Matrix& V, const std::vector<OracleRecord>& pos, const std::vector<OracleRecord>& neg,
                            const OptimizerConfig& c, std::size_t epochs) {
    std::vector<double> sp(V.d, 0.0), sn(V.d, 0.0);
    OracleFit best{sp, sn, std::numeric_limits<double>::infinity()};
    for (std::size_t e = 0; e <= epochs; ++e) {
        const double obj = oracle_objective(sp, sn, V, pos, neg, c);
        if (obj < best.objective) best = {sp, sn, obj};
        if (e == epochs) break;
        const auto gp = oracle_side_grad(sp, V, pos, c);
        const auto gn = oracle_side_grad(sn, V, neg, c);
        const double ap = c.learning_rate / std::max<double>(1.0, static_cast<double>(pos.size()));
        const double an = c.learning_rate / std::max<double>(1.0, static_cast<double>(neg.size()));
        if (!pos.empty())
            for (std::size_t k = 0; k < V.d; ++k) sp[k] -= ap * gp[k];
        if (!neg.empty())
            for (std::size_t k = 0; k < V.d; ++k) sn[k] -= an * gn[k];
    }
    return best;
}

/// Enumerates every attribute of `pool` not in `used`, fits both sides with oracle_fit and returns the
/// attribute with the smallest objective (lowest index on ties); nullopt when every split is degenerate.
inline std::optional<std::pair<AttributeId, double>> brute_force_split(
    const std::vector<InteractionRecord>& records, const std::vector<std::vector<ItemId>>& negatives,
    const std::vector<AttributeId>& pool, const std::vector<AttributeId>& used, const Matrix& V, const OptimizerConfig& c) {
    std::optional<std::pair<AttributeId, double>> best;
    std::vector<AttributeId> order = pool;
    std::sort(order.begin(), order.end());
    for (AttributeId a : order) {
        if (std::count(used.begin(), used.end(), a)) continue;
        std::vector<OracleRecord> pos, neg;
        for (std::size_t k = 0; k < records.size(); ++k)
            (records[k].mentions[static_cast<std::size_t>(a)] ? pos : neg).push_back({records[k].item, negatives[k]});
        if (pos.empty() || neg.empty()) continue;
        const double obj = oracle_fit(V, pos, neg, c, c.epochs_search).objective;
        if (!best || obj < best->second) best = {a, obj};
    }
    return best;
}

// --- finite differences -------------------------------------------------------

/// Central differences of f at x with step h.
inline std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                              std::vector<double> x, double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double x0 = x[k];
        x[k] = x0 + h;
        const double up = f(x);
        x[k] = x0 - h;
        const double down = f(x);
        x[k] = x0;
        g[k] = (up - down) / (2.0 * h);
    }
    return g;
}

/// max_k |a_k - b_k| / max(|a_k|, |b_k|, floor).
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        worst = std::max(worst, std::abs(a[k] - b[k]) / std::max({std::abs(a[k]), std::abs(b[k]), floor}));
    return worst;
}

}  // namespace testing
