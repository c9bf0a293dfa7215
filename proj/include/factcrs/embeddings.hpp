#pragma once

// Dense embeddings and the optimization kernel that fits interaction
// embeddings (and, when trainable, item embeddings) under the
// cross-entropy + pairwise ranking + L2 objective.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "factcrs/corpus.hpp"

namespace factcrs {

using Vector = std::vector<double>;

class OptimizerError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

double dot(std::span<const double> a, std::span<const double> b);
/// Numerically stable log(1 + e^x).
double softplus(double x);
double sigmoid(double x);

/// The shared item matrix V (n x d), row-major.
class ItemEmbeddingTable {
public:
    ItemEmbeddingTable() = default;
    ItemEmbeddingTable(std::size_t items, std::size_t dim);
    /// Entries drawn uniformly from (-scale, scale).
    static ItemEmbeddingTable random(std::size_t items, std::size_t dim, double scale, std::uint64_t seed);

    std::size_t size() const { return items_; }
    std::size_t dim() const { return dim_; }
    bool frozen() const { return frozen_; }
    void set_frozen(bool frozen) { frozen_ = frozen; }

    std::span<const double> row(ItemId item) const;
    std::span<double> row(ItemId item);
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }

    bool operator==(const ItemEmbeddingTable&) const = default;

private:
    std::size_t items_ = 0;
    std::size_t dim_ = 0;
    bool frozen_ = false;
    std::vector<double> values_;
};

struct OptimizerConfig {
    double learning_rate = 0.05;
    std::size_t epochs_search = 20;
    std::size_t epochs_commit = 100;
    std::size_t negatives_per_positive = 5;
    double lambda_bpr = 1e-3;
    double lambda_s = 1e-2;
    double lambda_v = 1e-4;
    double init_scale = 0.01;  // item rows start uniform in (-init_scale, init_scale)
    /// Split search refits a scratch copy of a trainable table per candidate instead of holding it fixed.
    bool search_trains_items = false;

    /// Throws OptimizerError when a coefficient is negative or a count is zero.
    void validate() const;

    bool operator==(const OptimizerConfig&) const = default;
};

/// One interaction as seen by the optimizer: its target item plus sampled negatives D^neg.
struct RecordRef {
    ItemId item = 0;
    std::span<const ItemId> negatives;
};

// --- losses ------------------------------------------------------------------

/// Sum over `items` of -ln sigma(s . v_i).
double ce_loss(std::span<const double> s, const ItemEmbeddingTable& table, std::span<const ItemId> items);
/// Sum over negatives j of -ln sigma(s . v_i - s . v_j). Throws if `target` is among the negatives.
double bpr_loss(std::span<const double> s, const ItemEmbeddingTable& table, ItemId target,
                std::span<const ItemId> negatives);

/// Gradient accumulator for a set of item rows (all rows, or an explicit subset).
class ItemGradient {
public:
    ItemGradient(std::size_t items, std::size_t dim);
    ItemGradient(std::size_t items, std::size_t dim, std::span<const ItemId> rows);

    std::span<double> row(ItemId item);
    std::span<const double> row(ItemId item) const;
    const std::vector<ItemId>& rows() const { return rows_; }
    void clear();

private:
    std::size_t dim_;
    std::vector<int> slot_;
    std::vector<ItemId> rows_;
    std::vector<double> values_;
};

/// ce_loss plus its gradient, accumulated (added) into grad_s and grad_items.
double ce_loss_gradient(std::span<const double> s, const ItemEmbeddingTable& table, std::span<const ItemId> items,
                        std::span<double> grad_s, ItemGradient& grad_items);
/// bpr_loss plus its gradient; `weight` times the gradient is accumulated into grad_s and grad_items.
double bpr_loss_gradient(std::span<const double> s, const ItemEmbeddingTable& table, ItemId target,
                         std::span<const ItemId> negatives, std::span<double> grad_s, ItemGradient& grad_items,
                         double weight = 1.0);

// --- negative sampling -------------------------------------------------------

/// Per-user interaction sets over a record collection; draws D^neg for a record.
class NegativeSampler {
public:
    NegativeSampler(std::size_t num_items, std::span<const InteractionRecord> records);

    /// Uniform without replacement from items `user` never interacted with; size min(k, available).
    std::vector<ItemId> sample(UserId user, ItemId target, std::size_t k, std::uint64_t seed) const;
    bool interacted(UserId user, ItemId item) const;

private:
    std::size_t num_items_;
    std::vector<std::vector<ItemId>> user_items_;  // sorted
};

std::vector<ItemId> sample_negatives(const Dataset& dataset, const InteractionRecord& record, std::size_t k,
                                     std::uint64_t seed);

// --- partition fitting -------------------------------------------------------

struct PartitionFit {
    Vector s_pos;
    Vector s_neg;
    double objective = 0.0;          // best objective reached (never above `initial_objective`)
    double initial_objective = 0.0;
};

/// Full objective for fixed embeddings:
///   CE(s_pos, pos) + CE(s_neg, neg) + lambda_bpr * sum BPR + lambda_s (|s_pos|^2 + |s_neg|^2) + lambda_v |V_touched|^2
double partition_objective(std::span<const double> s_pos, std::span<const double> s_neg, const ItemEmbeddingTable& table,
                           std::span<const RecordRef> pos, std::span<const RecordRef> neg, const OptimizerConfig& config);

/// Full-batch gradient descent on partition_objective for `epochs` steps, starting from s = 0.
/// Each parameter block (s_pos, s_neg, every touched item row) takes a step of
/// learning_rate / (number of loss terms touching it). Item rows are updated only when the
/// table is not frozen. Returns the best iterate; the table keeps the matching item rows.
/// An empty partition yields the zero vector for its side.
PartitionFit fit_partition_embeddings(std::span<const RecordRef> pos, std::span<const RecordRef> neg,
                                      ItemEmbeddingTable& table, const OptimizerConfig& config, std::size_t epochs);
/// Same descent with the item table held fixed regardless of its frozen flag.
PartitionFit fit_partition_embeddings(std::span<const RecordRef> pos, std::span<const RecordRef> neg,
                                      const ItemEmbeddingTable& table, const OptimizerConfig& config, std::size_t epochs);

}  // namespace factcrs
