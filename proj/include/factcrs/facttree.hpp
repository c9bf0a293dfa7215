#pragma once

// User-item interaction tree: recursive attribute splitting of interaction
// records with an interaction embedding fitted at every node.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "factcrs/corpus.hpp"
#include "factcrs/embeddings.hpp"

namespace factcrs {

/// Attribute answers collected so far (true = yes).
using AnswerMap = std::map<AttributeId, bool>;

struct TreeConfig {
    std::size_t max_depth = 7;       // H_max
    double gini_threshold = 0.996;   // gamma
    std::size_t min_node = 2;
    std::size_t threads = 1;         // concurrent split evaluations per node

    bool operator==(const TreeConfig&) const = default;
};

struct TreeNode {
    int id = 0;
    int depth = 0;
    std::optional<AttributeId> split_attribute;  // absent for leaves
    int positive_child = -1;
    int negative_child = -1;
    Vector embedding;
    std::size_t interaction_count = 0;
    std::vector<ItemId> candidate_items;  // I_z, ascending
    double gini = 0.0;

    bool is_leaf() const { return !split_attribute.has_value(); }
    bool operator==(const TreeNode&) const = default;
};

class InteractionTree {
public:
    InteractionTree() = default;
    InteractionTree(std::vector<AttributeId> pool, std::size_t max_depth) : pool_(std::move(pool)), max_depth_(max_depth) {}

    const TreeNode& root() const { return nodes_.front(); }
    const TreeNode& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
    const std::vector<TreeNode>& nodes() const { return nodes_; }
    std::vector<TreeNode>& nodes() { return nodes_; }
    const std::vector<AttributeId>& attribute_pool() const { return pool_; }
    std::size_t max_depth() const { return max_depth_; }
    std::size_t leaf_count() const;
    int height() const;

    bool operator==(const InteractionTree&) const = default;

private:
    std::vector<TreeNode> nodes_;
    std::vector<AttributeId> pool_;
    std::size_t max_depth_ = 0;
};

/// Interaction records together with their sampled negative sets.
struct TrainingData {
    std::vector<InteractionRecord> records;
    std::vector<std::vector<ItemId>> negatives;  // aligned with records

    RecordRef ref(std::size_t k) const { return {records[k].item, negatives[k]}; }
    std::vector<RecordRef> refs(std::span<const std::size_t> subset) const;
    std::vector<std::size_t> all() const;
};

/// Draws D^neg for every record with per-record seeds derived from `seed`.
TrainingData make_training_data(std::vector<InteractionRecord> records, std::size_t num_items,
                                std::size_t negatives_per_positive, std::uint64_t seed);

struct Partition {
    std::vector<std::size_t> pos;
    std::vector<std::size_t> neg;
};

/// Record goes to `pos` iff its mention bit for `attribute` is set. Order is preserved.
Partition partition_by_attribute(std::span<const InteractionRecord> records, std::span<const std::size_t> subset,
                                 AttributeId attribute);

struct SplitCandidate {
    AttributeId attribute = 0;
    double objective = 0.0;
    Vector s_pos;
    Vector s_neg;
    std::size_t pos_size = 0;
    std::size_t neg_size = 0;
};

/// Partitions `subset` on `attribute` and fits both sides for epochs_search steps with the item table fixed.
SplitCandidate evaluate_split(const TrainingData& data, std::span<const std::size_t> subset, AttributeId attribute,
                              const ItemEmbeddingTable& table, const OptimizerConfig& config);

/// Argmin of the split objective over pool minus `used`, skipping splits with an empty side.
/// Ties go to the lowest attribute index. Absent when no attribute splits the records.
std::optional<SplitCandidate> select_split(const TrainingData& data, std::span<const std::size_t> subset,
                                           std::span<const AttributeId> pool, std::span<const AttributeId> used,
                                           const ItemEmbeddingTable& table, const OptimizerConfig& config,
                                           std::size_t threads = 1);

/// 1 - (|I_z| / |R_z|)^2. Throws std::invalid_argument for an empty node.
double gini_index(std::size_t distinct_items, std::size_t interactions);
double gini_index(std::span<const InteractionRecord> records, std::span<const std::size_t> subset);

/// I_z: distinct items of the records in `subset`, ascending.
std::vector<ItemId> node_candidates(std::span<const InteractionRecord> records, std::span<const std::size_t> subset);
inline const std::vector<ItemId>& node_candidates(const TreeNode& node) { return node.candidate_items; }

struct SplitLogEntry {
    int node = 0;
    int depth = 0;
    std::size_t interactions = 0;
    std::size_t items = 0;
    double gini = 0.0;
    std::optional<AttributeId> attribute;
    double objective = 0.0;
    std::string stop_reason;  // empty when split
};

/// Grows a tree over `data`. Stops at a node when depth = H_max, gini > gamma, the node holds fewer
/// than min_node records, or no attribute gives a non-degenerate split. Item rows of `table`
/// are updated by the root and commit fits unless the table is frozen.
InteractionTree build_tree(const TrainingData& data, std::vector<AttributeId> pool, ItemEmbeddingTable& table,
                           const TreeConfig& tree_config, const OptimizerConfig& opt_config,
                           std::vector<SplitLogEntry>* log = nullptr);
/// Variant for a fixed item table (used for concurrent builds).
InteractionTree build_tree(const TrainingData& data, std::vector<AttributeId> pool, const ItemEmbeddingTable& table,
                           const TreeConfig& tree_config, const OptimizerConfig& opt_config,
                           std::vector<SplitLogEntry>* log = nullptr);

/// Descends while the current node's split attribute has a recorded answer. Returns the node id.
int traverse_known(const InteractionTree& tree, const AnswerMap& answers);

}  // namespace factcrs
