#pragma once

// Ensemble of interaction trees over one shared item embedding table, with
// binary persistence.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "factcrs/corpus.hpp"
#include "factcrs/embeddings.hpp"
#include "factcrs/facttree.hpp"

namespace factcrs {

struct ForestConfig {
    std::size_t num_trees = 10;  // N
    std::size_t f_max = 0;       // attributes per tree; 0 means ceil(0.8 p)
    std::uint64_t seed = 1;
    std::size_t dim = 40;        // d
    OptimizerConfig optimizer;
    TreeConfig tree;
    std::size_t top_k = 10;      // K
    std::size_t max_turns = 10;  // T
    std::size_t eta = 10;        // early recommendation threshold
    double alpha_p = 1e-3;
    double alpha_n = 1e-2;
    bool joint_refinement = false;  // keep V trainable for every tree (sequential build)
    bool exclude_rejected = true;

    /// f_max resolved against an attribute count.
    std::size_t resolved_f_max(std::size_t p) const;
    /// Throws std::invalid_argument on a violated invariant.
    void validate(std::size_t p) const;

    bool operator==(const ForestConfig&) const = default;
};

struct InteractionForest {
    std::vector<InteractionTree> trees;
    ItemEmbeddingTable items;
    AttributeVocabulary vocabulary;
    ForestConfig config;

    std::size_t num_items() const { return items.size(); }
    std::size_t dim() const { return items.dim(); }

    bool operator==(const InteractionForest&) const = default;
};

struct ForestBuildLog {
    std::vector<std::vector<AttributeId>> pools;
    std::vector<std::vector<SplitLogEntry>> splits;  // per tree
};

/// Uniform f_max-subset of 0..p-1 for tree `tree_index`, ascending.
std::vector<AttributeId> draw_attribute_pool(std::size_t p, std::size_t f_max, std::uint64_t seed, std::size_t tree_index);

/// Tree 0 trains the item table; the table is then frozen and the remaining trees are built
/// against it (concurrently when config.tree.threads > 1). With joint_refinement every tree trains it.
InteractionForest build_forest(const std::vector<InteractionRecord>& train_records, std::size_t num_items,
                               const AttributeVocabulary& vocabulary, const ForestConfig& config,
                               ForestBuildLog* log = nullptr);

class ModelFileError : public std::runtime_error {
public:
    enum class Kind { io, version_mismatch, truncated, checksum, malformed };
    ModelFileError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

std::vector<std::uint8_t> serialize_model(const InteractionForest& forest);
InteractionForest deserialize_model(const std::vector<std::uint8_t>& bytes);
void save_model(const InteractionForest& forest, const std::filesystem::path& path);
InteractionForest load_model(const std::filesystem::path& path);

}  // namespace factcrs
