#pragma once

// Interaction corpus: attribute vocabulary, user-item interaction records with
// attribute-mention vectors, TSV ingestion, a planted-tree synthetic generator
// and user-level splitting.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace factcrs {

using UserId = std::int32_t;
using ItemId = std::int32_t;
using AttributeId = std::int32_t;

class CorpusError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class AttributeVocabulary {
public:
    AttributeVocabulary() = default;
    /// Throws CorpusError on duplicate labels.
    explicit AttributeVocabulary(std::vector<std::string> names);

    std::size_t size() const { return names_.size(); }
    const std::string& label(AttributeId a) const { return names_.at(static_cast<std::size_t>(a)); }
    const std::vector<std::string>& names() const { return names_; }
    std::optional<AttributeId> find(const std::string& label) const;

    bool operator==(const AttributeVocabulary&) const = default;

private:
    std::vector<std::string> names_;
};

struct InteractionRecord {
    UserId user = 0;
    ItemId item = 0;
    std::vector<bool> mentions;  // length p

    bool mentions_attribute(AttributeId a) const { return mentions[static_cast<std::size_t>(a)]; }
    std::size_t mention_count() const;
    std::vector<AttributeId> mentioned() const;

    bool operator==(const InteractionRecord&) const = default;
};

struct ValidationReport {
    std::size_t empty_mentions = 0;
    std::size_t mentions_outside_item = 0;  // records with a mention not in F_i
    std::vector<std::string> warnings;

    bool operator==(const ValidationReport&) const = default;
};

struct Dataset {
    std::size_t num_users = 0;
    std::size_t num_items = 0;
    AttributeVocabulary attributes;
    std::vector<InteractionRecord> interactions;
    std::vector<std::vector<AttributeId>> item_attributes;  // F_i, sorted ascending
    ValidationReport validation;

    std::size_t p() const { return attributes.size(); }
    std::size_t q() const { return interactions.size(); }
    bool item_has_attribute(ItemId item, AttributeId a) const;

    bool operator==(const Dataset&) const = default;
};

/// Recomputes `dataset.validation` (empty mention vectors, mentions outside F_i).
void validate(Dataset& dataset);

/// Reads attributes.tsv, items.tsv and interactions.tsv from `dir`.
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

// --- synthetic corpora -------------------------------------------------------

struct SyntheticSpec {
    std::size_t users = 50;
    std::size_t items = 40;
    std::size_t attributes = 8;
    std::size_t interactions = 600;
    std::size_t depth = 3;
    double noise = 0.0;           // probability of dropping each F_i attribute from a mention set
    double extra_attribute_rate = 0.3;  // chance an off-path attribute joins F_i
    double home_affinity = 0.8;   // share of a user's interactions drawn from their home subtree
    std::uint64_t seed = 1;
};

/// Hidden attribute tree that assigned item attribute sets. Node 0 is the root.
struct PlantedTree {
    struct Node {
        std::optional<AttributeId> attribute;  // absent for leaves
        int yes_child = -1;
        int no_child = -1;
        std::vector<ItemId> items;  // leaves only
    };
    std::vector<Node> nodes;

    AttributeId root_attribute() const { return *nodes.front().attribute; }
};

struct SyntheticCorpus {
    Dataset dataset;
    PlantedTree planted;
};

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

// --- splitting ---------------------------------------------------------------

struct DataSplit {
    std::vector<UserId> train_users;
    std::vector<UserId> validation_users;
    std::vector<UserId> test_users;
    std::uint64_t seed = 0;

    bool operator==(const DataSplit&) const = default;
};

/// 8:1:1 user partition; sizes floor(0.8m) / floor(0.1m) / remainder.
DataSplit split_by_user(const Dataset& dataset, std::uint64_t seed);

/// Records whose user is in `users`, in corpus order.
std::vector<InteractionRecord> records_of_users(const Dataset& dataset, const std::vector<UserId>& users);

}  // namespace factcrs
