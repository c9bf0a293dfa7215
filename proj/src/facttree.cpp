#include "factcrs/facttree.hpp"

#include <algorithm>
#include <deque>
#include <future>
#include <numeric>
#include <stdexcept>

#include "factcrs/random.hpp"

namespace factcrs {

std::size_t InteractionTree::leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const auto& n) { return n.is_leaf(); }));
}

int InteractionTree::height() const {
    int h = 0;
    for (const auto& n : nodes_) h = std::max(h, n.depth);
    return h;
}

std::vector<RecordRef> TrainingData::refs(std::span<const std::size_t> subset) const {
    std::vector<RecordRef> out;
    out.reserve(subset.size());
    for (std::size_t k : subset) out.push_back(ref(k));
    return out;
}

std::vector<std::size_t> TrainingData::all() const {
    std::vector<std::size_t> idx(records.size());
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

TrainingData make_training_data(std::vector<InteractionRecord> records, std::size_t num_items,
                                std::size_t negatives_per_positive, std::uint64_t seed) {
    TrainingData data;
    data.records = std::move(records);
    NegativeSampler sampler(num_items, data.records);
    data.negatives.reserve(data.records.size());
    for (std::size_t k = 0; k < data.records.size(); ++k) {
        const auto& r = data.records[k];
        data.negatives.push_back(sampler.sample(r.user, r.item, negatives_per_positive, mix_seed(seed, k)));
    }
    return data;
}

Partition partition_by_attribute(std::span<const InteractionRecord> records, std::span<const std::size_t> subset,
                                 AttributeId attribute) {
    Partition part;
    for (std::size_t k : subset) {
        if (records[k].mentions_attribute(attribute))
            part.pos.push_back(k);
        else
            part.neg.push_back(k);
    }
    return part;
}

SplitCandidate evaluate_split(const TrainingData& data, std::span<const std::size_t> subset, AttributeId attribute,
                              const ItemEmbeddingTable& table, const OptimizerConfig& config) {
    const Partition part = partition_by_attribute(data.records, subset, attribute);
    const auto pos = data.refs(part.pos);
    const auto neg = data.refs(part.neg);
    PartitionFit fit;
    if (config.search_trains_items && !table.frozen()) {
        ItemEmbeddingTable scratch = table;
        fit = fit_partition_embeddings(pos, neg, scratch, config, config.epochs_search);
    } else {
        fit = fit_partition_embeddings(pos, neg, table, config, config.epochs_search);
    }
    return {attribute, fit.objective, std::move(fit.s_pos), std::move(fit.s_neg), part.pos.size(), part.neg.size()};
}

std::optional<SplitCandidate> select_split(const TrainingData& data, std::span<const std::size_t> subset,
                                           std::span<const AttributeId> pool, std::span<const AttributeId> used,
                                           const ItemEmbeddingTable& table, const OptimizerConfig& config,
                                           std::size_t threads) {
    if (pool.empty()) throw std::invalid_argument("select_split: empty attribute pool");
    std::vector<AttributeId> candidates;
    for (AttributeId a : pool) {
        if (std::find(used.begin(), used.end(), a) != used.end()) continue;
        std::size_t pos = 0;
        for (std::size_t k : subset) pos += data.records[k].mentions_attribute(a) ? 1 : 0;
        if (pos == 0 || pos == subset.size()) continue;
        candidates.push_back(a);
    }
    std::sort(candidates.begin(), candidates.end());
    if (candidates.empty()) return std::nullopt;

    std::vector<SplitCandidate> results(candidates.size());
    if (threads <= 1 || candidates.size() == 1) {
        for (std::size_t c = 0; c < candidates.size(); ++c)
            results[c] = evaluate_split(data, subset, candidates[c], table, config);
    } else {
        std::vector<std::future<void>> jobs;
        const std::size_t workers = std::min(threads, candidates.size());
        for (std::size_t w = 0; w < workers; ++w) {
            jobs.push_back(std::async(std::launch::async, [&, w] {
                for (std::size_t c = w; c < candidates.size(); c += workers)
                    results[c] = evaluate_split(data, subset, candidates[c], table, config);
            }));
        }
        for (auto& j : jobs) j.get();
    }

    std::size_t best = 0;
    for (std::size_t c = 1; c < results.size(); ++c)
        if (results[c].objective < results[best].objective) best = c;
    return std::move(results[best]);
}

double gini_index(std::size_t distinct_items, std::size_t interactions) {
    if (interactions == 0) throw std::invalid_argument("gini_index of an empty node");
    const double ratio = static_cast<double>(distinct_items) / static_cast<double>(interactions);
    return 1.0 - ratio * ratio;
}

double gini_index(std::span<const InteractionRecord> records, std::span<const std::size_t> subset) {
    return gini_index(node_candidates(records, subset).size(), subset.size());
}

std::vector<ItemId> node_candidates(std::span<const InteractionRecord> records, std::span<const std::size_t> subset) {
    std::vector<ItemId> items;
    items.reserve(subset.size());
    for (std::size_t k : subset) items.push_back(records[k].item);
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    return items;
}

namespace {

struct Pending {
    int node;
    std::vector<std::size_t> records;
    std::vector<AttributeId> used;
};

template <class Table>
InteractionTree grow(const TrainingData& data, std::vector<AttributeId> pool, Table& table, const TreeConfig& tc,
                     const OptimizerConfig& oc, std::vector<SplitLogEntry>* log) {
    if (data.records.empty()) throw std::invalid_argument("build_tree: no interaction records");
    std::sort(pool.begin(), pool.end());
    InteractionTree tree(pool, tc.max_depth);
    auto& nodes = tree.nodes();

    auto make_node = [&](int depth, const std::vector<std::size_t>& recs, Vector embedding) {
        TreeNode n;
        n.id = static_cast<int>(nodes.size());
        n.depth = depth;
        n.embedding = std::move(embedding);
        n.interaction_count = recs.size();
        n.candidate_items = node_candidates(data.records, recs);
        n.gini = gini_index(n.candidate_items.size(), recs.size());
        nodes.push_back(std::move(n));
        return nodes.back().id;
    };

    std::vector<std::size_t> all = data.all();
    const auto root_refs = data.refs(all);
    make_node(0, all, {});

    std::deque<Pending> queue;
    queue.push_back({0, std::move(all), {}});
    while (!queue.empty()) {
        Pending cur = std::move(queue.front());
        queue.pop_front();
        const TreeNode& node = nodes[static_cast<std::size_t>(cur.node)];
        SplitLogEntry entry{node.id, node.depth, node.interaction_count, node.candidate_items.size(), node.gini, {}, 0.0, {}};

        std::optional<SplitCandidate> split;
        if (static_cast<std::size_t>(node.depth) >= tc.max_depth)
            entry.stop_reason = "max_depth";
        else if (node.gini > tc.gini_threshold)
            entry.stop_reason = "gini";
        else if (cur.records.size() < tc.min_node)
            entry.stop_reason = "min_node";
        else {
            split = select_split(data, cur.records, pool, cur.used, std::as_const(table), oc, tc.threads);
            if (!split) entry.stop_reason = "no_split";
        }
        if (!split) {
            if (log) log->push_back(std::move(entry));
            continue;
        }

        Partition part = partition_by_attribute(data.records, cur.records, split->attribute);
        const auto pos = data.refs(part.pos);
        const auto neg = data.refs(part.neg);
        auto committed = fit_partition_embeddings(pos, neg, table, oc, oc.epochs_commit);

        const int depth = node.depth + 1;
        const int id = cur.node;
        const int yes = make_node(depth, part.pos, std::move(committed.s_pos));
        const int no = make_node(depth, part.neg, std::move(committed.s_neg));
        auto& parent = nodes[static_cast<std::size_t>(id)];
        parent.split_attribute = split->attribute;
        parent.positive_child = yes;
        parent.negative_child = no;

        entry.attribute = split->attribute;
        entry.objective = split->objective;
        if (log) log->push_back(std::move(entry));

        auto used = cur.used;
        used.push_back(split->attribute);
        queue.push_back({yes, std::move(part.pos), used});
        queue.push_back({no, std::move(part.neg), std::move(used)});
    }

    // The root has no partner partition; its embedding is fitted last, against the finished item table.
    auto root_fit = fit_partition_embeddings(root_refs, std::span<const RecordRef>{}, std::as_const(table), oc, oc.epochs_commit);
    nodes.front().embedding = std::move(root_fit.s_pos);
    return tree;
}

}  // namespace

InteractionTree build_tree(const TrainingData& data, std::vector<AttributeId> pool, ItemEmbeddingTable& table,
                           const TreeConfig& tree_config, const OptimizerConfig& opt_config,
                           std::vector<SplitLogEntry>* log) {
    return grow(data, std::move(pool), table, tree_config, opt_config, log);
}

InteractionTree build_tree(const TrainingData& data, std::vector<AttributeId> pool, const ItemEmbeddingTable& table,
                           const TreeConfig& tree_config, const OptimizerConfig& opt_config,
                           std::vector<SplitLogEntry>* log) {
    return grow(data, std::move(pool), table, tree_config, opt_config, log);
}

int traverse_known(const InteractionTree& tree, const AnswerMap& answers) {
    int id = 0;
    while (true) {
        const TreeNode& n = tree.node(id);
        if (n.is_leaf()) return id;
        auto it = answers.find(*n.split_attribute);
        if (it == answers.end()) return id;
        id = it->second ? n.positive_child : n.negative_child;
    }
}

}  // namespace factcrs
