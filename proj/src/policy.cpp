#include "factcrs/policy.hpp"

#include <algorithm>

namespace factcrs {

PolicyConfig PolicyConfig::from(const ForestConfig& c) {
    PolicyConfig p;
    p.top_k = c.top_k;
    p.max_turns = c.max_turns;
    p.eta = c.eta;
    p.alpha_p = c.alpha_p;
    p.alpha_n = c.alpha_n;
    p.exclude_rejected = c.exclude_rejected;
    return p;
}

const char* to_string(SessionStatus s) {
    switch (s) {
        case SessionStatus::active: return "active";
        case SessionStatus::succeeded: return "succeeded";
        case SessionStatus::failed: return "failed";
    }
    return "?";
}

const char* to_string(RecommendOrigin o) {
    switch (o) {
        case RecommendOrigin::internal: return "internal";
        case RecommendOrigin::leaf: return "leaf";
        case RecommendOrigin::exhausted: return "exhausted";
    }
    return "?";
}

const char* to_string(Feedback f) {
    switch (f) {
        case Feedback::yes: return "yes";
        case Feedback::no: return "no";
        case Feedback::accept: return "accept";
        case Feedback::reject: return "reject";
    }
    return "?";
}

double score_item(std::span<const double> s, const ItemEmbeddingTable& table, ItemId item) {
    return dot(s, table.row(item));
}

Vector mean_plus_offset(const std::vector<Vector>& embeddings, std::span<const double> offset) {
    Vector out(offset.begin(), offset.end());
    if (embeddings.empty()) return out;
    const double w = 1.0 / static_cast<double>(embeddings.size());
    Vector mean(out.size(), 0.0);
    for (const auto& e : embeddings)
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += e[k];
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += w * mean[k];
    return out;
}

Vector feedback_increment(const ItemEmbeddingTable& table, std::span<const ItemId> promoted,
                          std::span<const ItemId> rejected, double alpha_p, double alpha_n) {
    Vector inc(table.dim(), 0.0);
    if (!promoted.empty()) {
        const double w = alpha_p / static_cast<double>(promoted.size());
        for (ItemId i : promoted) {
            auto v = table.row(i);
            for (std::size_t k = 0; k < inc.size(); ++k) inc[k] += w * v[k];
        }
    }
    if (!rejected.empty()) {
        const double w = alpha_n / static_cast<double>(rejected.size());
        for (ItemId i : rejected) {
            auto v = table.row(i);
            for (std::size_t k = 0; k < inc.size(); ++k) inc[k] -= w * v[k];
        }
    }
    return inc;
}

std::vector<ScoredItem> top_k_by_score(std::span<const double> s, const ItemEmbeddingTable& table,
                                       std::span<const ItemId> pool, std::size_t k) {
    std::vector<ScoredItem> scored;
    scored.reserve(pool.size());
    for (ItemId i : pool) scored.push_back({i, score_item(s, table, i)});
    auto better = [](const ScoredItem& a, const ScoredItem& b) {
        return a.score != b.score ? a.score > b.score : a.item < b.item;
    };
    k = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), better);
    scored.resize(k);
    return scored;
}

// --- Session -----------------------------------------------------------------

Session::Session(const InteractionForest& forest, PolicyConfig config, std::uint64_t seed)
    : forest_(&forest), config_(config), rng_(seed) {
    if (forest.trees.empty()) throw std::invalid_argument("session over an empty forest");
    std::uniform_int_distribution<std::size_t> pick(0, forest.trees.size() - 1);
    tree_ = pick(rng_);
    node_ = 0;
    offset_.assign(forest.dim(), 0.0);
    excluded_.assign(forest.num_items(), false);
}

std::size_t Session::turns_used() const {
    if (status_ == SessionStatus::succeeded) return accepted_turn_;
    if (status_ == SessionStatus::failed) return config_.max_turns;
    return turn_ - 1;
}

void Session::descend_known() {
    if (exhausted_) return;
    const auto& tree = forest_->trees[tree_];
    while (true) {
        const TreeNode& n = tree.node(node_);
        if (n.is_leaf()) return;
        auto it = answers_.find(*n.split_attribute);
        if (it == answers_.end()) return;
        node_ = it->second ? n.positive_child : n.negative_child;
    }
}

std::vector<ItemId> Session::available_candidates() const {
    std::vector<ItemId> avail;
    if (exhausted_) return avail;
    for (ItemId i : forest_->trees[tree_].node(node_).candidate_items)
        if (!excluded_[static_cast<std::size_t>(i)]) avail.push_back(i);
    return avail;
}

Vector Session::fused_embedding() const {
    std::vector<Vector> embeddings = collected_;
    if (!exhausted_) embeddings.push_back(forest_->trees[tree_].node(node_).embedding);
    return mean_plus_offset(embeddings, offset_);
}

Recommend Session::assemble_recommendation() const {
    const Vector s = fused_embedding();
    const auto& table = forest_->items;
    const std::size_t k = config_.top_k;

    Recommend rec;
    const TreeNode* node = exhausted_ ? nullptr : &forest_->trees[tree_].node(node_);
    rec.origin = exhausted_ ? RecommendOrigin::exhausted : node->is_leaf() ? RecommendOrigin::leaf : RecommendOrigin::internal;

    std::vector<ItemId> avail = config_.use_candidates ? available_candidates() : std::vector<ItemId>{};
    rec.items = top_k_by_score(s, table, avail, k);
    if (rec.items.size() < k) {
        // Fill from the rest of the catalog, highest scores first.
        std::vector<bool> taken = excluded_;
        for (ItemId i : avail) taken[static_cast<std::size_t>(i)] = true;
        std::vector<ItemId> rest;
        for (std::size_t i = 0; i < taken.size(); ++i)
            if (!taken[i]) rest.push_back(static_cast<ItemId>(i));
        auto fill = top_k_by_score(s, table, rest, k - rec.items.size());
        rec.items.insert(rec.items.end(), fill.begin(), fill.end());
    }
    return rec;
}

const AgentAction& Session::next_action() {
    if (!active()) throw ProtocolError(std::string("session is ") + to_string(status_));
    if (pending_) return *pending_;
    descend_known();
    if (exhausted_) {
        pending_ = assemble_recommendation();
    } else {
        const TreeNode& n = forest_->trees[tree_].node(node_);
        const bool early = config_.use_early_rec && available_candidates().size() <= config_.eta;
        if (n.is_leaf() || early)
            pending_ = assemble_recommendation();
        else
            pending_ = Ask{*n.split_attribute};
    }
    if (auto* rec = std::get_if<Recommend>(&*pending_); rec && rec->items.empty()) {
        // Nothing left to recommend.
        pending_.reset();
        status_ = SessionStatus::failed;
        throw ProtocolError("no recommendable items remain; session failed");
    }
    return *pending_;
}

const AgentAction* Session::try_next_action() {
    if (!active()) return nullptr;
    try {
        return &next_action();
    } catch (const ProtocolError&) {
        if (!active()) return nullptr;
        throw;
    }
}

void Session::record(Feedback f) {
    history_.push_back({turn_, *pending_, f, tree_, node_});
}

void Session::advance_turn() {
    pending_.reset();
    ++turn_;
    if (turn_ > config_.max_turns) status_ = SessionStatus::failed;
}

void Session::answer(bool yes) {
    if (!active()) throw ProtocolError(std::string("session is ") + to_string(status_));
    if (!pending_ || !std::holds_alternative<Ask>(*pending_)) throw ProtocolError("no question is pending");
    const AttributeId attr = std::get<Ask>(*pending_).attribute;
    record(yes ? Feedback::yes : Feedback::no);
    answers_.emplace(attr, yes);
    const TreeNode& n = forest_->trees[tree_].node(node_);
    node_ = yes ? n.positive_child : n.negative_child;
    advance_turn();
}

void Session::accept(std::optional<ItemId> item) {
    if (!active()) throw ProtocolError(std::string("session is ") + to_string(status_));
    if (!pending_ || !std::holds_alternative<Recommend>(*pending_)) throw ProtocolError("no recommendation is pending");
    if (item) {
        const auto& items = std::get<Recommend>(*pending_).items;
        if (std::none_of(items.begin(), items.end(), [&](const ScoredItem& s) { return s.item == *item; }))
            throw ProtocolError("accepted item " + std::to_string(*item) + " was not recommended");
    }
    record(Feedback::accept);
    pending_.reset();
    accepted_turn_ = turn_;
    status_ = SessionStatus::succeeded;
}

std::size_t Session::select_next_tree() const {
    const Vector s = mean_plus_offset(collected_, offset_);
    std::optional<std::size_t> best;
    double best_score = 0.0;
    for (std::size_t j = 0; j < forest_->trees.size(); ++j) {
        if (visited_.count(j) || (j == tree_ && !exhausted_)) continue;
        const auto& tree = forest_->trees[j];
        const double w = dot(tree.node(traverse_known(tree, answers_)).embedding, s);
        if (!best || w > best_score) {
            best = j;
            best_score = w;
        }
    }
    if (!best) throw ProtocolError("every tree has been visited");
    return *best;
}

void Session::reject() {
    if (!active()) throw ProtocolError(std::string("session is ") + to_string(status_));
    if (!pending_ || !std::holds_alternative<Recommend>(*pending_)) throw ProtocolError("no recommendation is pending");
    record(Feedback::reject);
    const auto& rec = std::get<Recommend>(*pending_);
    std::vector<ItemId> rejected;
    for (const auto& s : rec.items) rejected.push_back(s.item);

    if (config_.use_online_feedback) {
        const Vector s_t = fused_embedding();
        std::vector<bool> skip = excluded_;
        for (ItemId i : rejected) skip[static_cast<std::size_t>(i)] = true;
        std::vector<ItemId> rest;
        for (std::size_t i = 0; i < skip.size(); ++i)
            if (!skip[i]) rest.push_back(static_cast<ItemId>(i));
        std::vector<ItemId> promoted;
        for (const auto& s : top_k_by_score(s_t, forest_->items, rest, config_.top_k)) promoted.push_back(s.item);
        const Vector inc = feedback_increment(forest_->items, promoted, rejected, config_.alpha_p, config_.alpha_n);
        for (std::size_t k = 0; k < offset_.size(); ++k) offset_[k] += inc[k];
    }

    if (config_.exclude_rejected) {
        for (ItemId i : rejected) {
            if (!excluded_[static_cast<std::size_t>(i)]) {
                excluded_[static_cast<std::size_t>(i)] = true;
                excluded_order_.push_back(i);
            }
        }
    }

    if (!exhausted_) {
        collected_.push_back(forest_->trees[tree_].node(node_).embedding);
        visited_.insert(tree_);
        if (visited_.size() == forest_->trees.size()) {
            exhausted_ = true;
        } else {
            if (config_.use_online_feedback) {
                tree_ = select_next_tree();
            } else {
                std::vector<std::size_t> unvisited;
                for (std::size_t j = 0; j < forest_->trees.size(); ++j)
                    if (!visited_.count(j)) unvisited.push_back(j);
                std::uniform_int_distribution<std::size_t> pick(0, unvisited.size() - 1);
                tree_ = unvisited[pick(rng_)];
            }
            node_ = traverse_known(forest_->trees[tree_], answers_);
        }
    }
    advance_turn();
}

}  // namespace factcrs
