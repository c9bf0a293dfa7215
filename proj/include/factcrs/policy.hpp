#pragma once

// Multi-turn conversation engine over an interaction forest: asks the split
// attribute of the current node, recommends at leaves or once the candidate
// set is small, and on rejection moves to the closest unvisited tree while
// shifting the session embedding away from the rejected items.

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <variant>
#include <vector>

#include "factcrs/forest.hpp"
#include "factcrs/random.hpp"

namespace factcrs {

/// Thrown for a message that the session's current state does not accept. State is left unchanged.
class ProtocolError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

struct PolicyConfig {
    std::size_t top_k = 10;
    std::size_t max_turns = 10;
    std::size_t eta = 10;
    double alpha_p = 1e-3;
    double alpha_n = 1e-2;
    bool use_candidates = true;
    bool use_early_rec = true;
    bool use_online_feedback = true;
    bool exclude_rejected = true;

    static PolicyConfig from(const ForestConfig& config);
};

enum class SessionStatus { active, succeeded, failed };
/// Where a recommendation was made: an internal node (early), a leaf, or after every tree was visited.
enum class RecommendOrigin { internal, leaf, exhausted };

const char* to_string(SessionStatus s);
const char* to_string(RecommendOrigin o);

struct ScoredItem {
    ItemId item = 0;
    double score = 0.0;
    bool operator==(const ScoredItem&) const = default;
};

struct Ask {
    AttributeId attribute = 0;
    bool operator==(const Ask&) const = default;
};

struct Recommend {
    std::vector<ScoredItem> items;
    RecommendOrigin origin = RecommendOrigin::leaf;
    bool operator==(const Recommend&) const = default;
};

using AgentAction = std::variant<Ask, Recommend>;

enum class Feedback { yes, no, accept, reject };
const char* to_string(Feedback f);

struct TurnRecord {
    std::size_t turn = 0;
    AgentAction action;
    Feedback feedback = Feedback::no;
    std::size_t tree = 0;
    int node = 0;
    bool operator==(const TurnRecord&) const = default;
};

// --- formulas ----------------------------------------------------------------

/// s . v_item
double score_item(std::span<const double> s, const ItemEmbeddingTable& table, ItemId item);
/// Element-wise mean of `embeddings` plus `offset`.
Vector mean_plus_offset(const std::vector<Vector>& embeddings, std::span<const double> offset);
/// Offset increment (alpha_p/|promoted|) sum v_promoted - (alpha_n/|rejected|) sum v_rejected; empty sets contribute 0.
Vector feedback_increment(const ItemEmbeddingTable& table, std::span<const ItemId> promoted,
                          std::span<const ItemId> rejected, double alpha_p, double alpha_n);
/// Items of `pool` ordered by descending score, ascending id on ties; at most `k`.
std::vector<ScoredItem> top_k_by_score(std::span<const double> s, const ItemEmbeddingTable& table,
                                       std::span<const ItemId> pool, std::size_t k);

// --- session -----------------------------------------------------------------

class Session {
public:
    /// Starting tree is drawn uniformly under `seed`. `forest` must outlive the session.
    Session(const InteractionForest& forest, PolicyConfig config, std::uint64_t seed);

    /// Decides (once per turn) and returns the pending action.
    const AgentAction& next_action();
    /// As next_action, but returns nullptr once the session has ended (including when the
    /// catalog runs out of recommendable items, which fails the session).
    const AgentAction* try_next_action();
    void answer(bool yes);
    /// `item`, when given, must be in the pending list.
    void accept(std::optional<ItemId> item = std::nullopt);
    void reject();

    /// mean(collected node embeddings + current node embedding) + feedback offset.
    Vector fused_embedding() const;
    /// Closest unvisited tree to the session embedding by partial traversal over known answers.
    std::size_t select_next_tree() const;

    SessionStatus status() const { return status_; }
    bool active() const { return status_ == SessionStatus::active; }
    std::size_t turn() const { return turn_; }
    /// Turns charged to the session: acceptance turn on success, T on failure.
    std::size_t turns_used() const;
    std::size_t current_tree() const { return tree_; }
    int current_node() const { return node_; }
    bool exhausted() const { return exhausted_; }
    const AnswerMap& answers() const { return answers_; }
    const std::set<std::size_t>& visited_trees() const { return visited_; }
    const std::vector<Vector>& collected_embeddings() const { return collected_; }
    const Vector& feedback_offset() const { return offset_; }
    const std::vector<ItemId>& excluded_items() const { return excluded_order_; }
    const std::optional<AgentAction>& pending() const { return pending_; }
    const std::vector<TurnRecord>& history() const { return history_; }
    const PolicyConfig& config() const { return config_; }
    const InteractionForest& forest() const { return *forest_; }

private:
    void descend_known();
    std::vector<ItemId> available_candidates() const;
    Recommend assemble_recommendation() const;
    void advance_turn();
    void record(Feedback f);

    const InteractionForest* forest_;
    PolicyConfig config_;
    Rng rng_;

    std::size_t tree_ = 0;
    int node_ = 0;
    bool exhausted_ = false;
    AnswerMap answers_;
    std::set<std::size_t> visited_;
    std::vector<Vector> collected_;
    Vector offset_;
    std::vector<ItemId> excluded_order_;
    std::vector<bool> excluded_;
    std::size_t turn_ = 1;
    std::size_t accepted_turn_ = 0;
    SessionStatus status_ = SessionStatus::active;
    std::optional<AgentAction> pending_;
    std::vector<TurnRecord> history_;
};

}  // namespace factcrs
