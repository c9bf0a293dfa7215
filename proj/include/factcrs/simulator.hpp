#pragma once

// Rule-based user simulator: answers attribute questions from the target
// item's attributes intersected with the user's preferred attributes, and
// accepts a recommendation iff it contains the target item.

#include <cstdint>
#include <string>
#include <vector>

#include "factcrs/corpus.hpp"
#include "factcrs/policy.hpp"

namespace factcrs {

enum class SimulatorMode { recorded, sampled };

struct EpisodeConfig {
    std::size_t max_turns = 10;  // T
    std::size_t top_k = 10;      // K
    std::uint64_t seed = 1;
    double rho = 0.5;            // sampled mode: P(attribute in F_u)
    SimulatorMode mode = SimulatorMode::recorded;
};

struct SimulatedUser {
    UserId user = 0;
    ItemId target = 0;
    std::vector<AttributeId> item_attributes;  // F_i
    std::vector<AttributeId> preferred;        // F_u
    std::vector<AttributeId> yes_set;          // F_i ∩ F_u, ascending

    std::size_t interaction_length() const { return yes_set.size(); }
};

/// Recorded mode takes F_u from the held-out record's mentions; sampled mode draws each attribute
/// into F_u with probability rho under `seed`. Appends a warning for an empty recorded mention set.
SimulatedUser make_simulated_user(const Dataset& dataset, const InteractionRecord& held_out, const EpisodeConfig& config,
                                  std::uint64_t seed, std::vector<std::string>* warnings = nullptr);

bool oracle_answer(const SimulatedUser& user, AttributeId attribute);
Feedback oracle_feedback(const SimulatedUser& user, const std::vector<ScoredItem>& recommended);

struct EpisodeTrace {
    UserId user = 0;
    ItemId target = 0;
    std::size_t start_tree = 0;
    std::vector<TurnRecord> turns;
    SessionStatus outcome = SessionStatus::failed;
    std::size_t turns_used = 0;          // T when failed
    std::size_t identified = 0;          // p_k: questions answered yes
    std::size_t interaction_length = 0;  // p_n
    std::size_t trees_used = 0;
    double max_offset_norm = 0.0;        // largest |feedback offset| seen during the episode

    bool succeeded() const { return outcome == SessionStatus::succeeded; }
};

/// Drives a Session with oracle answers and feedback until it ends.
EpisodeTrace run_episode(const InteractionForest& forest, const SimulatedUser& user, const PolicyConfig& config,
                         std::uint64_t seed);

/// One JSON object per trace (no trailing newline).
std::string trace_to_json_line(const EpisodeTrace& trace);

}  // namespace factcrs
