#include "factcrs/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "factcrs/random.hpp"

namespace factcrs {

SimulatedUser make_simulated_user(const Dataset& dataset, const InteractionRecord& held_out, const EpisodeConfig& config,
                                  std::uint64_t seed, std::vector<std::string>* warnings) {
    SimulatedUser user;
    user.user = held_out.user;
    user.target = held_out.item;
    user.item_attributes = dataset.item_attributes.at(static_cast<std::size_t>(held_out.item));

    if (config.mode == SimulatorMode::recorded) {
        user.preferred = held_out.mentioned();
        if (user.preferred.empty() && warnings)
            warnings->push_back("interaction (" + std::to_string(held_out.user) + ", " + std::to_string(held_out.item) +
                                ") has no mentioned attributes");
    } else {
        Rng rng(seed);
        std::bernoulli_distribution include(config.rho);
        for (std::size_t a = 0; a < dataset.p(); ++a)
            if (include(rng)) user.preferred.push_back(static_cast<AttributeId>(a));
    }
    std::set_intersection(user.item_attributes.begin(), user.item_attributes.end(), user.preferred.begin(),
                          user.preferred.end(), std::back_inserter(user.yes_set));
    return user;
}

bool oracle_answer(const SimulatedUser& user, AttributeId attribute) {
    return std::binary_search(user.yes_set.begin(), user.yes_set.end(), attribute);
}

Feedback oracle_feedback(const SimulatedUser& user, const std::vector<ScoredItem>& recommended) {
    const bool hit = std::any_of(recommended.begin(), recommended.end(),
                                 [&](const ScoredItem& s) { return s.item == user.target; });
    return hit ? Feedback::accept : Feedback::reject;
}

EpisodeTrace run_episode(const InteractionForest& forest, const SimulatedUser& user, const PolicyConfig& config,
                         std::uint64_t seed) {
    Session session(forest, config, seed);
    EpisodeTrace trace;
    trace.user = user.user;
    trace.target = user.target;
    trace.start_tree = session.current_tree();
    trace.interaction_length = user.interaction_length();

    while (const AgentAction* action = session.try_next_action()) {
        if (const auto* ask = std::get_if<Ask>(action)) {
            const bool yes = oracle_answer(user, ask->attribute);
            if (yes) ++trace.identified;
            session.answer(yes);
        } else {
            const auto& rec = std::get<Recommend>(*action);
            if (oracle_feedback(user, rec.items) == Feedback::accept)
                session.accept(user.target);
            else
                session.reject();
        }
        const auto& off = session.feedback_offset();
        trace.max_offset_norm = std::max(trace.max_offset_norm, std::sqrt(dot(off, off)));
    }

    trace.turns = session.history();
    trace.outcome = session.status();
    trace.turns_used = session.turns_used();
    std::set<std::size_t> trees;
    for (const auto& t : trace.turns) trees.insert(t.tree);
    trace.trees_used = trees.size();
    return trace;
}

std::string trace_to_json_line(const EpisodeTrace& trace) {
    nlohmann::json j;
    j["user"] = trace.user;
    j["target"] = trace.target;
    j["start_tree"] = trace.start_tree;
    j["outcome"] = to_string(trace.outcome);
    j["turns_used"] = trace.turns_used;
    j["identified"] = trace.identified;
    j["interaction_length"] = trace.interaction_length;
    j["trees_used"] = trace.trees_used;
    j["max_offset_norm"] = trace.max_offset_norm;
    auto turns = nlohmann::json::array();
    for (const auto& t : trace.turns) {
        nlohmann::json tj;
        tj["turn"] = t.turn;
        tj["tree"] = t.tree;
        tj["node"] = t.node;
        tj["feedback"] = to_string(t.feedback);
        if (const auto* ask = std::get_if<Ask>(&t.action)) {
            tj["type"] = "question";
            tj["attribute_id"] = ask->attribute;
        } else {
            const auto& rec = std::get<Recommend>(t.action);
            tj["type"] = "recommendation";
            tj["origin"] = to_string(rec.origin);
            auto items = nlohmann::json::array();
            for (const auto& s : rec.items) items.push_back(s.item);
            tj["items"] = std::move(items);
        }
        turns.push_back(std::move(tj));
    }
    j["turns"] = std::move(turns);
    return j.dump();
}

}  // namespace factcrs
