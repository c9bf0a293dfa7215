#include <doctest.h>

#include <json.hpp>

#include "support.hpp"
#include "factcrs/simulator.hpp"

using namespace factcrs;
using testing::record;

namespace {

Dataset small_dataset() {
    Dataset ds;
    ds.num_users = 2;
    ds.num_items = 3;
    ds.attributes = AttributeVocabulary({"a0", "a1", "a2", "a3", "a4"});
    ds.item_attributes = {{0, 1, 3}, {2}, {}};
    ds.interactions = {record(0, 0, {false, true, false, true, false}), record(1, 2, {false, false, false, false, false})};
    return ds;
}

const InteractionForest& trained_forest() {
    static const InteractionForest forest = [] {
        const auto corpus = generate_synthetic(testing::planted_spec());
        auto c = testing::planted_forest_config();
        c.optimizer.epochs_commit = 40;
        c.optimizer.epochs_search = 10;
        const auto split = split_by_user(corpus.dataset, 1);
        return build_forest(records_of_users(corpus.dataset, split.train_users), corpus.dataset.num_items,
                            corpus.dataset.attributes, c);
    }();
    return forest;
}

}  // namespace

TEST_CASE("recorded mode: yes-set is the mention set") {
    const auto ds = small_dataset();
    EpisodeConfig c;
    const auto u = make_simulated_user(ds, ds.interactions[0], c, 1);
    CHECK(u.yes_set == std::vector<AttributeId>{1, 3});
    CHECK(u.interaction_length() == 2);
    CHECK(u.target == 0);
    for (AttributeId f = 0; f < 5; ++f) CHECK(oracle_answer(u, f) == (f == 1 || f == 3));
    // f = 0 is in F_i but not preferred.
    CHECK_FALSE(oracle_answer(u, 0));

    std::vector<std::string> warnings;
    const auto empty = make_simulated_user(ds, ds.interactions[1], c, 1, &warnings);
    CHECK(empty.yes_set.empty());
    CHECK(warnings.size() == 1);
}

TEST_CASE("sampled mode limits") {
    const auto ds = small_dataset();
    EpisodeConfig c;
    c.mode = SimulatorMode::sampled;
    c.rho = 1.0;
    auto all = make_simulated_user(ds, ds.interactions[0], c, 4);
    CHECK(all.preferred.size() == 5);
    CHECK(all.yes_set == std::vector<AttributeId>{0, 1, 3});
    c.rho = 0.0;
    auto none = make_simulated_user(ds, ds.interactions[0], c, 4);
    for (AttributeId f = 0; f < 5; ++f) CHECK_FALSE(oracle_answer(none, f));
    c.rho = 0.5;
    CHECK(make_simulated_user(ds, ds.interactions[0], c, 9).preferred == make_simulated_user(ds, ds.interactions[0], c, 9).preferred);
}

TEST_CASE("oracle_feedback is containment") {
    SimulatedUser u;
    u.target = 7;
    std::vector<ScoredItem> list;
    for (ItemId i = 0; i < 7; ++i) list.push_back({i, 0.0});
    CHECK(oracle_feedback(u, list) == Feedback::reject);
    list.push_back({7, -5.0});
    CHECK(oracle_feedback(u, list) == Feedback::accept);
    CHECK(oracle_feedback(u, {{7, 0.0}}) == Feedback::accept);
}

TEST_CASE("catalog of K items succeeds at turn 1") {
    const auto f = testing::forest_of({{testing::split(0, 0, 1, 2, {1.0}, {0, 1, 2}), testing::leaf(1, {1.0}, {0}, 1),
                                        testing::leaf(2, {1.0}, {1, 2}, 1)}},
                                      testing::table_of({{1.0}, {2.0}, {3.0}}), 1);
    SimulatedUser u;
    u.target = 1;
    PolicyConfig c;
    c.top_k = 3;
    c.eta = 3;
    const auto trace = run_episode(f, u, c, 1);
    CHECK(trace.succeeded());
    CHECK(trace.turns_used == 1);
    REQUIRE(trace.turns.size() == 1);
    CHECK(std::holds_alternative<Recommend>(trace.turns[0].action));
}

TEST_CASE("episodes on a trained forest") {
    const auto& forest = trained_forest();
    const auto corpus = generate_synthetic(testing::planted_spec());
    const auto& ds = corpus.dataset;
    const auto split = split_by_user(ds, 1);
    const auto held_out = records_of_users(ds, split.test_users);
    REQUIRE(!held_out.empty());
    const auto policy = PolicyConfig::from(forest.config);
    EpisodeConfig ec;

    for (std::size_t e = 0; e < held_out.size(); ++e) {
        const auto user = make_simulated_user(ds, held_out[e], ec, e);
        const auto trace = run_episode(forest, user, policy, e);
        CHECK(trace_to_json_line(trace) == trace_to_json_line(run_episode(forest, user, policy, e)));
        CHECK(trace.turns_used <= policy.max_turns);
        CHECK(trace.identified <= trace.interaction_length);
        CHECK(trace.turns.size() <= policy.max_turns);
        for (const auto& t : trace.turns) {
            if (const auto* ask = std::get_if<Ask>(&t.action)) {
                CHECK((t.feedback == Feedback::yes || t.feedback == Feedback::no));
                if (t.feedback == Feedback::yes) CHECK(ds.item_has_attribute(user.target, ask->attribute));
            } else {
                CHECK((t.feedback == Feedback::accept || t.feedback == Feedback::reject));
            }
        }
        if (trace.succeeded()) CHECK(trace.turns.back().feedback == Feedback::accept);
        else CHECK(trace.turns_used == policy.max_turns);

        const auto line = nlohmann::json::parse(trace_to_json_line(trace));
        CHECK(line["turns"].size() == trace.turns.size());
        CHECK(line["outcome"] == to_string(trace.outcome));
    }
}

TEST_CASE("asking every attribute reproduces the recorded mention set") {
    const auto corpus = generate_synthetic(testing::planted_spec());
    const auto& ds = corpus.dataset;
    EpisodeConfig ec;
    for (const auto& r : ds.interactions) {
        const auto u = make_simulated_user(ds, r, ec, 0);
        std::vector<AttributeId> yes;
        for (AttributeId f = 0; f < static_cast<AttributeId>(ds.p()); ++f)
            if (oracle_answer(u, f)) yes.push_back(f);
        CHECK(yes == r.mentioned());
    }
}
