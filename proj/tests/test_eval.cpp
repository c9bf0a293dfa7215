#include <doctest.h>

#include <fstream>
#include <json.hpp>

#include "support.hpp"
#include "factcrs/eval.hpp"

using namespace factcrs;

namespace {

EpisodeTrace outcome(std::optional<std::size_t> success_turn, std::size_t T = 10, std::size_t pn = 3, std::size_t pk = 1) {
    EpisodeTrace t;
    t.outcome = success_turn ? SessionStatus::succeeded : SessionStatus::failed;
    t.turns_used = success_turn.value_or(T);
    t.interaction_length = pn;
    t.identified = pk;
    return t;
}

struct Bench {
    Dataset data;
    DataSplit split;
    InteractionForest forest;
    RunConfig config;
};

const Bench& bench() {
    static const Bench b = [] {
        Bench b;
        b.data = generate_synthetic(testing::planted_spec()).dataset;
        b.split = split_by_user(b.data, 1);
        b.config.forest = testing::planted_forest_config();
        b.config.forest.optimizer.epochs_commit = 40;
        b.config.forest.optimizer.epochs_search = 10;
        b.config.eval_validation_users = true;
        b.forest = build_forest(records_of_users(b.data, b.split.train_users), b.data.num_items, b.data.attributes, b.config.forest);
        return b;
    }();
    return b;
}

}  // namespace

TEST_CASE("success rate and average turns") {
    const std::vector<EpisodeTrace> mixed{outcome(3), outcome(std::nullopt), outcome(5)};
    CHECK(success_rate_at(mixed, 10) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(success_rate_at(mixed, 1) == 0.0);
    CHECK(success_rate_at(mixed, 4) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(average_turns(mixed) == 6.0);
    CHECK(average_turns({outcome(std::nullopt), outcome(std::nullopt)}) == 10.0);
    CHECK(average_turns({outcome(1), outcome(1)}) == 1.0);
    CHECK(success_rate_at({outcome(1), outcome(1)}, 1) == 1.0);
    CHECK_THROWS_AS(success_rate_at({}, 1), std::invalid_argument);
    CHECK_THROWS_AS(success_rate_at(mixed, 0), std::invalid_argument);
    CHECK_THROWS_AS(average_turns({}), std::invalid_argument);
}

TEST_CASE("analytics report") {
    const auto all_ok = analytics_report({outcome(2, 10, 4, 2), outcome(3, 10, 6, 3)});
    CHECK(all_ok.failed.count == 0);
    CHECK(all_ok.successful.count == 2);
    CHECK(all_ok.successful.mean == 5.0);
    CHECK(all_ok.successful.std == 1.0);
    CHECK(all_ok.success_by_min_mentions.at(5).first == 1);
    CHECK(all_ok.success_by_min_mentions.at(3).second == 1.0);

    const auto mixed = analytics_report({outcome(2, 10, 4, 2), outcome(std::nullopt, 10, 4, 1), outcome(std::nullopt, 10, 2, 0)});
    CHECK(mixed.all.mean == doctest::Approx(10.0 / 3.0));
    CHECK(mixed.identified_matrix.at({4, 2}) == std::pair<std::size_t, std::size_t>{1, 1});
    CHECK(mixed.identified_matrix.at({4, 1}) == std::pair<std::size_t, std::size_t>{1, 0});
    for (const auto& [key, cell] : mixed.identified_matrix) CHECK(key.second <= key.first);

    BenchmarkReport r;
    r.case_study = all_ok;
    const auto j = nlohmann::json::parse(report_to_json(r));
    CHECK(j["mention_stats"]["failed"]["mean"].is_null());
}

TEST_CASE("ablation flag names") {
    AblationFlags f;
    f.disable("no-earlyrec");
    f.disable("no-rf");
    CHECK_FALSE(f.use_early_rec);
    CHECK_FALSE(f.use_forest);
    CHECK(f.use_candidates);
    CHECK(f.disabled() == std::vector<std::string>{"no-rf", "no-earlyrec"});
    CHECK_THROWS_AS(f.disable("no-such-thing"), ConfigError);
}

TEST_CASE("run_benchmark report") {
    const auto& b = bench();
    const auto run = run_benchmark(b.forest, b.data, b.split, {}, b.config);
    const auto& r = run.report;
    CHECK(r.episodes == records_of_users(b.data, b.split.test_users).size() + records_of_users(b.data, b.split.validation_users).size());
    REQUIRE(r.success_rate.size() == 10);
    for (std::size_t t = 1; t < 10; ++t) CHECK(r.success_rate[t] >= r.success_rate[t - 1]);
    CHECK(r.average_turns >= 1.0);
    CHECK(r.average_turns <= 10.0);
    CHECK(r.average_turns == doctest::Approx(average_turns_from_ratios(r)).epsilon(1e-12));
    CHECK(r.active_at_turn[0] == r.episodes);
    std::size_t leaves = 0;
    for (const auto& t : b.forest.trees) leaves += t.leaf_count();
    std::size_t hist = 0;
    for (const auto& [items, count] : r.leaf_item_histogram) hist += count;
    CHECK(hist == leaves);

    const auto again = run_benchmark(b.forest, b.data, b.split, {}, b.config);
    CHECK(report_to_json(again.report) == report_to_json(r));
    auto threaded = b.config;
    threaded.eval_threads = 4;
    auto par = run_benchmark(b.forest, b.data, b.split, {}, threaded);
    CHECK(par.report.success_rate == r.success_rate);
    CHECK(par.report.average_turns == r.average_turns);

    const auto j = nlohmann::json::parse(report_to_json(r));
    for (int t = 1; t <= 10; ++t) CHECK(j.contains("SR@" + std::to_string(t)));
    CHECK(j.contains("AT"));

    const auto dir = testing::temp_dir("eval-csv");
    write_report_csvs(r, dir);
    std::ifstream per_turn(dir / "per_turn.csv");
    std::string header;
    std::getline(per_turn, header);
    CHECK(header == "turn,success_rate,active_at_turn,recommend_at_turn,success_at_turn,recommendation_ratio,success_ratio");
    for (const char* name : {"leaf_items.csv", "item_leaf_spread.csv", "min_mentions.csv", "identified_matrix.csv"})
        CHECK(std::filesystem::exists(dir / name));
}

TEST_CASE("ablation semantics") {
    const auto& b = bench();
    auto run = [&](const char* name) {
        AblationFlags f;
        f.disable(name);
        return run_benchmark(b.forest, b.data, b.split, f, b.config);
    };
    const auto early = run("no-earlyrec");
    for (const auto& t : early.traces)
        for (const auto& turn : t.turns)
            if (const auto* rec = std::get_if<Recommend>(&turn.action)) CHECK(rec->origin != RecommendOrigin::internal);
    CHECK(early.report.flags.disabled() == std::vector<std::string>{"no-earlyrec"});

    for (const auto& t : run("no-rf").traces) CHECK(t.trees_used == 1);
    for (const auto& t : run("no-onlinefeed").traces) CHECK(t.max_offset_norm == 0.0);

    const auto full = run_benchmark(b.forest, b.data, b.split, {}, b.config);
    const auto cand = run("no-candidates");
    bool differs = false;
    for (std::size_t e = 0; e < full.traces.size() && !differs; ++e) differs = full.traces[e].turns != cand.traces[e].turns;
    CHECK(differs);
}

TEST_CASE("model and data must agree") {
    const auto& b = bench();
    Dataset other = b.data;
    other.attributes = AttributeVocabulary({"x"});
    CHECK_THROWS_AS(run_benchmark(b.forest, other, b.split, {}, b.config), std::invalid_argument);
}
