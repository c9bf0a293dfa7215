#include "factcrs/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "factcrs/random.hpp"

namespace factcrs {

void AblationFlags::disable(const std::string& name) {
    if (name == "no-candidates")
        use_candidates = false;
    else if (name == "no-rf")
        use_forest = false;
    else if (name == "no-earlyrec")
        use_early_rec = false;
    else if (name == "no-onlinefeed")
        use_online_feedback = false;
    else
        throw ConfigError("unknown ablation '" + name + "' (expected no-candidates|no-rf|no-earlyrec|no-onlinefeed)");
}

std::vector<std::string> AblationFlags::disabled() const {
    std::vector<std::string> out;
    if (!use_candidates) out.push_back("no-candidates");
    if (!use_forest) out.push_back("no-rf");
    if (!use_early_rec) out.push_back("no-earlyrec");
    if (!use_online_feedback) out.push_back("no-onlinefeed");
    return out;
}

double success_rate_at(const std::vector<EpisodeTrace>& traces, std::size_t t) {
    if (traces.empty()) throw std::invalid_argument("success_rate_at: no traces");
    if (t == 0) throw std::invalid_argument("success_rate_at: t must be >= 1");
    const auto hits = std::count_if(traces.begin(), traces.end(),
                                    [&](const EpisodeTrace& e) { return e.succeeded() && e.turns_used <= t; });
    return static_cast<double>(hits) / static_cast<double>(traces.size());
}

double average_turns(const std::vector<EpisodeTrace>& traces) {
    if (traces.empty()) throw std::invalid_argument("average_turns: no traces");
    double total = 0.0;
    for (const auto& e : traces) total += static_cast<double>(e.turns_used);
    return total / static_cast<double>(traces.size());
}

double average_turns_from_ratios(const BenchmarkReport& report) {
    if (report.episodes == 0) return 0.0;
    double remaining = static_cast<double>(report.episodes);
    double weighted = 0.0;
    double active = static_cast<double>(report.episodes);
    for (std::size_t t = 1; t <= report.max_turns; ++t) {
        const double succ = report.success_ratio[t - 1] * active;
        weighted += static_cast<double>(t) * succ;
        remaining -= succ;
        active = t < report.max_turns ? static_cast<double>(report.active_at_turn[t]) : 0.0;
    }
    weighted += static_cast<double>(report.max_turns) * remaining;
    return weighted / static_cast<double>(report.episodes);
}

namespace {

MentionStats mention_stats(const std::vector<std::size_t>& values) {
    MentionStats s;
    s.count = values.size();
    if (values.empty()) return s;
    for (auto v : values) s.mean += static_cast<double>(v);
    s.mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (auto v : values) var += (static_cast<double>(v) - s.mean) * (static_cast<double>(v) - s.mean);
    s.std = std::sqrt(var / static_cast<double>(values.size()));
    return s;
}

}  // namespace

CaseStudy analytics_report(const std::vector<EpisodeTrace>& traces) {
    CaseStudy cs;
    std::vector<std::size_t> ok, bad, all;
    for (const auto& e : traces) {
        all.push_back(e.interaction_length);
        (e.succeeded() ? ok : bad).push_back(e.interaction_length);
        auto& cell = cs.identified_matrix[{e.interaction_length, e.identified}];
        ++cell.first;
        if (e.succeeded()) ++cell.second;
    }
    cs.successful = mention_stats(ok);
    cs.failed = mention_stats(bad);
    cs.all = mention_stats(all);
    for (std::size_t pn = 3; pn <= 6; ++pn) {
        std::size_t n = 0, hits = 0;
        for (const auto& e : traces) {
            if (e.interaction_length < pn) continue;
            ++n;
            if (e.succeeded()) ++hits;
        }
        cs.success_by_min_mentions[pn] = {n, n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0};
    }
    return cs;
}

BenchmarkReport summarize(const std::vector<EpisodeTrace>& traces, const InteractionForest& forest, std::size_t max_turns) {
    BenchmarkReport r;
    r.episodes = traces.size();
    r.max_turns = max_turns;
    r.active_at_turn.assign(max_turns, 0);
    r.recommend_at_turn.assign(max_turns, 0);
    r.success_at_turn.assign(max_turns, 0);
    for (const auto& e : traces) {
        for (const auto& t : e.turns) {
            if (t.turn < 1 || t.turn > max_turns) continue;
            ++r.active_at_turn[t.turn - 1];
            if (std::holds_alternative<Recommend>(t.action)) ++r.recommend_at_turn[t.turn - 1];
            if (t.feedback == Feedback::accept) ++r.success_at_turn[t.turn - 1];
        }
    }
    for (std::size_t t = 0; t < max_turns; ++t) {
        const double active = static_cast<double>(r.active_at_turn[t]);
        r.recommendation_ratio.push_back(active > 0 ? static_cast<double>(r.recommend_at_turn[t]) / active : 0.0);
        r.success_ratio.push_back(active > 0 ? static_cast<double>(r.success_at_turn[t]) / active : 0.0);
    }
    if (!traces.empty()) {
        for (std::size_t t = 1; t <= max_turns; ++t) r.success_rate.push_back(success_rate_at(traces, t));
        r.average_turns = average_turns(traces);
    }

    for (const auto& tree : forest.trees) {
        std::map<ItemId, std::size_t> leaves_per_item;
        for (const auto& n : tree.nodes()) {
            if (!n.is_leaf()) continue;
            ++r.leaf_item_histogram[n.candidate_items.size()];
            for (ItemId i : n.candidate_items) ++leaves_per_item[i];
        }
        for (const auto& [item, count] : leaves_per_item) ++r.item_leaf_spread[count];
    }
    r.case_study = analytics_report(traces);
    return r;
}

InteractionForest build_single_tree_model(const Dataset& dataset, const DataSplit& split, const ForestConfig& config) {
    ForestConfig single = config;
    single.num_trees = 1;
    single.f_max = dataset.p();
    return build_forest(records_of_users(dataset, split.train_users), dataset.num_items, dataset.attributes, single);
}

BenchmarkRun run_benchmark(const InteractionForest& forest, const Dataset& dataset, const DataSplit& split,
                           const AblationFlags& flags, const RunConfig& config) {
    if (forest.vocabulary.size() != dataset.p() || forest.num_items() != dataset.num_items)
        throw std::invalid_argument("model and dataset disagree on attribute or item counts");

    std::optional<InteractionForest> single;
    if (!flags.use_forest) single = build_single_tree_model(dataset, split, forest.config);
    const InteractionForest& model = single ? *single : forest;

    PolicyConfig policy = PolicyConfig::from(config.forest);
    policy.use_candidates = flags.use_candidates;
    policy.use_early_rec = flags.use_early_rec;
    policy.use_online_feedback = flags.use_online_feedback;
    const EpisodeConfig episode = config.episode();

    std::vector<UserId> users = split.test_users;
    if (config.eval_validation_users) {
        users.insert(users.end(), split.validation_users.begin(), split.validation_users.end());
        std::sort(users.begin(), users.end());
    }
    const auto held_out = records_of_users(dataset, users);

    BenchmarkRun run;
    run.traces.resize(held_out.size());
    auto run_one = [&](std::size_t e) {
        const auto user = make_simulated_user(dataset, held_out[e], episode, mix_seed(episode.seed, 2 * e + 1));
        run.traces[e] = run_episode(model, user, policy, mix_seed(episode.seed, 2 * e));
    };
    const std::size_t threads = std::max<std::size_t>(1, config.eval_threads);
    if (threads == 1) {
        for (std::size_t e = 0; e < held_out.size(); ++e) run_one(e);
    } else {
        std::vector<std::future<void>> jobs;
        for (std::size_t w = 0; w < threads; ++w)
            jobs.push_back(std::async(std::launch::async, [&, w] {
                for (std::size_t e = w; e < held_out.size(); e += threads) run_one(e);
            }));
        for (auto& j : jobs) j.get();
    }

    run.report = summarize(run.traces, model, policy.max_turns);
    run.report.flags = flags;
    run.report.config = config.to_pairs();
    return run;
}

std::string report_to_json(const BenchmarkReport& r, int indent) {
    nlohmann::ordered_json j;
    j["episodes"] = r.episodes;
    j["max_turns"] = r.max_turns;
    for (std::size_t t = 1; t <= r.success_rate.size(); ++t) j["SR@" + std::to_string(t)] = r.success_rate[t - 1];
    j["AT"] = r.average_turns;
    j["success_rate"] = r.success_rate;
    j["average_turns"] = r.average_turns;
    j["active_at_turn"] = r.active_at_turn;
    j["recommend_at_turn"] = r.recommend_at_turn;
    j["success_at_turn"] = r.success_at_turn;
    j["recommendation_ratio"] = r.recommendation_ratio;
    j["success_ratio"] = r.success_ratio;
    auto hist = [](const std::map<std::size_t, std::size_t>& h) {
        auto a = nlohmann::ordered_json::array();
        for (const auto& [k, v] : h) a.push_back({k, v});
        return a;
    };
    j["leaf_item_histogram"] = hist(r.leaf_item_histogram);
    j["item_leaf_spread"] = hist(r.item_leaf_spread);
    auto stats = [](const MentionStats& s) {
        nlohmann::ordered_json o;
        o["count"] = s.count;
        if (s.count == 0) {
            o["mean"] = nullptr;
            o["std"] = nullptr;
        } else {
            o["mean"] = s.mean;
            o["std"] = s.std;
        }
        return o;
    };
    j["mention_stats"]["successful"] = stats(r.case_study.successful);
    j["mention_stats"]["failed"] = stats(r.case_study.failed);
    j["mention_stats"]["all"] = stats(r.case_study.all);
    auto mins = nlohmann::ordered_json::array();
    for (const auto& [pn, v] : r.case_study.success_by_min_mentions)
        mins.push_back({{"min_mentions", pn}, {"episodes", v.first}, {"success_rate", v.second}});
    j["success_by_min_mentions"] = mins;
    auto matrix = nlohmann::ordered_json::array();
    for (const auto& [key, v] : r.case_study.identified_matrix)
        matrix.push_back({{"interaction_length", key.first},
                          {"identified", key.second},
                          {"episodes", v.first},
                          {"success_rate", static_cast<double>(v.second) / static_cast<double>(v.first)}});
    j["identified_matrix"] = matrix;
    j["flags"]["use_candidates"] = r.flags.use_candidates;
    j["flags"]["use_forest"] = r.flags.use_forest;
    j["flags"]["use_early_rec"] = r.flags.use_early_rec;
    j["flags"]["use_online_feedback"] = r.flags.use_online_feedback;
    j["flags"]["disabled"] = r.flags.disabled();
    nlohmann::ordered_json cfg;
    for (const auto& [k, v] : r.config) cfg[k] = v;
    j["config"] = cfg;
    return j.dump(indent);
}

void write_report_csvs(const BenchmarkReport& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream out(dir / name, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
        out.precision(10);
        return out;
    };
    {
        auto out = open("per_turn.csv");
        out << "turn,success_rate,active_at_turn,recommend_at_turn,success_at_turn,recommendation_ratio,success_ratio\n";
        for (std::size_t t = 0; t < r.max_turns; ++t)
            out << t + 1 << ',' << (t < r.success_rate.size() ? r.success_rate[t] : 0.0) << ',' << r.active_at_turn[t] << ','
                << r.recommend_at_turn[t] << ',' << r.success_at_turn[t] << ',' << r.recommendation_ratio[t] << ','
                << r.success_ratio[t] << '\n';
    }
    {
        auto out = open("leaf_items.csv");
        out << "leaf_item_histogram_items,leaf_item_histogram_leaves\n";
        for (const auto& [k, v] : r.leaf_item_histogram) out << k << ',' << v << '\n';
    }
    {
        auto out = open("item_leaf_spread.csv");
        out << "item_leaf_spread_leaves,item_leaf_spread_items\n";
        for (const auto& [k, v] : r.item_leaf_spread) out << k << ',' << v << '\n';
    }
    {
        auto out = open("min_mentions.csv");
        out << "min_mentions,episodes,success_rate\n";
        for (const auto& [pn, v] : r.case_study.success_by_min_mentions) out << pn << ',' << v.first << ',' << v.second << '\n';
    }
    {
        auto out = open("identified_matrix.csv");
        out << "interaction_length,identified,episodes,success_rate\n";
        for (const auto& [key, v] : r.case_study.identified_matrix)
            out << key.first << ',' << key.second << ',' << v.first << ','
                << static_cast<double>(v.second) / static_cast<double>(v.first) << '\n';
    }
}

}  // namespace factcrs
