#pragma once

// Benchmark harness: one simulated episode per held-out interaction, success
// rate / average turn metrics, ablations and the case-study analytics.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "factcrs/config.hpp"
#include "factcrs/corpus.hpp"
#include "factcrs/forest.hpp"
#include "factcrs/simulator.hpp"

namespace factcrs {

struct AblationFlags {
    bool use_candidates = true;
    bool use_forest = true;
    bool use_early_rec = true;
    bool use_online_feedback = true;

    /// Accepts no-candidates | no-rf | no-earlyrec | no-onlinefeed. Throws ConfigError otherwise.
    void disable(const std::string& name);
    std::vector<std::string> disabled() const;
    bool operator==(const AblationFlags&) const = default;
};

struct MentionStats {
    std::size_t count = 0;
    double mean = 0.0;
    double std = 0.0;  // population standard deviation
};

struct CaseStudy {
    MentionStats successful;
    MentionStats failed;
    MentionStats all;
    /// p_n threshold -> (episodes with interaction length >= p_n, SR@T among them).
    std::map<std::size_t, std::pair<std::size_t, double>> success_by_min_mentions;
    /// (p_n, p_k) -> (episodes, successes). Cells with p_k > p_n never appear.
    std::map<std::pair<std::size_t, std::size_t>, std::pair<std::size_t, std::size_t>> identified_matrix;
};

struct BenchmarkReport {
    std::size_t episodes = 0;
    std::size_t max_turns = 0;
    std::vector<double> success_rate;  // [t-1] = SR@t, t = 1..T
    double average_turns = 0.0;
    std::vector<std::size_t> active_at_turn;      // sessions still running at the start of turn t
    std::vector<std::size_t> recommend_at_turn;   // of those, sessions that recommended
    std::vector<std::size_t> success_at_turn;     // sessions accepting at turn t
    std::vector<double> recommendation_ratio;     // recommend_at_turn / active_at_turn
    std::vector<double> success_ratio;            // success_at_turn / active_at_turn
    std::map<std::size_t, std::size_t> leaf_item_histogram;    // distinct items in a leaf -> leaves
    std::map<std::size_t, std::size_t> item_leaf_spread;       // leaves holding an item (per tree) -> (item, tree) pairs
    CaseStudy case_study;
    AblationFlags flags;
    std::vector<std::pair<std::string, std::string>> config;
};

struct BenchmarkRun {
    BenchmarkReport report;
    std::vector<EpisodeTrace> traces;
};

/// Fraction of traces that succeeded at turn <= t. Throws std::invalid_argument on empty input or t = 0.
double success_rate_at(const std::vector<EpisodeTrace>& traces, std::size_t t);
/// Mean turns with failures charged as T. Throws std::invalid_argument on empty input.
double average_turns(const std::vector<EpisodeTrace>& traces);
/// AT rebuilt from the report's per-turn success ratios.
double average_turns_from_ratios(const BenchmarkReport& report);

CaseStudy analytics_report(const std::vector<EpisodeTrace>& traces);

/// Builds the report from finished traces plus forest structure statistics.
BenchmarkReport summarize(const std::vector<EpisodeTrace>& traces, const InteractionForest& forest, std::size_t max_turns);

/// Single full-pool tree trained on the split's training users (the no-rf ablation model).
InteractionForest build_single_tree_model(const Dataset& dataset, const DataSplit& split, const ForestConfig& config);

/// Runs one episode per held-out interaction (test users, plus validation users when
/// config.eval_validation_users). Policy parameters come from config.forest.
BenchmarkRun run_benchmark(const InteractionForest& forest, const Dataset& dataset, const DataSplit& split,
                           const AblationFlags& flags, const RunConfig& config);

std::string report_to_json(const BenchmarkReport& report, int indent = 2);
/// Writes per_turn.csv, leaf_items.csv, item_leaf_spread.csv, min_mentions.csv and identified_matrix.csv.
void write_report_csvs(const BenchmarkReport& report, const std::filesystem::path& dir);

}  // namespace factcrs
