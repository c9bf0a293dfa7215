// fact-crs: train, evaluate, simulate and serve conversational recommenders.

#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "factcrs/chat.hpp"
#include "factcrs/config.hpp"
#include "factcrs/corpus.hpp"
#include "factcrs/eval.hpp"
#include "factcrs/forest.hpp"
#include "factcrs/service.hpp"
#include "factcrs/simulator.hpp"

using namespace factcrs;

namespace {

constexpr int kExitError = 1;
constexpr int kExitData = 2;
constexpr int kExitMismatch = 3;

struct Options {
    std::string data;
    std::string model;
    std::string out;
    std::string config;
    std::string log;
    std::optional<std::uint64_t> seed;
    std::optional<int> port;
    std::vector<std::string> ablate;
    std::vector<std::string> overrides;
    std::string action = "show";
    SyntheticSpec synthetic;
};

RunConfig load_config(const Options& o) {
    RunConfig cfg;
    if (!o.config.empty()) cfg.apply_file(o.config);
    cfg.apply_overrides(o.overrides);
    return cfg;
}

std::optional<Dataset> read_dataset(const std::string& dir) {
    try {
        return load_dataset(dir);
    } catch (const std::exception& e) {
        std::cerr << "error: cannot load dataset from " << dir << ": " << e.what() << "\n";
        return std::nullopt;
    }
}

void print_warnings(const Dataset& ds) {
    if (ds.validation.empty_mentions || ds.validation.mentions_outside_item)
        std::cerr << "warning: " << ds.validation.empty_mentions << " records with empty mentions, "
                  << ds.validation.mentions_outside_item << " records mentioning attributes outside the item\n";
}

/// Model/data compatibility: same attribute labels and item count.
std::optional<std::string> mismatch(const InteractionForest& forest, const Dataset& ds) {
    if (forest.vocabulary.size() != ds.p())
        return "model has " + std::to_string(forest.vocabulary.size()) + " attributes, data has " + std::to_string(ds.p());
    for (std::size_t a = 0; a < ds.p(); ++a)
        if (forest.vocabulary.label(static_cast<AttributeId>(a)) != ds.attributes.label(static_cast<AttributeId>(a)))
            return "attribute " + std::to_string(a) + " is '" + forest.vocabulary.label(static_cast<AttributeId>(a)) +
                   "' in the model but '" + ds.attributes.label(static_cast<AttributeId>(a)) + "' in the data";
    if (forest.num_items() != ds.num_items)
        return "model has " + std::to_string(forest.num_items()) + " items, data has " + std::to_string(ds.num_items);
    return std::nullopt;
}

int cmd_train(const Options& o) {
    RunConfig cfg = load_config(o);
    if (o.seed) cfg.forest.seed = *o.seed;
    auto ds = read_dataset(o.data);
    if (!ds) return kExitData;
    print_warnings(*ds);
    const DataSplit split = split_by_user(*ds, cfg.split_seed);

    ForestBuildLog log;
    const auto forest =
        build_forest(records_of_users(*ds, split.train_users), ds->num_items, ds->attributes, cfg.forest, &log);
    save_model(forest, o.out);

    const std::string log_path = o.log.empty() ? o.out + ".log.jsonl" : o.log;
    std::ofstream out(log_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write training log " + log_path);
    for (std::size_t j = 0; j < log.splits.size(); ++j) {
        out << nlohmann::json{{"tree", j}, {"attribute_pool", log.pools[j]}}.dump() << '\n';
        for (const auto& e : log.splits[j]) {
            nlohmann::ordered_json line{{"tree", j},          {"node", e.node},   {"depth", e.depth},
                                        {"interactions", e.interactions},     {"items", e.items},
                                        {"gini", e.gini}};
            line["attribute"] = e.attribute ? nlohmann::ordered_json(*e.attribute) : nlohmann::ordered_json(nullptr);
            line["objective"] = e.objective;
            line["stop_reason"] = e.stop_reason.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(e.stop_reason);
            out << line.dump() << '\n';
        }
    }
    std::size_t nodes = 0;
    for (const auto& t : forest.trees) nodes += t.nodes().size();
    std::cout << "trained " << forest.trees.size() << " trees (" << nodes << " nodes) on " << split.train_users.size()
              << " users; model written to " << o.out << ", log to " << log_path << "\n";
    return 0;
}

struct Loaded {
    RunConfig cfg;
    InteractionForest forest;
    Dataset data;
    DataSplit split;
};

/// Loads config, model and data for eval/simulate. Returns an exit code on failure.
std::variant<Loaded, int> load_for_eval(const Options& o) {
    Loaded l;
    l.cfg = load_config(o);
    if (o.seed) l.cfg.eval_seed = *o.seed;
    l.forest = load_model(o.model);
    // Session and evaluation knobs come from the run config; training knobs from the model.
    ForestConfig session = l.forest.config;
    session.top_k = l.cfg.forest.top_k;
    session.max_turns = l.cfg.forest.max_turns;
    session.eta = l.cfg.forest.eta;
    session.alpha_p = l.cfg.forest.alpha_p;
    session.alpha_n = l.cfg.forest.alpha_n;
    session.exclude_rejected = l.cfg.forest.exclude_rejected;
    session.tree.threads = l.cfg.forest.tree.threads;
    l.cfg.forest = session;
    auto ds = read_dataset(o.data);
    if (!ds) return kExitData;
    l.data = std::move(*ds);
    if (auto why = mismatch(l.forest, l.data)) {
        std::cerr << "error: model and data do not match: " << *why << "\n";
        return kExitMismatch;
    }
    l.split = split_by_user(l.data, l.cfg.split_seed);
    return l;
}

AblationFlags flags_of(const Options& o) {
    AblationFlags flags;
    for (const auto& a : o.ablate) flags.disable(a);
    return flags;
}

int cmd_eval(const Options& o) {
    auto loaded = load_for_eval(o);
    if (auto* code = std::get_if<int>(&loaded)) return *code;
    auto& l = std::get<Loaded>(loaded);
    const auto run = run_benchmark(l.forest, l.data, l.split, flags_of(o), l.cfg);

    std::filesystem::create_directories(o.out);
    const auto report_path = std::filesystem::path(o.out) / "report.json";
    std::ofstream(report_path, std::ios::trunc) << report_to_json(run.report) << '\n';
    write_report_csvs(run.report, o.out);

    const auto& r = run.report;
    std::cout << "episodes " << r.episodes << "  SR@" << r.max_turns << " " << r.success_rate.back() << "  AT "
              << r.average_turns << "\nreport written to " << report_path.string() << "\n";
    return 0;
}

int cmd_simulate(const Options& o) {
    auto loaded = load_for_eval(o);
    if (auto* code = std::get_if<int>(&loaded)) return *code;
    auto& l = std::get<Loaded>(loaded);
    const auto run = run_benchmark(l.forest, l.data, l.split, flags_of(o), l.cfg);
    std::ofstream file;
    if (!o.out.empty()) {
        file.open(o.out, std::ios::trunc);
        if (!file) throw std::runtime_error("cannot write " + o.out);
    }
    std::ostream& out = o.out.empty() ? std::cout : file;
    for (const auto& t : run.traces) out << trace_to_json_line(t) << '\n';
    if (!o.out.empty())
        std::cout << run.traces.size() << " traces written to " << o.out << "  (SR@" << run.report.max_turns << " "
                  << run.report.success_rate.back() << ", AT " << run.report.average_turns << ")\n";
    return 0;
}

httplib::Server* g_server = nullptr;

int cmd_serve(const Options& o) {
    RunConfig cfg = load_config(o);
    if (o.port) cfg.port = *o.port;
    const auto forest = load_model(o.model);
    ServiceOptions opts;
    opts.policy = PolicyConfig::from(cfg.forest);
    opts.idle_timeout = std::chrono::seconds(cfg.idle_timeout_s);
    opts.seed = o.seed.value_or(cfg.eval_seed);
    opts.session_log = cfg.session_log;
    SessionService service(forest, opts);

    httplib::Server server;
    install_routes(server, service);
    g_server = &server;
    std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
    std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
    std::cout << "serving " << forest.trees.size() << " trees on http://0.0.0.0:" << cfg.port << std::endl;
    if (!server.listen("0.0.0.0", cfg.port)) {
        std::cerr << "error: cannot listen on port " << cfg.port << "\n";
        return kExitError;
    }
    return 0;
}

int cmd_chat(const Options& o) {
    RunConfig cfg = load_config(o);
    const auto forest = load_model(o.model);
    const auto result = run_chat(forest, PolicyConfig::from(cfg.forest), o.seed.value_or(cfg.eval_seed), std::cin, std::cout);
    return result.status == SessionStatus::active ? kExitError : 0;
}

int cmd_config(const Options& o) {
    if (o.action != "show") {
        std::cerr << "error: unknown config action '" << o.action << "' (expected show)\n";
        return kExitError;
    }
    std::cout << load_config(o).to_text();
    return 0;
}

int cmd_generate(const Options& o) {
    SyntheticSpec spec = o.synthetic;
    if (o.seed) spec.seed = *o.seed;
    const auto corpus = generate_synthetic(spec);
    save_dataset(corpus.dataset, o.out);
    std::cout << "wrote " << corpus.dataset.interactions.size() << " interactions over " << corpus.dataset.num_users
              << " users, " << corpus.dataset.num_items << " items, " << corpus.dataset.p() << " attributes to " << o.out
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conversational recommendation with forests of interaction trees"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
        sub->add_option("--set", o.overrides, "config override key=value (repeatable)");
    };

    auto* train = app.add_subcommand("train", "build a forest from a data directory");
    train->add_option("--data", o.data, "data directory")->required();
    train->add_option("--out", o.out, "model file to write")->required();
    train->add_option("--log", o.log, "training log (default <out>.log.jsonl)");
    train->add_option("--seed", o.seed, "training seed");
    common(train);

    auto* eval = app.add_subcommand("eval", "run the simulator benchmark and write a report");
    eval->add_option("--model", o.model, "model file")->required()->check(CLI::ExistingFile);
    eval->add_option("--data", o.data, "data directory")->required();
    eval->add_option("--out", o.out, "report directory")->required();
    eval->add_option("--seed", o.seed, "evaluation seed");
    eval->add_option("--ablate", o.ablate, "no-candidates | no-rf | no-earlyrec | no-onlinefeed (repeatable)");
    common(eval);

    auto* simulate = app.add_subcommand("simulate", "run simulated episodes and print one JSON trace per line");
    simulate->add_option("--model", o.model, "model file")->required()->check(CLI::ExistingFile);
    simulate->add_option("--data", o.data, "data directory")->required();
    simulate->add_option("--out", o.out, "trace file (default stdout)");
    simulate->add_option("--seed", o.seed, "evaluation seed");
    simulate->add_option("--ablate", o.ablate, "ablation (repeatable)");
    common(simulate);

    auto* serve = app.add_subcommand("serve", "HTTP session service");
    serve->add_option("--model", o.model, "model file")->required()->check(CLI::ExistingFile);
    serve->add_option("--port", o.port, "port");
    serve->add_option("--seed", o.seed, "base seed for sessions created without one");
    common(serve);

    auto* chat = app.add_subcommand("chat", "interactive terminal session");
    chat->add_option("--model", o.model, "model file")->required()->check(CLI::ExistingFile);
    chat->add_option("--seed", o.seed, "session seed");
    common(chat);

    auto* config = app.add_subcommand("config", "print the effective configuration");
    config->add_option("action", o.action, "show");
    common(config);

    auto* generate = app.add_subcommand("generate", "write a synthetic corpus with a planted attribute tree");
    generate->add_option("--out", o.out, "data directory")->required();
    generate->add_option("--seed", o.seed, "generator seed");
    generate->add_option("--users", o.synthetic.users);
    generate->add_option("--items", o.synthetic.items);
    generate->add_option("--attributes", o.synthetic.attributes);
    generate->add_option("--interactions", o.synthetic.interactions);
    generate->add_option("--depth", o.synthetic.depth);
    generate->add_option("--noise", o.synthetic.noise);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(o);
        if (*eval) return cmd_eval(o);
        if (*simulate) return cmd_simulate(o);
        if (*serve) return cmd_serve(o);
        if (*chat) return cmd_chat(o);
        if (*config) return cmd_config(o);
        if (*generate) return cmd_generate(o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}
