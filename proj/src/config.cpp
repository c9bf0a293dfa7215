#include "factcrs/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace factcrs {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* first = value.data();
    const char* last = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc{} || ptr != last) throw ConfigError("config key '" + key + "': invalid value '" + value + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError("config key '" + key + "': expected true/false, got '" + value + "'");
}

std::string fmt(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

struct Field {
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

const std::vector<std::pair<std::string, Field>>& fields() {
    using F = Field;
    auto sz = [](std::size_t ForestConfig::*m) {
        return F{[=](RunConfig& c, const std::string& k, const std::string& v) { c.forest.*m = parse_number<std::size_t>(k, v); },
                 [=](const RunConfig& c) { return std::to_string(c.forest.*m); }};
    };
    auto dbl = [](double ForestConfig::*m) {
        return F{[=](RunConfig& c, const std::string& k, const std::string& v) { c.forest.*m = parse_number<double>(k, v); },
                 [=](const RunConfig& c) { return fmt(c.forest.*m); }};
    };
    auto opt_sz = [](std::size_t OptimizerConfig::*m) {
        return F{[=](RunConfig& c, const std::string& k, const std::string& v) {
                     c.forest.optimizer.*m = parse_number<std::size_t>(k, v);
                 },
                 [=](const RunConfig& c) { return std::to_string(c.forest.optimizer.*m); }};
    };
    auto opt_dbl = [](double OptimizerConfig::*m) {
        return F{[=](RunConfig& c, const std::string& k, const std::string& v) { c.forest.optimizer.*m = parse_number<double>(k, v); },
                 [=](const RunConfig& c) { return fmt(c.forest.optimizer.*m); }};
    };
    auto tree_sz = [](std::size_t TreeConfig::*m) {
        return F{[=](RunConfig& c, const std::string& k, const std::string& v) { c.forest.tree.*m = parse_number<std::size_t>(k, v); },
                 [=](const RunConfig& c) { return std::to_string(c.forest.tree.*m); }};
    };
    static const std::vector<std::pair<std::string, Field>> table = {
        {"num_trees", sz(&ForestConfig::num_trees)},
        {"f_max", sz(&ForestConfig::f_max)},
        {"seed", {[](RunConfig& c, const std::string& k, const std::string& v) { c.forest.seed = parse_number<std::uint64_t>(k, v); },
                  [](const RunConfig& c) { return std::to_string(c.forest.seed); }}},
        {"dim", sz(&ForestConfig::dim)},
        {"learning_rate", opt_dbl(&OptimizerConfig::learning_rate)},
        {"epochs_search", opt_sz(&OptimizerConfig::epochs_search)},
        {"epochs_commit", opt_sz(&OptimizerConfig::epochs_commit)},
        {"negatives_per_positive", opt_sz(&OptimizerConfig::negatives_per_positive)},
        {"lambda_bpr", opt_dbl(&OptimizerConfig::lambda_bpr)},
        {"lambda_s", opt_dbl(&OptimizerConfig::lambda_s)},
        {"lambda_v", opt_dbl(&OptimizerConfig::lambda_v)},
        {"init_scale", opt_dbl(&OptimizerConfig::init_scale)},
        {"search_trains_items", {[](RunConfig& c, const std::string& k, const std::string& v) {
                                     c.forest.optimizer.search_trains_items = parse_bool(k, v);
                                 },
                                 [](const RunConfig& c) { return fmt(c.forest.optimizer.search_trains_items); }}},
        {"max_depth", tree_sz(&TreeConfig::max_depth)},
        {"gini_threshold", {[](RunConfig& c, const std::string& k, const std::string& v) {
                                c.forest.tree.gini_threshold = parse_number<double>(k, v);
                            },
                            [](const RunConfig& c) { return fmt(c.forest.tree.gini_threshold); }}},
        {"min_node", tree_sz(&TreeConfig::min_node)},
        {"threads", tree_sz(&TreeConfig::threads)},
        {"top_k", sz(&ForestConfig::top_k)},
        {"max_turns", sz(&ForestConfig::max_turns)},
        {"eta", sz(&ForestConfig::eta)},
        {"alpha_p", dbl(&ForestConfig::alpha_p)},
        {"alpha_n", dbl(&ForestConfig::alpha_n)},
        {"joint_refinement", {[](RunConfig& c, const std::string& k, const std::string& v) { c.forest.joint_refinement = parse_bool(k, v); },
                              [](const RunConfig& c) { return fmt(c.forest.joint_refinement); }}},
        {"exclude_rejected", {[](RunConfig& c, const std::string& k, const std::string& v) { c.forest.exclude_rejected = parse_bool(k, v); },
                              [](const RunConfig& c) { return fmt(c.forest.exclude_rejected); }}},
        {"split_seed", {[](RunConfig& c, const std::string& k, const std::string& v) { c.split_seed = parse_number<std::uint64_t>(k, v); },
                        [](const RunConfig& c) { return std::to_string(c.split_seed); }}},
        {"eval_seed", {[](RunConfig& c, const std::string& k, const std::string& v) { c.eval_seed = parse_number<std::uint64_t>(k, v); },
                       [](const RunConfig& c) { return std::to_string(c.eval_seed); }}},
        {"simulator_mode", {[](RunConfig& c, const std::string& k, const std::string& v) {
                                if (v == "recorded")
                                    c.simulator_mode = SimulatorMode::recorded;
                                else if (v == "sampled")
                                    c.simulator_mode = SimulatorMode::sampled;
                                else
                                    throw ConfigError("config key '" + k + "': expected recorded|sampled, got '" + v + "'");
                            },
                            [](const RunConfig& c) {
                                return std::string(c.simulator_mode == SimulatorMode::recorded ? "recorded" : "sampled");
                            }}},
        {"rho", {[](RunConfig& c, const std::string& k, const std::string& v) { c.rho = parse_number<double>(k, v); },
                 [](const RunConfig& c) { return fmt(c.rho); }}},
        {"eval_validation_users", {[](RunConfig& c, const std::string& k, const std::string& v) { c.eval_validation_users = parse_bool(k, v); },
                                   [](const RunConfig& c) { return fmt(c.eval_validation_users); }}},
        {"eval_threads", {[](RunConfig& c, const std::string& k, const std::string& v) { c.eval_threads = parse_number<std::size_t>(k, v); },
                          [](const RunConfig& c) { return std::to_string(c.eval_threads); }}},
        {"port", {[](RunConfig& c, const std::string& k, const std::string& v) { c.port = parse_number<int>(k, v); },
                  [](const RunConfig& c) { return std::to_string(c.port); }}},
        {"idle_timeout_s", {[](RunConfig& c, const std::string& k, const std::string& v) { c.idle_timeout_s = parse_number<std::size_t>(k, v); },
                            [](const RunConfig& c) { return std::to_string(c.idle_timeout_s); }}},
        {"session_log", {[](RunConfig& c, const std::string&, const std::string& v) { c.session_log = v; },
                         [](const RunConfig& c) { return c.session_log; }}},
    };
    return table;
}

}  // namespace

EpisodeConfig RunConfig::episode() const {
    EpisodeConfig e;
    e.max_turns = forest.max_turns;
    e.top_k = forest.top_k;
    e.seed = eval_seed;
    e.rho = rho;
    e.mode = simulator_mode;
    return e;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    for (const auto& [name, field] : fields()) {
        if (name == key) {
            field.set(*this, key, value);
            if (rho < 0.0 || rho > 1.0) throw ConfigError("config key 'rho' must lie in [0,1]");
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::to_pairs() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [name, field] : fields()) out.emplace_back(name, field.get(*this));
    return out;
}

std::string RunConfig::to_text() const {
    std::string s;
    for (const auto& [k, v] : to_pairs()) s += k + " = " + v + "\n";
    return s;
}

void RunConfig::apply_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(n) + ": expected key = value");
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

void RunConfig::apply_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    apply_text(buf.str());
}

void RunConfig::apply_overrides(const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw ConfigError("override '" + o + "': expected key=value");
        set(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
    }
}

}  // namespace factcrs
