#pragma once

// Run configuration: every training, session and evaluation knob in one flat
// key=value document, with typed validation and CLI overrides.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "factcrs/forest.hpp"
#include "factcrs/policy.hpp"
#include "factcrs/simulator.hpp"

namespace factcrs {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    ForestConfig forest;
    std::uint64_t split_seed = 1;
    std::uint64_t eval_seed = 1;
    SimulatorMode simulator_mode = SimulatorMode::recorded;
    double rho = 0.5;
    bool eval_validation_users = false;  // also run episodes for validation users
    std::size_t eval_threads = 1;
    int port = 8080;
    std::size_t idle_timeout_s = 1800;
    std::string session_log;  // empty disables the session log

    EpisodeConfig episode() const;
    PolicyConfig policy() const { return PolicyConfig::from(forest); }

    /// Assigns one key. Throws ConfigError for unknown keys or values of the wrong type.
    void set(const std::string& key, const std::string& value);
    /// All keys with their current values, in a fixed order.
    std::vector<std::pair<std::string, std::string>> to_pairs() const;
    std::string to_text() const;

    /// Parses `key = value` lines; `#` starts a comment.
    void apply_text(const std::string& text);
    void apply_file(const std::filesystem::path& path);
    /// Applies "key=value" override strings.
    void apply_overrides(const std::vector<std::string>& overrides);
};

}  // namespace factcrs
