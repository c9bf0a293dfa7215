#pragma once

// HTTP session service. SessionService holds the live sessions and answers
// requests as (status, JSON body) pairs; install_routes binds it to an
// httplib server.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>

#include <json.hpp>

#include "factcrs/forest.hpp"
#include "factcrs/policy.hpp"

namespace httplib {
class Server;
}

namespace factcrs {

struct ServiceResponse {
    int status = 200;
    nlohmann::json body;
};

struct ServiceOptions {
    PolicyConfig policy;
    std::chrono::seconds idle_timeout{1800};
    std::uint64_t seed = 1;   // seeds sessions created without an explicit seed
    std::string session_log;  // JSON-lines event log; empty disables it
};

class SessionService {
public:
    using Clock = std::chrono::steady_clock;

    SessionService(const InteractionForest& forest, ServiceOptions options,
                   std::function<Clock::time_point()> clock = Clock::now);

    ServiceResponse create(const std::string& body);
    ServiceResponse next(const std::string& id);
    ServiceResponse answer(const std::string& id, const std::string& body);
    ServiceResponse feedback(const std::string& id, const std::string& body);
    ServiceResponse state(const std::string& id);
    ServiceResponse model_info() const;

    /// Drops sessions idle for longer than the timeout; returns how many were dropped.
    std::size_t expire_idle();
    std::size_t live_sessions() const;

private:
    struct Entry {
        std::mutex mutex;
        std::unique_ptr<Session> session;
        Clock::time_point last_used;
    };

    /// Locates a live session (refreshing its idle deadline) or produces the 404/410 response.
    std::shared_ptr<Entry> find(const std::string& id, ServiceResponse& error);
    void log_event(const nlohmann::json& event);

    const InteractionForest* forest_;
    ServiceOptions options_;
    std::function<Clock::time_point()> clock_;

    mutable std::mutex registry_mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    std::set<std::string> expired_;
    std::uint64_t created_ = 0;

    std::mutex log_mutex_;
    std::ofstream log_;
};

/// Payload for a pending action: a question or a recommendation list.
nlohmann::json action_to_json(const InteractionForest& forest, const AgentAction& action, std::size_t turn);

void install_routes(httplib::Server& server, SessionService& service);

}  // namespace factcrs
