#include "factcrs/service.hpp"

#include <cmath>
#include <cstdio>

#include <httplib.h>

#include "factcrs/random.hpp"

namespace factcrs {

using nlohmann::json;

namespace {

ServiceResponse error(int status, const std::string& message) { return {status, json{{"error", message}}}; }

/// Parses a request body; an empty body is an empty object.
bool parse_body(const std::string& body, json& out, ServiceResponse& err) {
    if (body.find_first_not_of(" \t\r\n") == std::string::npos) {
        out = json::object();
        return true;
    }
    out = json::parse(body, nullptr, false);
    if (out.is_discarded() || !out.is_object()) {
        err = error(400, "request body must be a JSON object");
        return false;
    }
    return true;
}

}  // namespace

json action_to_json(const InteractionForest& forest, const AgentAction& action, std::size_t turn) {
    if (const auto* ask = std::get_if<Ask>(&action))
        return {{"type", "question"},
                {"attribute_id", ask->attribute},
                {"label", forest.vocabulary.label(ask->attribute)},
                {"turn", turn}};
    const auto& rec = std::get<Recommend>(action);
    json items = json::array();
    for (std::size_t r = 0; r < rec.items.size(); ++r)
        items.push_back({{"item_id", rec.items[r].item}, {"rank", r + 1}, {"score", rec.items[r].score}});
    return {{"type", "recommendation"}, {"items", items}, {"turn", turn}, {"origin", to_string(rec.origin)}};
}

SessionService::SessionService(const InteractionForest& forest, ServiceOptions options,
                               std::function<Clock::time_point()> clock)
    : forest_(&forest), options_(std::move(options)), clock_(std::move(clock)) {
    if (!options_.session_log.empty()) {
        log_.open(options_.session_log, std::ios::app);
        if (!log_) throw std::runtime_error("cannot open session log " + options_.session_log);
    }
}

void SessionService::log_event(const json& event) {
    if (!log_.is_open()) return;
    std::lock_guard lock(log_mutex_);
    log_ << event.dump() << '\n' << std::flush;
}

std::size_t SessionService::expire_idle() {
    std::lock_guard lock(registry_mutex_);
    const auto now = clock_();
    std::size_t dropped = 0;
    for (auto it = sessions_.begin(); it != sessions_.end();) {
        std::unique_lock entry_lock(it->second->mutex, std::try_to_lock);
        if (entry_lock.owns_lock() && now - it->second->last_used > options_.idle_timeout) {
            expired_.insert(it->first);
            entry_lock.unlock();
            it = sessions_.erase(it);
            ++dropped;
        } else {
            ++it;
        }
    }
    return dropped;
}

std::size_t SessionService::live_sessions() const {
    std::lock_guard lock(registry_mutex_);
    return sessions_.size();
}

std::shared_ptr<SessionService::Entry> SessionService::find(const std::string& id, ServiceResponse& err) {
    expire_idle();
    std::lock_guard lock(registry_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) {
        err = expired_.count(id) ? error(410, "session " + id + " expired") : error(404, "unknown session " + id);
        return nullptr;
    }
    return it->second;
}

ServiceResponse SessionService::create(const std::string& body) {
    json req;
    ServiceResponse err;
    if (!parse_body(body, req, err)) return err;

    std::uint64_t seed = 0;
    std::string id;
    {
        std::lock_guard lock(registry_mutex_);
        const std::uint64_t index = created_++;
        seed = mix_seed(options_.seed, index);
        char tag[17];
        std::snprintf(tag, sizeof tag, "%016llx", static_cast<unsigned long long>(mix_seed(options_.seed ^ 0x5e55, index)));
        id = std::to_string(index) + "-" + tag;
    }
    if (req.contains("seed") && !req["seed"].is_null()) {
        if (!req["seed"].is_number_unsigned()) return error(400, "seed must be a non-negative integer");
        seed = req["seed"].get<std::uint64_t>();
    }

    auto entry = std::make_shared<Entry>();
    entry->session = std::make_unique<Session>(*forest_, options_.policy, seed);
    entry->last_used = clock_();
    expire_idle();
    {
        std::lock_guard lock(registry_mutex_);
        sessions_.emplace(id, entry);
    }
    log_event({{"session", id}, {"event", "create"}, {"seed", seed}});
    return {200, {{"session_id", id}}};
}

ServiceResponse SessionService::next(const std::string& id) {
    ServiceResponse err;
    auto entry = find(id, err);
    if (!entry) return err;
    std::lock_guard lock(entry->mutex);
    entry->last_used = clock_();
    Session& s = *entry->session;
    const AgentAction* action = s.try_next_action();
    if (!action)
        return {409, {{"error", "session has ended"}, {"status", to_string(s.status())}, {"turn", s.turns_used()}}};
    json payload = action_to_json(*forest_, *action, s.turn());
    log_event({{"session", id}, {"event", "next"}, {"action", payload}});
    return {200, payload};
}

ServiceResponse SessionService::answer(const std::string& id, const std::string& body) {
    json req;
    ServiceResponse err;
    if (!parse_body(body, req, err)) return err;
    const std::string value = req.value("value", std::string{});
    if (value != "yes" && value != "no") return error(400, "value must be \"yes\" or \"no\"");

    auto entry = find(id, err);
    if (!entry) return err;
    std::lock_guard lock(entry->mutex);
    entry->last_used = clock_();
    Session& s = *entry->session;
    try {
        s.answer(value == "yes");
    } catch (const ProtocolError& e) {
        return {409, {{"error", e.what()}, {"status", to_string(s.status())}, {"turn", s.turn()}}};
    }
    log_event({{"session", id}, {"event", "answer"}, {"value", value}});
    return {200, {{"ok", true}, {"turn", s.active() ? s.turn() : s.turns_used()}, {"status", to_string(s.status())}}};
}

ServiceResponse SessionService::feedback(const std::string& id, const std::string& body) {
    json req;
    ServiceResponse err;
    if (!parse_body(body, req, err)) return err;
    const std::string value = req.value("value", std::string{});
    if (value != "accept" && value != "reject") return error(400, "value must be \"accept\" or \"reject\"");
    std::optional<ItemId> item;
    if (req.contains("item_id") && !req["item_id"].is_null()) {
        if (!req["item_id"].is_number_integer()) return error(400, "item_id must be an integer");
        item = req["item_id"].get<ItemId>();
    }

    auto entry = find(id, err);
    if (!entry) return err;
    std::lock_guard lock(entry->mutex);
    entry->last_used = clock_();
    Session& s = *entry->session;
    try {
        if (value == "accept")
            s.accept(item);
        else
            s.reject();
    } catch (const ProtocolError& e) {
        return {409, {{"error", e.what()}, {"status", to_string(s.status())}, {"turn", s.turn()}}};
    }
    log_event({{"session", id}, {"event", "feedback"}, {"value", value}, {"item_id", item ? json(*item) : json(nullptr)}});
    return {200, {{"ok", true}, {"status", to_string(s.status())}, {"turn", s.active() ? s.turn() : s.turns_used()}}};
}

ServiceResponse SessionService::state(const std::string& id) {
    ServiceResponse err;
    auto entry = find(id, err);
    if (!entry) return err;
    std::lock_guard lock(entry->mutex);
    entry->last_used = clock_();
    const Session& s = *entry->session;

    json answers = json::array();
    for (const auto& [attr, yes] : s.answers())
        answers.push_back({{"attribute_id", attr}, {"label", forest_->vocabulary.label(attr)}, {"value", yes ? "yes" : "no"}});
    json history = json::array();
    for (const auto& t : s.history()) {
        json h = action_to_json(*forest_, t.action, t.turn);
        h["feedback"] = to_string(t.feedback);
        h["tree"] = t.tree;
        h["node"] = t.node;
        history.push_back(h);
    }
    const auto& off = s.feedback_offset();
    return {200,
            {{"session_id", id},
             {"status", to_string(s.status())},
             {"turn", s.active() ? s.turn() : s.turns_used()},
             {"max_turns", s.config().max_turns},
             {"answers", answers},
             {"excluded_count", s.excluded_items().size()},
             {"current_tree", s.current_tree()},
             {"visited_trees", s.visited_trees()},
             {"exhausted", s.exhausted()},
             {"pending", s.pending() ? action_to_json(*forest_, *s.pending(), s.turn()) : json(nullptr)},
             {"feedback_offset_norm", std::sqrt(dot(off, off))},
             {"history", history}}};
}

ServiceResponse SessionService::model_info() const {
    return {200,
            {{"n_items", forest_->num_items()},
             {"n_attributes", forest_->vocabulary.size()},
             {"n_trees", forest_->trees.size()},
             {"d", forest_->dim()},
             {"K", options_.policy.top_k},
             {"T", options_.policy.max_turns}}};
}

void install_routes(httplib::Server& server, SessionService& service) {
    auto reply = [](httplib::Response& res, const ServiceResponse& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    server.Post("/sessions", [&, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.create(req.body));
    });
    server.Get(R"(/sessions/([^/]+)/next)", [&, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.next(req.matches[1]));
    });
    server.Post(R"(/sessions/([^/]+)/answer)", [&, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.answer(req.matches[1], req.body));
    });
    server.Post(R"(/sessions/([^/]+)/feedback)", [&, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.feedback(req.matches[1], req.body));
    });
    server.Get(R"(/sessions/([^/]+)/state)", [&, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.state(req.matches[1]));
    });
    server.Get("/model/info", [&, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, service.model_info());
    });
    // Browser clients served from another origin.
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.status = 204;
    });
}

}  // namespace factcrs
