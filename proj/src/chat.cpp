#include "factcrs/chat.hpp"

#include <algorithm>
#include <cctype>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace factcrs {

namespace {

std::string lower_trim(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

ChatResult run_chat(const InteractionForest& forest, const PolicyConfig& config, std::uint64_t seed, std::istream& in,
                    std::ostream& out) {
    Session session(forest, config, seed);
    std::string line;
    while (const AgentAction* action = session.try_next_action()) {
        out << "[turn " << session.turn() << "/" << config.max_turns << "] ";
        if (const auto* ask = std::get_if<Ask>(action)) {
            out << "Do you prefer " << forest.vocabulary.label(ask->attribute) << "? [y/n]\n> " << std::flush;
            while (true) {
                if (!std::getline(in, line)) {
                    out << "\ninput closed; session abandoned\n";
                    return {session.status(), session.turns_used()};
                }
                const std::string a = lower_trim(line);
                if (a == "y" || a == "yes") {
                    session.answer(true);
                    break;
                }
                if (a == "n" || a == "no") {
                    session.answer(false);
                    break;
                }
                out << "please answer y or n\n> " << std::flush;
            }
            continue;
        }

        const auto& rec = std::get<Recommend>(*action);
        out << "Recommended items:\n";
        for (std::size_t r = 0; r < rec.items.size(); ++r)
            out << std::setw(4) << r + 1 << ". item " << rec.items[r].item << "  (score " << std::fixed
                << std::setprecision(4) << rec.items[r].score << ")\n";
        out.unsetf(std::ios::fixed);
        out << "type 'accept <k>' or 'reject'\n> " << std::flush;
        while (true) {
            if (!std::getline(in, line)) {
                out << "\ninput closed; session abandoned\n";
                return {session.status(), session.turns_used()};
            }
            std::istringstream words(lower_trim(line));
            std::string verb;
            words >> verb;
            if (verb == "reject") {
                session.reject();
                break;
            }
            if (verb == "accept") {
                std::size_t k = 0;
                std::string extra;
                if (words >> k && !(words >> extra) && k >= 1 && k <= rec.items.size()) {
                    session.accept(rec.items[k - 1].item);
                    break;
                }
            }
            out << "expected 'accept <k>' with 1 <= k <= " << rec.items.size() << ", or 'reject'\n> " << std::flush;
        }
    }

    if (session.status() == SessionStatus::succeeded)
        out << "Success: recommendation accepted after " << session.turns_used() << " turns.\n";
    else
        out << "Failure: no accepted recommendation within " << session.turns_used() << " turns.\n";
    return {session.status(), session.turns_used()};
}

}  // namespace factcrs
