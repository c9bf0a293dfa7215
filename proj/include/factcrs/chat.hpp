#pragma once

// Terminal conversation: a human plays the simulator's role.

#include <cstdint>
#include <iosfwd>

#include "factcrs/forest.hpp"
#include "factcrs/policy.hpp"

namespace factcrs {

struct ChatResult {
    SessionStatus status = SessionStatus::active;  // active when input ended early
    std::size_t turns = 0;
};

/// Reads answers (`y`/`n`, `accept <k>`, `reject`) from `in` and writes prompts to `out`.
/// Invalid lines are re-prompted.
ChatResult run_chat(const InteractionForest& forest, const PolicyConfig& config, std::uint64_t seed, std::istream& in,
                    std::ostream& out);

}  // namespace factcrs
