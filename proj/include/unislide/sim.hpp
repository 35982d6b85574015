#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "unislide/gateway.hpp"

namespace unislide::sim {

struct SimOptions {
    std::uint64_t seed = 0;
    double jitter = 0.0;  // +- amplitude added to 0-10 rubric scores
};

/// Deterministic stand-in for every prompt kind the workbench issues.
/// Generation stages are extractive (they only copy text they were given) and
/// judges match content tokens, so perturbing a deck moves exactly the metrics
/// whose evidence changed. Unknown kinds yield nullopt.
std::optional<std::string> respond(const gateway::CompletionRequest& request, const SimOptions& options);

gateway::Handler responder(SimOptions options);

/// Mock backend whose fallback is the simulated responder; script rules
/// still take precedence.
std::shared_ptr<gateway::MockBackend> make_mock(gateway::MockScript script);

}  // namespace unislide::sim
