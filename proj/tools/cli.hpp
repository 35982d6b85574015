#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "unislide/gateway.hpp"

namespace unislide::cli {

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kData = 2;
inline constexpr int kBackend = 3;

/// "mock" (simulated responder), "mock:<script.json>" (scripted rules over
/// the simulated responder) or "http" (OpenAI-compatible endpoint from
/// UNISLIDE_API_BASE / UNISLIDE_API_KEY / UNISLIDE_MODEL, with retries).
std::shared_ptr<gateway::Backend> make_backend(const std::string& spec, std::uint64_t seed);

/// Runs the command line (args exclude the program name). unislide.toml in
/// the working directory, or the file named by --config, supplies defaults.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace unislide::cli
