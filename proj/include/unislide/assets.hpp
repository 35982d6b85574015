#pragma once

#include <map>
#include <string>

#include "unislide/gateway.hpp"

namespace unislide::assets {

/// Rubric, prompt and schema files compiled into the library, keyed by their
/// repository path (e.g. "rubrics/shared/engagement.txt").
const std::map<std::string, std::string>& text_assets();

/// Throws Error{missing_file} for unknown paths.
const std::string& text(const std::string& path);

/// Builds a rubric from `rubrics/<id>.txt`. The first line of each file is
/// `STATES: ternary|binary|score10`; the rest is the instruction text.
gateway::Rubric rubric(const std::string& id, const std::string& kind);

}  // namespace unislide::assets
