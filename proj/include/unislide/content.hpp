#pragma once

#include <set>
#include <string>
#include <string_view>

#include "unislide/html.hpp"

namespace unislide::content {

/// Lowercase tokens without stopwords; numbers are always kept.
std::set<std::string> content_tokens(std::string_view text);

/// |a & b| / |a|; 0 when a is empty.
double coverage(const std::set<std::string>& a, const std::set<std::string>& b);

/// Visible text of slide markup, skipping head, style and script.
std::string slide_text(std::string_view markup);

/// True when a text segment carries the point: it holds at least half of the
/// point's content tokens, or the point makes up at least 60% of the segment.
bool segment_matches(const std::set<std::string>& segment, const std::set<std::string>& point);

/// data-el of the closest ancestor-or-self carrying one, searched from root.
std::string element_type_of(const html::Node& root, const html::Node& target);

}  // namespace unislide::content
