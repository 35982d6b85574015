#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace unislide::html {

/// Minimal HTML tree. Offsets are byte positions in the parsed source so
/// callers can splice the original markup without re-serializing it.
struct Node {
    enum class Kind { document, element, text, comment, doctype };

    Kind kind = Kind::element;
    std::string tag;  // lowercase
    std::vector<std::pair<std::string, std::string>> attributes;
    std::vector<Node> children;
    std::string text;  // decoded text for text nodes, raw content for style/script
    std::size_t begin = 0;
    std::size_t end = 0;        // one past the closing tag (or start tag for void elements)
    std::size_t inner_begin = 0;
    std::size_t inner_end = 0;

    const std::string* attr(std::string_view name) const;
    bool has_class(std::string_view cls) const;
};

struct ParseResult {
    Node root;
    std::vector<std::string> errors;  // well-formedness problems, empty when clean
};

ParseResult parse(std::string_view markup);

bool is_void_element(std::string_view tag);

/// Visible text of a subtree. Block-level boundaries become newlines;
/// <head>, <style> and <script> are skipped.
std::string visible_text(const Node& node);

void visit(const Node& node, const std::function<void(const Node&)>& fn);
std::vector<const Node*> find_all(const Node& root, const std::function<bool(const Node&)>& pred);
const Node* find_first(const Node& root, const std::function<bool(const Node&)>& pred);

/// Text-bearing blocks (headings, paragraphs, list items, captions, cells)
/// that do not contain another such block.
std::vector<const Node*> text_segments(const Node& root);

std::string escape_text(std::string_view s);
std::string escape_attribute(std::string_view s);
std::string decode_entities(std::string_view s);

/// Parses a `style="a:b; c:d"` attribute into ordered property pairs.
std::vector<std::pair<std::string, std::string>> parse_inline_style(std::string_view style);

}  // namespace unislide::html
