#include "unislide/html.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "unislide/text.hpp"

namespace unislide::html {

namespace {

constexpr std::array kVoidElements = {"area", "base", "br",   "col",   "embed", "hr",  "img",
                                      "input", "link", "meta", "source", "track", "wbr"};

constexpr std::array kBlockElements = {"p",  "div", "li", "ul", "ol", "h1", "h2", "h3", "h4", "h5",
                                       "h6", "section", "figure", "figcaption", "table", "tr",
                                       "br", "header", "footer", "article", "blockquote"};

constexpr std::array kSegmentElements = {"h1", "h2", "h3", "h4", "h5", "h6", "p",
                                         "li", "figcaption", "td", "th", "blockquote"};

bool contains(const auto& list, std::string_view tag) {
    return std::find(list.begin(), list.end(), tag) != list.end();
}

class Parser {
public:
    explicit Parser(std::string_view src) : src_(src) {}

    ParseResult run() {
        ParseResult result;
        result.root.kind = Node::Kind::document;
        result.root.begin = 0;
        result.root.end = src_.size();
        result.root.inner_begin = 0;
        result.root.inner_end = src_.size();
        // Pointers into children vectors are invalidated by push_back, so the
        // open-element chain is tracked by child index paths instead.
        std::vector<std::vector<std::size_t>> paths{{}};
        auto current = [&]() -> Node& {
            Node* n = &result.root;
            for (std::size_t idx : paths.back()) n = &n->children[idx];
            return *n;
        };
        auto node_at = [&](const std::vector<std::size_t>& path) -> Node& {
            Node* n = &result.root;
            for (std::size_t idx : path) n = &n->children[idx];
            return *n;
        };

        while (pos_ < src_.size()) {
            if (src_[pos_] != '<') {
                const auto next = src_.find('<', pos_);
                const auto stop = next == std::string_view::npos ? src_.size() : next;
                Node t;
                t.kind = Node::Kind::text;
                t.begin = pos_;
                t.end = stop;
                t.text = decode_entities(src_.substr(pos_, stop - pos_));
                current().children.push_back(std::move(t));
                pos_ = stop;
                continue;
            }
            if (src_.substr(pos_, 4) == "<!--") {
                const auto close = src_.find("-->", pos_ + 4);
                Node c;
                c.kind = Node::Kind::comment;
                c.begin = pos_;
                if (close == std::string_view::npos) {
                    result.errors.push_back("unterminated comment");
                    pos_ = src_.size();
                } else {
                    pos_ = close + 3;
                }
                c.end = pos_;
                current().children.push_back(std::move(c));
                continue;
            }
            if (src_.substr(pos_, 2) == "<!" || src_.substr(pos_, 2) == "<?") {
                const auto close = src_.find('>', pos_);
                Node d;
                d.kind = Node::Kind::doctype;
                d.begin = pos_;
                pos_ = close == std::string_view::npos ? src_.size() : close + 1;
                d.end = pos_;
                current().children.push_back(std::move(d));
                continue;
            }
            if (src_.substr(pos_, 2) == "</") {
                const auto close = src_.find('>', pos_);
                if (close == std::string_view::npos) {
                    result.errors.push_back("unterminated end tag at byte " + std::to_string(pos_));
                    pos_ = src_.size();
                    break;
                }
                const auto name = text::to_lower_ascii(text::trim(src_.substr(pos_ + 2, close - pos_ - 2)));
                // find matching open element
                std::size_t match = paths.size();
                for (std::size_t i = paths.size(); i-- > 1;) {
                    if (node_at(paths[i]).tag == name) {
                        match = i;
                        break;
                    }
                }
                if (match == paths.size()) {
                    result.errors.push_back("stray end tag </" + name + ">");
                } else {
                    for (std::size_t i = paths.size() - 1; i > match; --i) {
                        Node& unclosed = node_at(paths[i]);
                        result.errors.push_back("unclosed <" + unclosed.tag + "> before </" + name + ">");
                        unclosed.inner_end = pos_;
                        unclosed.end = pos_;
                    }
                    Node& open = node_at(paths[match]);
                    open.inner_end = pos_;
                    open.end = close + 1;
                    paths.resize(match);
                }
                pos_ = close + 1;
                continue;
            }
            // start tag
            Node el;
            el.kind = Node::Kind::element;
            el.begin = pos_;
            std::size_t i = pos_ + 1;
            const auto name_start = i;
            while (i < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[i])) || src_[i] == '-')) ++i;
            if (i == name_start) {
                // a bare '<' in text
                Node t;
                t.kind = Node::Kind::text;
                t.begin = pos_;
                t.end = pos_ + 1;
                t.text = "<";
                current().children.push_back(std::move(t));
                result.errors.push_back("bare '<' at byte " + std::to_string(pos_));
                ++pos_;
                continue;
            }
            el.tag = text::to_lower_ascii(src_.substr(name_start, i - name_start));
            bool self_closing = false;
            bool terminated = false;
            while (i < src_.size()) {
                while (i < src_.size() && std::isspace(static_cast<unsigned char>(src_[i]))) ++i;
                if (i >= src_.size()) break;
                if (src_[i] == '>') {
                    ++i;
                    terminated = true;
                    break;
                }
                if (src_[i] == '/' && i + 1 < src_.size() && src_[i + 1] == '>') {
                    self_closing = true;
                    i += 2;
                    terminated = true;
                    break;
                }
                const auto an_start = i;
                while (i < src_.size() && !std::isspace(static_cast<unsigned char>(src_[i])) && src_[i] != '=' &&
                       src_[i] != '>' && !(src_[i] == '/' && i + 1 < src_.size() && src_[i + 1] == '>'))
                    ++i;
                std::string aname = text::to_lower_ascii(src_.substr(an_start, i - an_start));
                std::string avalue;
                while (i < src_.size() && std::isspace(static_cast<unsigned char>(src_[i]))) ++i;
                if (i < src_.size() && src_[i] == '=') {
                    ++i;
                    while (i < src_.size() && std::isspace(static_cast<unsigned char>(src_[i]))) ++i;
                    if (i < src_.size() && (src_[i] == '"' || src_[i] == '\'')) {
                        const char q = src_[i];
                        const auto vend = src_.find(q, i + 1);
                        if (vend == std::string_view::npos) {
                            result.errors.push_back("unterminated attribute value in <" + el.tag + ">");
                            i = src_.size();
                            break;
                        }
                        avalue = decode_entities(src_.substr(i + 1, vend - i - 1));
                        i = vend + 1;
                    } else {
                        const auto vs = i;
                        while (i < src_.size() && !std::isspace(static_cast<unsigned char>(src_[i])) && src_[i] != '>')
                            ++i;
                        avalue = decode_entities(src_.substr(vs, i - vs));
                    }
                }
                if (!aname.empty()) el.attributes.emplace_back(std::move(aname), std::move(avalue));
            }
            if (!terminated) {
                result.errors.push_back("unterminated start tag <" + el.tag + ">");
                pos_ = src_.size();
                break;
            }
            pos_ = i;
            el.inner_begin = pos_;
            if (self_closing || is_void_element(el.tag)) {
                el.end = pos_;
                el.inner_end = pos_;
                current().children.push_back(std::move(el));
                continue;
            }
            if (el.tag == "style" || el.tag == "script") {
                const std::string closing = "</" + el.tag;
                std::size_t close = pos_;
                for (;;) {
                    close = src_.find('<', close);
                    if (close == std::string_view::npos) break;
                    if (text::to_lower_ascii(src_.substr(close, closing.size())) == closing) break;
                    ++close;
                }
                if (close == std::string_view::npos) {
                    result.errors.push_back("unclosed <" + el.tag + ">");
                    el.text = std::string(src_.substr(pos_));
                    el.inner_end = el.end = src_.size();
                    pos_ = src_.size();
                } else {
                    el.text = std::string(src_.substr(pos_, close - pos_));
                    el.inner_end = close;
                    const auto gt = src_.find('>', close);
                    pos_ = gt == std::string_view::npos ? src_.size() : gt + 1;
                    el.end = pos_;
                }
                current().children.push_back(std::move(el));
                continue;
            }
            auto& parent = current();
            parent.children.push_back(std::move(el));
            auto path = paths.back();
            path.push_back(parent.children.size() - 1);
            paths.push_back(std::move(path));
        }
        for (std::size_t i = paths.size(); i-- > 1;) {
            Node& unclosed = node_at(paths[i]);
            result.errors.push_back("unclosed <" + unclosed.tag + "> at end of input");
            unclosed.inner_end = unclosed.end = src_.size();
        }
        return result;
    }

private:
    std::string_view src_;
    std::size_t pos_ = 0;
};

void collect_text(const Node& node, std::string& out) {
    if (node.kind == Node::Kind::text) {
        out += node.text;
        return;
    }
    if (node.kind != Node::Kind::element && node.kind != Node::Kind::document) return;
    if (node.tag == "head" || node.tag == "style" || node.tag == "script" || node.tag == "title") return;
    const bool block = contains(kBlockElements, node.tag);
    if (block && !out.empty() && out.back() != '\n') out.push_back('\n');
    for (const auto& c : node.children) collect_text(c, out);
    if (block && !out.empty() && out.back() != '\n') out.push_back('\n');
}

}  // namespace

const std::string* Node::attr(std::string_view name) const {
    for (const auto& [k, v] : attributes) {
        if (k == name) return &v;
    }
    return nullptr;
}

bool Node::has_class(std::string_view cls) const {
    const auto* c = attr("class");
    if (!c) return false;
    for (const auto& tok : text::split_lines(text::replace_all(*c, " ", "\n"))) {
        if (tok == cls) return true;
    }
    return false;
}

ParseResult parse(std::string_view markup) { return Parser(markup).run(); }

bool is_void_element(std::string_view tag) { return contains(kVoidElements, tag); }

std::string visible_text(const Node& node) {
    std::string raw;
    collect_text(node, raw);
    // collapse runs of spaces within lines, drop empty lines
    std::vector<std::string> lines;
    for (const auto& line : text::split_lines(raw)) {
        std::string collapsed;
        bool space = false;
        for (char c : line) {
            if (std::isspace(static_cast<unsigned char>(c))) {
                space = true;
                continue;
            }
            if (space && !collapsed.empty()) collapsed.push_back(' ');
            space = false;
            collapsed.push_back(c);
        }
        if (!collapsed.empty()) lines.push_back(std::move(collapsed));
    }
    return text::join(lines, "\n");
}

void visit(const Node& node, const std::function<void(const Node&)>& fn) {
    fn(node);
    for (const auto& c : node.children) visit(c, fn);
}

std::vector<const Node*> find_all(const Node& root, const std::function<bool(const Node&)>& pred) {
    std::vector<const Node*> out;
    visit(root, [&](const Node& n) {
        if (n.kind == Node::Kind::element && pred(n)) out.push_back(&n);
    });
    return out;
}

const Node* find_first(const Node& root, const std::function<bool(const Node&)>& pred) {
    if (root.kind == Node::Kind::element && pred(root)) return &root;
    for (const auto& c : root.children) {
        if (const auto* hit = find_first(c, pred)) return hit;
    }
    return nullptr;
}

std::vector<const Node*> text_segments(const Node& root) {
    auto is_segment = [](const Node& n) { return contains(kSegmentElements, n.tag); };
    std::vector<const Node*> out;
    std::function<void(const Node&)> walk = [&](const Node& n) {
        if (n.kind == Node::Kind::element && (n.tag == "head" || n.tag == "style" || n.tag == "script")) return;
        if (n.kind == Node::Kind::element && is_segment(n)) {
            if (!find_first(n, [&](const Node& inner) { return &inner != &n && is_segment(inner); })) {
                out.push_back(&n);
                return;
            }
        }
        for (const auto& c : n.children) walk(c);
    };
    walk(root);
    return out;
}

std::string escape_text(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string escape_attribute(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string decode_entities(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '&') {
            out.push_back(s[i]);
            continue;
        }
        const auto semi = s.find(';', i);
        if (semi == std::string_view::npos || semi - i > 10) {
            out.push_back('&');
            continue;
        }
        const auto name = s.substr(i + 1, semi - i - 1);
        std::u32string cp;
        if (name == "amp") cp = U"&";
        else if (name == "lt") cp = U"<";
        else if (name == "gt") cp = U">";
        else if (name == "quot") cp = U"\"";
        else if (name == "apos" || name == "#39") cp = U"'";
        else if (name == "nbsp") cp = U" ";
        else if (!name.empty() && name[0] == '#') {
            try {
                const bool hex = name.size() > 1 && (name[1] == 'x' || name[1] == 'X');
                const auto v = std::stoul(std::string(name.substr(hex ? 2 : 1)), nullptr, hex ? 16 : 10);
                cp.push_back(static_cast<char32_t>(v));
            } catch (...) {
            }
        }
        if (cp.empty()) {
            out.push_back('&');
            continue;
        }
        out += text::encode_utf8(cp);
        i = semi;
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> parse_inline_style(std::string_view style) {
    std::vector<std::pair<std::string, std::string>> out;
    std::size_t start = 0;
    while (start < style.size()) {
        auto semi = style.find(';', start);
        if (semi == std::string_view::npos) semi = style.size();
        const auto decl = style.substr(start, semi - start);
        const auto colon = decl.find(':');
        if (colon != std::string_view::npos) {
            auto k = text::to_lower_ascii(text::trim(decl.substr(0, colon)));
            auto v = text::trim(decl.substr(colon + 1));
            if (!k.empty()) out.emplace_back(std::move(k), std::move(v));
        } else if (!text::trim(decl).empty()) {
            out.emplace_back(text::to_lower_ascii(text::trim(decl)), "");
        }
        start = semi + 1;
    }
    return out;
}

}  // namespace unislide::html
