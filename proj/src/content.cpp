#include "unislide/content.hpp"

#include <array>
#include <functional>

#include "unislide/text.hpp"

namespace unislide::content {

namespace {

constexpr std::array kStopwords = {
    "a",    "an",   "and",  "are",   "as",    "at",   "be",   "been", "but",  "by",    "can",   "for",
    "from", "has",  "have", "in",    "into",  "is",   "it",   "its",  "of",   "on",    "or",    "that",
    "the",  "their", "then", "there", "these", "this", "those", "to",  "was",  "we",    "were",  "which",
    "while", "with", "will", "would", "our",  "than", "also", "such", "not",  "more",  "most",  "about",
    "all",  "any",  "each", "both",  "how",   "what", "when", "where", "who", "why",   "do",    "does",
    "did",  "so",   "if",   "no",    "over",  "under", "up",  "out",  "one",  "they",  "them",  "you",
    "your", "he",   "she",  "his",   "her",   "i",    "me",   "my",   "us",   "via",   "per",   "make"};

bool stopword(const std::string& t) {
    for (const char* s : kStopwords) {
        if (t == s) return true;
    }
    return false;
}

}  // namespace

std::set<std::string> content_tokens(std::string_view s) {
    std::set<std::string> out;
    for (auto& t : text::tokenize(s)) {
        if (text::is_number_token(t) || (t.size() >= 2 && !stopword(t))) out.insert(std::move(t));
    }
    return out;
}

double coverage(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty()) return 0.0;
    std::size_t hit = 0;
    for (const auto& t : a) hit += b.count(t);
    return static_cast<double>(hit) / static_cast<double>(a.size());
}

std::string slide_text(std::string_view markup) { return html::visible_text(html::parse(markup).root); }

bool segment_matches(const std::set<std::string>& segment, const std::set<std::string>& point) {
    if (segment.empty() || point.empty()) return false;
    std::size_t hit = 0;
    for (const auto& t : segment) hit += point.count(t);
    const double of_point = static_cast<double>(hit) / static_cast<double>(point.size());
    const double of_segment = static_cast<double>(hit) / static_cast<double>(segment.size());
    return of_point >= 0.5 || of_segment >= 0.6;
}

std::string element_type_of(const html::Node& root, const html::Node& target) {
    std::string found;
    std::function<bool(const html::Node&, const std::string&)> walk = [&](const html::Node& n,
                                                                          const std::string& inherited) {
        std::string here = inherited;
        if (const auto* a = n.attr("data-el")) here = *a;
        if (&n == &target) {
            found = here;
            return true;
        }
        for (const auto& c : n.children) {
            if (walk(c, here)) return true;
        }
        return false;
    };
    walk(root, "");
    return found;
}

}  // namespace unislide::content
