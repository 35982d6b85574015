#include "unislide/assets.hpp"

#include "unislide/text.hpp"

namespace unislide::assets {

const std::string& text(const std::string& path) {
    const auto& table = text_assets();
    const auto it = table.find(path);
    if (it == table.end()) throw Error(Errc::missing_file, "embedded asset " + path);
    return it->second;
}

gateway::Rubric rubric(const std::string& id, const std::string& kind) {
    const auto& body = text("rubrics/" + id + ".txt");
    gateway::Rubric r;
    r.id = id;
    r.kind = kind;
    const auto nl = body.find('\n');
    const auto first = text::trim(body.substr(0, nl));
    if (first == "STATES: ternary") {
        r.states = gateway::StateSet::ternary;
    } else if (first == "STATES: binary") {
        r.states = gateway::StateSet::binary;
    } else if (first == "STATES: score10") {
        r.states = gateway::StateSet::score10;
    } else {
        throw Error(Errc::schema_violation, "rubric " + id + " lacks a STATES line");
    }
    r.text = nl == std::string::npos ? std::string() : text::trim(body.substr(nl + 1));
    return r;
}

}  // namespace unislide::assets
