#include "unislide/style.hpp"

#include <algorithm>
#include <regex>

#include "unislide/assets.hpp"
#include "unislide/text.hpp"

namespace unislide::style {

const Slot* StyleSchema::find(const std::string& name) const {
    for (const auto& s : slots) {
        if (s.name == name) return &s;
    }
    return nullptr;
}

StyleSchema StyleSchema::from_json(const nlohmann::json& j) {
    StyleSchema s;
    try {
        s.version = j.value("version", 1);
        for (const auto& e : j.at("slots")) {
            Slot slot;
            slot.name = e.at("name").get<std::string>();
            const auto kind = e.at("kind").get<std::string>();
            if (kind == "color") {
                slot.kind = SlotKind::color;
            } else if (kind == "length") {
                slot.kind = SlotKind::length;
                slot.min = e.at("min").get<int>();
                slot.max = e.at("max").get<int>();
                if (slot.min > slot.max) throw Error(Errc::schema_violation, "slot " + slot.name + ": min > max");
            } else if (kind == "family" || kind == "enum") {
                slot.kind = kind == "family" ? SlotKind::family : SlotKind::enumeration;
                slot.options = e.at("options").get<std::vector<std::string>>();
                if (slot.options.empty()) throw Error(Errc::schema_violation, "slot " + slot.name + " has no options");
            } else {
                throw Error(Errc::schema_violation, "slot " + slot.name + ": unknown kind " + kind);
            }
            s.slots.push_back(std::move(slot));
        }
        s.type_hierarchy = j.value("type_hierarchy", std::vector<std::string>{});
        s.spacing_scale = j.value("spacing_scale", std::vector<std::string>{});
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::schema_violation, std::string("style schema: ") + e.what());
    }
    for (const auto& name : s.type_hierarchy) {
        if (!s.find(name)) throw Error(Errc::schema_violation, "type hierarchy names unknown slot " + name);
    }
    for (const auto& name : s.spacing_scale) {
        if (!s.find(name)) throw Error(Errc::schema_violation, "spacing scale names unknown slot " + name);
    }
    return s;
}

const StyleSchema& default_schema() {
    static const StyleSchema schema =
        StyleSchema::from_json(nlohmann::json::parse(assets::text("schemas/style_schema.json")));
    return schema;
}

const TokenMap& StyleContract::overrides(task::SlideRole role) const {
    switch (role) {
        case task::SlideRole::opening: return opening;
        case task::SlideRole::body: return body;
        case task::SlideRole::ending: return ending;
    }
    return body;
}

std::optional<int> parse_px(const std::string& value) {
    static const std::regex px(R"(^(\d{1,4})px$)");
    std::smatch m;
    if (!std::regex_match(value, m, px)) return std::nullopt;
    return std::stoi(m[1].str());
}

std::string check_value(const Slot& slot, const std::string& value) {
    switch (slot.kind) {
        case SlotKind::color: {
            static const std::regex hex(R"(^#[0-9A-Fa-f]{6}$)");
            if (!std::regex_match(value, hex)) return "InvalidColor";
            return {};
        }
        case SlotKind::length: {
            const auto px = parse_px(value);
            if (!px || *px < slot.min || *px > slot.max) return "OutOfDomain";
            return {};
        }
        case SlotKind::family:
        case SlotKind::enumeration:
            if (std::find(slot.options.begin(), slot.options.end(), value) == slot.options.end()) return "OutOfDomain";
            return {};
    }
    return "OutOfDomain";
}

namespace {

void check_order(const TokenMap& tokens, const std::vector<std::string>& names, bool decreasing,
                 const std::string& code, const std::string& module, std::vector<StyleViolation>& out) {
    for (std::size_t i = 1; i < names.size(); ++i) {
        const auto a = tokens.find(names[i - 1]);
        const auto b = tokens.find(names[i]);
        if (a == tokens.end() || b == tokens.end()) continue;
        const auto pa = parse_px(a->second);
        const auto pb = parse_px(b->second);
        if (!pa || !pb) continue;
        const bool ok = decreasing ? *pa > *pb : *pa < *pb;
        if (!ok) {
            out.push_back({code, module, names[i],
                           names[i - 1] + " = " + a->second + ", " + names[i] + " = " + b->second});
        }
    }
}

void check_module(const TokenMap& tokens, const StyleSchema& schema, const std::string& module,
                  std::vector<StyleViolation>& out) {
    for (const auto& [name, value] : tokens) {
        const auto* slot = schema.find(name);
        if (!slot) {
            out.push_back({"UnknownToken", module, name, "token is not defined by the schema"});
            continue;
        }
        if (auto code = check_value(*slot, value); !code.empty())
            out.push_back({code, module, name, "value '" + value + "' is outside the slot domain"});
    }
}

}  // namespace

std::vector<StyleViolation> validate_style(const StyleContract& contract, const StyleSchema& schema) {
    std::vector<StyleViolation> out;
    for (const auto& slot : schema.slots) {
        if (!contract.shared.count(slot.name)) out.push_back({"MissingSlot", "shared", slot.name, "slot is not filled"});
    }
    check_module(contract.shared, schema, "shared", out);
    check_order(contract.shared, schema.type_hierarchy, true, "HierarchyInversion", "shared", out);
    check_order(contract.shared, schema.spacing_scale, false, "SpacingOrder", "shared", out);

    const std::pair<task::SlideRole, const char*> roles[] = {
        {task::SlideRole::opening, "opening"}, {task::SlideRole::body, "body"}, {task::SlideRole::ending, "ending"}};
    for (const auto& [role, module] : roles) {
        const auto& ov = contract.overrides(role);
        check_module(ov, schema, module, out);
        if (ov.empty()) continue;
        // ordering problems introduced by the overrides themselves
        std::vector<StyleViolation> shared_only, resolved;
        check_order(contract.shared, schema.type_hierarchy, true, "HierarchyInversion", module, shared_only);
        check_order(contract.shared, schema.spacing_scale, false, "SpacingOrder", module, shared_only);
        const auto merged = resolve_role_style(contract, role);
        check_order(merged, schema.type_hierarchy, true, "HierarchyInversion", module, resolved);
        check_order(merged, schema.spacing_scale, false, "SpacingOrder", module, resolved);
        for (auto& v : resolved) {
            const bool inherited = std::any_of(shared_only.begin(), shared_only.end(), [&](const StyleViolation& s) {
                return s.slot == v.slot && s.code == v.code;
            });
            if (!inherited) out.push_back(std::move(v));
        }
    }
    return out;
}

TokenMap resolve_role_style(const StyleContract& contract, task::SlideRole role) {
    TokenMap out = contract.shared;
    for (const auto& [k, v] : contract.overrides(role)) out[k] = v;
    return out;
}

std::string css_variables(const TokenMap& tokens) {
    std::string out = ":root{";
    for (const auto& [k, v] : tokens) {
        out += "--" + k + ":";
        if (k.starts_with("font-")) {
            out += "\"" + v + "\", " + (v == "Georgia" || v == "Merriweather" ? "serif" : "sans-serif");
        } else {
            out += v;
        }
        out += ";";
    }
    return out + "}";
}

std::string describe_schema(const StyleSchema& schema) {
    std::string out;
    for (const auto& s : schema.slots) {
        out += s.name + ": ";
        switch (s.kind) {
            case SlotKind::color: out += "color #RRGGBB"; break;
            case SlotKind::length:
                out += "length " + std::to_string(s.min) + "px.." + std::to_string(s.max) + "px";
                break;
            case SlotKind::family:
            case SlotKind::enumeration: out += "one of " + text::join(s.options, ", "); break;
        }
        out += "\n";
    }
    if (!schema.type_hierarchy.empty())
        out += "strictly decreasing: " + text::join(schema.type_hierarchy, " > ") + "\n";
    if (!schema.spacing_scale.empty())
        out += "strictly increasing: " + text::join(schema.spacing_scale, " < ") + "\n";
    return out;
}

nlohmann::ordered_json to_json(const StyleContract& c) {
    nlohmann::ordered_json j;
    auto map = [](const TokenMap& m) {
        nlohmann::ordered_json o = nlohmann::ordered_json::object();
        for (const auto& [k, v] : m) o[k] = v;
        return o;
    };
    j["shared"] = map(c.shared);
    j["opening"] = map(c.opening);
    j["body"] = map(c.body);
    j["ending"] = map(c.ending);
    return j;
}

StyleContract contract_from_json(const nlohmann::json& j) {
    auto map = [&](const char* key) {
        TokenMap m;
        if (!j.contains(key)) return m;
        const auto& o = j.at(key);
        if (!o.is_object()) throw Error(Errc::schema_violation, std::string("style module ") + key + " is not an object");
        for (const auto& [k, v] : o.items()) {
            if (!v.is_string()) throw Error(Errc::schema_violation, "token " + k + " is not a string");
            m[k] = v.get<std::string>();
        }
        return m;
    };
    if (!j.is_object() || !j.contains("shared")) throw Error(Errc::schema_violation, "style contract lacks shared tokens");
    StyleContract c;
    c.shared = map("shared");
    c.opening = map("opening");
    c.body = map("body");
    c.ending = map("ending");
    return c;
}

StyleContract induce_style(const narrative::Outline& outline, const StyleSchema& schema, gateway::Backend& llm,
                           const InduceOptions& options) {
    std::string pages;
    for (std::size_t i = 0; i < outline.pages.size(); ++i) {
        pages += std::to_string(i) + ". " + outline.pages[i].title + " | " + outline.pages[i].key_message + "\n";
    }
    gateway::PromptBuilder pb("style_induction");
    pb.section("INSTRUCTIONS", assets::text("prompts/style_induction.txt"));
    pb.section("SCHEMA", describe_schema(schema));
    pb.section("OUTLINE", pages);

    StyleContract result;
    gateway::request_json(
        pb.str(), llm, options.temperature, options.max_tokens,
        [&](const nlohmann::json& j) -> std::string {
            StyleContract c;
            try {
                c = contract_from_json(j);
            } catch (const Error& e) {
                return e.what();
            }
            const auto violations = validate_style(c, schema);
            if (!violations.empty()) {
                std::string msg;
                for (const auto& v : violations) msg += v.code + " " + v.module + "." + v.slot + ": " + v.message + "\n";
                return msg;
            }
            result = std::move(c);
            return {};
        },
        Errc::unfillable_schema);
    return result;
}

}  // namespace unislide::style
