#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unislide/gateway.hpp"
#include "unislide/narrative.hpp"
#include "unislide/task.hpp"

namespace unislide::style {

enum class SlotKind { color, length, family, enumeration };

struct Slot {
    std::string name;
    SlotKind kind = SlotKind::color;
    int min = 0;  // lengths, in px
    int max = 0;
    std::vector<std::string> options;  // families and enumerations
};

struct StyleSchema {
    int version = 1;
    std::vector<Slot> slots;
    std::vector<std::string> type_hierarchy;  // largest first
    std::vector<std::string> spacing_scale;   // smallest first

    const Slot* find(const std::string& name) const;
    static StyleSchema from_json(const nlohmann::json& j);
};

/// The schema shipped in schemas/style_schema.json.
const StyleSchema& default_schema();

using TokenMap = std::map<std::string, std::string>;

struct StyleContract {
    TokenMap shared;
    TokenMap opening;
    TokenMap body;
    TokenMap ending;

    const TokenMap& overrides(task::SlideRole role) const;
};

struct StyleViolation {
    std::string code;    // MissingSlot, UnknownToken, InvalidColor, OutOfDomain, HierarchyInversion, SpacingOrder
    std::string module;  // shared, opening, body, ending
    std::string slot;
    std::string message;
};

/// Checks a single value against its slot's domain; empty when legal.
std::string check_value(const Slot& slot, const std::string& value);

std::vector<StyleViolation> validate_style(const StyleContract& contract, const StyleSchema& schema);

/// Shared tokens with the role's overrides applied.
TokenMap resolve_role_style(const StyleContract& contract, task::SlideRole role);

/// Parses "<n>px"; nullopt for anything else.
std::optional<int> parse_px(const std::string& value);

/// `:root{--name:value;...}` with family names quoted and a generic fallback.
std::string css_variables(const TokenMap& tokens);

struct InduceOptions {
    double temperature = 0.4;
    int max_tokens = 2048;
};

/// Constrained slot filling. One reprompt on a violation, then UnfillableSchema.
StyleContract induce_style(const narrative::Outline& outline, const StyleSchema& schema, gateway::Backend& llm,
                           const InduceOptions& options = {});

/// Slot listing given to the model.
std::string describe_schema(const StyleSchema& schema);

nlohmann::ordered_json to_json(const StyleContract& c);
StyleContract contract_from_json(const nlohmann::json& j);

}  // namespace unislide::style
