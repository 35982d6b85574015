#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unislide/gateway.hpp"
#include "unislide/narrative.hpp"
#include "unislide/style.hpp"
#include "unislide/task.hpp"
#include "unislide/visual_design.hpp"

namespace unislide::pipeline {

/// Component switches. A disabled component is bypassed, not removed:
/// retrieval off leaves every grounding empty, alignment off attaches no
/// figures, layout off generates without a blueprint, refinement off keeps the
/// first-pass markup.
struct Components {
    std::string name = "g";
    bool evidence_retrieval = true;
    bool visual_alignment = true;
    bool layout_planning = true;
    bool perceptual_refinement = true;
};

/// The seven ablation configurations a..g; g is the full pipeline.
const std::vector<Components>& ablation_configs();
std::optional<Components> ablation_config(std::string_view name);

struct Backends {
    gateway::Backend* llm = nullptr;
    gateway::Backend* vision = nullptr;    // defaults to llm
    gateway::Backend* embedder = nullptr;  // defaults to llm
    visual::Renderer* renderer = nullptr;  // defaults to a StubRenderer
};

struct PipelineOptions {
    Components components;
    std::uint64_t seed = 0;
    bool dump_intermediates = false;
    int max_refine_iterations = 5;
    narrative::KnowledgeOptions knowledge;
    narrative::RetrievalOptions retrieval;
    narrative::AlignmentOptions alignment;
    visual::GenerateOptions generation;
    double overlap_threshold = 0.25;
};

struct PipelineResult {
    task::Deck deck;
    narrative::KnowledgeBase kb;
    narrative::SlidePlan plan;
    narrative::Outline outline;
    std::vector<narrative::PageGrounding> grounding;
    std::vector<narrative::PageDescription> descriptions;
    style::StyleContract style;
    std::vector<std::optional<visual::LayoutBlueprint>> blueprints;
    std::vector<visual::RefineResult> refinements;
    std::vector<std::string> warnings;
    std::string deck_hash;
};

/// Task to deck, written to out_dir (slide_NN.html, slide_NN.png, assets/,
/// deck.json, run.json, plus intermediates/ when requested). Failures are
/// rethrown with the failing module's name prefixed.
PipelineResult run_pipeline(const task::Task& task, const Backends& backends, const PipelineOptions& options,
                            const std::filesystem::path& out_dir);

/// Hex digest over the deck's slide hashes.
std::string deck_hash(const task::Deck& deck);

nlohmann::ordered_json to_json(const Components& c);

}  // namespace unislide::pipeline
