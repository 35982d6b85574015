#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "unislide/gateway.hpp"
#include "unislide/task.hpp"

namespace unislide::narrative {

struct Fact {
    std::string section_id;  // "<doc>#<section index>"
    std::string doc_id;
    std::string heading;
    std::string summary;
};

struct Chunk {
    int chunk_id = 0;
    std::string doc_id;
    task::CharRange range;  // code points within the document's full text
    std::string text;
};

struct KnowledgeBase {
    std::string card;
    std::vector<Fact> facts;
    std::vector<Chunk> chunks;
    std::vector<std::string> doc_ids;

    bool empty() const { return card.empty() && facts.empty() && chunks.empty(); }
};

struct KnowledgeOptions {
    std::size_t card_limit = 1200;
    std::size_t fact_limit = 1800;
    std::size_t summary_input = 3000;  // leading characters summarized when no abstract exists
    std::size_t window = 900;
    std::size_t overlap = 200;
};

/// Window starts at 0, window-overlap, 2*(window-overlap), ...; the last
/// window is the first that reaches the end of the text.
std::vector<task::CharRange> chunk_ranges(std::size_t length, std::size_t window = 900, std::size_t overlap = 200);
std::vector<std::string> chunk_text(std::string_view text, std::size_t window = 900, std::size_t overlap = 200);

std::vector<Chunk> build_chunks(const std::vector<task::SourceDocument>& docs, std::size_t window = 900,
                                std::size_t overlap = 200);

/// Cuts to at most `limit` code points, preferring a sentence end in the
/// last 100 code points before the limit.
std::string clip_to_limit(std::string_view text, std::size_t limit);

KnowledgeBase build_knowledge_base(const std::vector<task::SourceDocument>& docs, gateway::Backend& llm,
                                   const KnowledgeOptions& options = {});

// ---------------------------------------------------------------------------

struct SlideRoleDescriptor {
    task::SlideRole role = task::SlideRole::body;
    std::string purpose;
};

struct SlidePlan {
    std::string narrative_arc;
    int slide_count = 0;
    std::vector<SlideRoleDescriptor> slides;
};

struct OutlinePage {
    std::string title;
    std::string key_message;
    std::vector<std::string> content_points;
    std::string source;  // document id the page draws on, may be empty
};

struct Outline {
    std::vector<OutlinePage> pages;
};

struct Passage {
    int chunk_id = 0;
    std::string doc_id;
    std::string text;
    double similarity = 0;
};

struct PageGrounding {
    std::vector<Passage> passages;
    std::size_t total_chars() const;
};

struct FigureRef {
    std::string figure_id;
    std::string image_ref;  // relative to the task directory
    std::string caption;
    double coarse_similarity = 0;
    double fine_score = 0;
};

struct PageDescription {
    int index = 0;
    std::string title;
    std::string narrative;
    std::vector<std::string> bullets;
    std::vector<FigureRef> figures;
    task::SlideRole role = task::SlideRole::body;
};

struct StageOptions {
    double temperature = 0.4;
    int max_tokens = 8192;
};

/// Reads only the card and the instruction.
SlidePlan plan_narrative(const std::string& card, const std::string& instruction, gateway::Backend& llm,
                         const StageOptions& options = {});

/// Reads only the plan and the facts.
Outline induce_outline(const SlidePlan& plan, const std::vector<Fact>& facts, const std::string& instruction,
                       gateway::Backend& llm, const StageOptions& options = {});

struct ChunkIndex {
    std::vector<Chunk> chunks;
    std::vector<gateway::EmbeddingVector> embeddings;
};

ChunkIndex index_chunks(const std::vector<Chunk>& chunks, gateway::Backend& embedder);

struct RetrievalOptions {
    std::size_t max_passages = 12;
    std::size_t max_chars = 2000;
    double source_bonus = 0.05;
};

std::string page_query(const OutlinePage& page);

/// Ranks by cosine similarity (plus the source bonus), ties by ascending
/// chunk_id, and takes passages greedily until the next one would break a cap.
PageGrounding retrieve_evidence(const OutlinePage& page, const ChunkIndex& index, gateway::Backend& embedder,
                                const RetrievalOptions& options = {});

std::vector<PageDescription> synthesize_page_descriptions(const Outline& outline, const SlidePlan& plan,
                                                          const std::vector<PageGrounding>& grounding,
                                                          gateway::Backend& llm, const StageOptions& options = {});

struct FigureCandidate {
    task::FigureAsset figure;
    std::string image_path;  // resolved, for the vision model
};

struct AlignmentOptions {
    double coarse_threshold = 0.30;
    std::size_t max_per_page = 5;
    std::size_t context_chars = 600;  // +-300 around the figure
    bool exclusive = true;            // a figure lands on at most one page
    double temperature = 0.2;
};

std::string description_text(const PageDescription& d);

std::vector<PageDescription> align_visuals(const std::vector<FigureCandidate>& figures,
                                           std::vector<PageDescription> descriptions, gateway::Backend& embedder,
                                           gateway::Backend& vision_llm, const AlignmentOptions& options = {});

// JSON views of the intermediates (for --dump-intermediates and round-trips).
nlohmann::ordered_json to_json(const KnowledgeBase& kb);
nlohmann::ordered_json to_json(const SlidePlan& plan);
nlohmann::ordered_json to_json(const Outline& outline);
nlohmann::ordered_json to_json(const PageGrounding& g);
nlohmann::ordered_json to_json(const PageDescription& d);
Outline outline_from_json(const nlohmann::json& j);
SlidePlan plan_from_json(const nlohmann::json& j);
PageDescription description_from_json(const nlohmann::json& j);

}  // namespace unislide::narrative
