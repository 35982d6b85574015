#include "unislide/error.hpp"

namespace unislide {

std::string_view to_string(Errc code) {
    switch (code) {
        case Errc::missing_file: return "MissingFile";
        case Errc::schema_violation: return "SchemaViolation";
        case Errc::dangling_reference: return "DanglingReference";
        case Errc::empty_deck: return "EmptyDeck";
        case Errc::unordered_slides: return "UnorderedSlides";
        case Errc::missing_annotations: return "MissingAnnotations";
        case Errc::target_not_found: return "TargetNotFound";
        case Errc::precondition: return "PreconditionViolated";
        case Errc::division_by_zero: return "DivisionByZero";
        case Errc::empty_item_list: return "EmptyItemList";
        case Errc::non_positive_weight: return "NonPositiveWeight";
        case Errc::arity: return "ArityViolation";
        case Errc::backend_unavailable: return "BackendUnavailable";
        case Errc::token_limit: return "TokenLimit";
        case Errc::malformed_response: return "MalformedResponse";
        case Errc::unparseable_verdict: return "UnparseableVerdict";
        case Errc::unparseable_plan: return "UnparseablePlan";
        case Errc::unparseable_outline: return "UnparseableOutline";
        case Errc::unparseable_description: return "UnparseableDescription";
        case Errc::unfillable_schema: return "UnfillableSchema";
        case Errc::unplannable_page: return "UnplannablePage";
        case Errc::generation_failed: return "GenerationFailed";
        case Errc::render_crash: return "RenderCrash";
        case Errc::render_timeout: return "Timeout";
        case Errc::insufficient_decks: return "InsufficientDecks";
        case Errc::duplicate_submission: return "DuplicateSubmission";
        case Errc::unknown_case: return "UnknownCase";
        case Errc::unknown_session: return "UnknownSession";
        case Errc::study_closed: return "StudyClosed";
    }
    return "Unknown";
}

ErrorCategory category_of(Errc code) {
    switch (code) {
        case Errc::backend_unavailable:
        case Errc::token_limit:
        case Errc::malformed_response:
        case Errc::unparseable_verdict:
        case Errc::unparseable_plan:
        case Errc::unparseable_outline:
        case Errc::unparseable_description:
        case Errc::unfillable_schema:
        case Errc::unplannable_page:
        case Errc::generation_failed:
        case Errc::render_crash:
        case Errc::render_timeout:
            return ErrorCategory::backend;
        default:
            return ErrorCategory::data;
    }
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

}  // namespace unislide
