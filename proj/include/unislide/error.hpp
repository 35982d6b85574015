#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace unislide {

enum class Errc {
    // data errors
    missing_file,
    schema_violation,
    dangling_reference,
    empty_deck,
    unordered_slides,
    missing_annotations,
    target_not_found,
    precondition,
    division_by_zero,
    empty_item_list,
    non_positive_weight,
    arity,
    // model/backend errors
    backend_unavailable,
    token_limit,
    malformed_response,
    unparseable_verdict,
    unparseable_plan,
    unparseable_outline,
    unparseable_description,
    unfillable_schema,
    unplannable_page,
    generation_failed,
    render_crash,
    render_timeout,
    // study service
    insufficient_decks,
    duplicate_submission,
    unknown_case,
    unknown_session,
    study_closed,
};

enum class ErrorCategory { data, backend, usage };

std::string_view to_string(Errc code);
ErrorCategory category_of(Errc code);

/// Error carrying a machine-checkable code. Every failure the library raises
/// on purpose is one of these; anything else is a bug.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message);

    Errc code() const noexcept { return code_; }
    /// The text after the "Code: " prefix of what().
    const std::string& message() const noexcept { return message_; }
    ErrorCategory category() const noexcept { return category_of(code_); }

    /// DanglingReference is reported as a schema-class failure.
    bool is_schema_error() const noexcept {
        return code_ == Errc::schema_violation || code_ == Errc::dangling_reference;
    }

private:
    Errc code_;
    std::string message_;
};

}  // namespace unislide
