#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace synthtrips {

/// Machine-readable error codes shared by every module. The eval service
/// echoes these verbatim in problem-detail responses.
enum class Errc {
    malformed_record,
    duplicate_city,
    empty_kb,
    unknown_city,
    invalid_boundaries,
    duplicate_persona,
    empty_catalog,
    missing_embedding,
    dimension_mismatch,
    persona_required,
    context_invalid,
    missing_input,
    empty_city_list,
    template_error,
    transport,
    rate_limited,
    rejected,
    timeout,
    replay_miss,
    empty_input,
    empty_index,
    missing_sust_filter,
    group_too_small,
    misaligned_sets,
    storage_full,
    conflicting_record,
    empty_store,
    io_error,
    config_invalid,
    insufficient_queries,
    session_complete,
    unknown_session,
    already_rated,
    not_assigned,
    validation_failed,
    unauthorized,
};

constexpr std::string_view to_string(Errc code) {
    switch (code) {
    case Errc::malformed_record: return "malformed_record";
    case Errc::duplicate_city: return "duplicate_city";
    case Errc::empty_kb: return "empty_kb";
    case Errc::unknown_city: return "unknown_city";
    case Errc::invalid_boundaries: return "invalid_boundaries";
    case Errc::duplicate_persona: return "duplicate_persona";
    case Errc::empty_catalog: return "empty_catalog";
    case Errc::missing_embedding: return "missing_embedding";
    case Errc::dimension_mismatch: return "dimension_mismatch";
    case Errc::persona_required: return "persona_required";
    case Errc::context_invalid: return "context_invalid";
    case Errc::missing_input: return "missing_input";
    case Errc::empty_city_list: return "empty_city_list";
    case Errc::template_error: return "template_error";
    case Errc::transport: return "transport";
    case Errc::rate_limited: return "rate_limited";
    case Errc::rejected: return "rejected";
    case Errc::timeout: return "timeout";
    case Errc::replay_miss: return "replay_miss";
    case Errc::empty_input: return "empty_input";
    case Errc::empty_index: return "empty_index";
    case Errc::missing_sust_filter: return "missing_sust_filter";
    case Errc::group_too_small: return "group_too_small";
    case Errc::misaligned_sets: return "misaligned_sets";
    case Errc::storage_full: return "storage_full";
    case Errc::conflicting_record: return "conflicting_record";
    case Errc::empty_store: return "empty_store";
    case Errc::io_error: return "io_error";
    case Errc::config_invalid: return "config_invalid";
    case Errc::insufficient_queries: return "insufficient_queries";
    case Errc::session_complete: return "session_complete";
    case Errc::unknown_session: return "unknown_session";
    case Errc::already_rated: return "already_rated";
    case Errc::not_assigned: return "not_assigned";
    case Errc::validation_failed: return "validation_failed";
    case Errc::unauthorized: return "unauthorized";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

    Errc code() const noexcept { return code_; }
    /// The message without the code prefix.
    const std::string& message() const noexcept { return message_; }

    /// Transport-level failures that a caller may retry.
    bool retryable() const noexcept {
        return code_ == Errc::transport || code_ == Errc::rate_limited || code_ == Errc::timeout;
    }

private:
    Errc code_;
    std::string message_;
};

}  // namespace synthtrips
