#pragma once

#include <stdexcept>
#include <string>

namespace crowdscore {

// Machine-readable error codes. The CLI maps Errc::io to exit code 2 and
// everything else to exit code 1.
enum class Errc {
    domain,
    invalid_merge,
    scheme_mismatch,
    already_registered,
    configuration,
    stale_task,
    malformed_submission,
    not_eligible,
    no_work,
    not_found,
    duplicate_vote,
    empty_tally,
    degenerate_trust,
    empty_input,
    shape,
    incomplete_matrix,
    degenerate,
    undefined_correlation,
    schema,
    value,
    parse,
    consistency,
    reconciliation,
    startup,
    io,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) {
    throw Error(code, what);
}

inline const char* errc_name(Errc code) {
    switch (code) {
        case Errc::domain: return "domain";
        case Errc::invalid_merge: return "invalid_merge";
        case Errc::scheme_mismatch: return "scheme_mismatch";
        case Errc::already_registered: return "already_registered";
        case Errc::configuration: return "configuration";
        case Errc::stale_task: return "stale_task";
        case Errc::malformed_submission: return "malformed_submission";
        case Errc::not_eligible: return "not_eligible";
        case Errc::no_work: return "no_work";
        case Errc::not_found: return "not_found";
        case Errc::duplicate_vote: return "duplicate_vote";
        case Errc::empty_tally: return "empty_tally";
        case Errc::degenerate_trust: return "degenerate_trust";
        case Errc::empty_input: return "empty_input";
        case Errc::shape: return "shape";
        case Errc::incomplete_matrix: return "incomplete_matrix";
        case Errc::degenerate: return "degenerate";
        case Errc::undefined_correlation: return "undefined_correlation";
        case Errc::schema: return "schema";
        case Errc::value: return "value";
        case Errc::parse: return "parse";
        case Errc::consistency: return "consistency";
        case Errc::reconciliation: return "reconciliation";
        case Errc::startup: return "startup";
        case Errc::io: return "io";
    }
    return "unknown";
}

} // namespace crowdscore
