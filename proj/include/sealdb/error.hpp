#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sealdb {

/// Every failure the library reports, one code per distinct condition.
/// The CLI maps these onto stable process exit codes.
enum class Errc {
    // cipher
    invalid_key,
    invalid_nonce,
    auth_failure,
    nonce_exhaustion,
    // storage
    schema_mismatch,
    duplicate_key,
    null_sensitive_value,
    parse_error,
    format_error,
    version_mismatch,
    // protect
    no_sensitive_column,
    empty_domain,
    // query language
    syntax_error,
    unknown_column,
    unknown_table,
    type_mismatch,
    unsupported_negation,
    // executor
    unauthorized,
    // bench
    mismatched_workload,
    invalid_config,
    // plumbing
    io_error,
    internal,
};

inline std::string_view errc_name(Errc code) {
    switch (code) {
    case Errc::invalid_key: return "InvalidKey";
    case Errc::invalid_nonce: return "InvalidNonce";
    case Errc::auth_failure: return "AuthFailure";
    case Errc::nonce_exhaustion: return "NonceExhaustion";
    case Errc::schema_mismatch: return "SchemaMismatch";
    case Errc::duplicate_key: return "DuplicateKey";
    case Errc::null_sensitive_value: return "NullSensitiveValue";
    case Errc::parse_error: return "ParseError";
    case Errc::format_error: return "FormatError";
    case Errc::version_mismatch: return "VersionMismatch";
    case Errc::no_sensitive_column: return "NoSensitiveColumn";
    case Errc::empty_domain: return "EmptyDomain";
    case Errc::syntax_error: return "SyntaxError";
    case Errc::unknown_column: return "UnknownColumn";
    case Errc::unknown_table: return "UnknownTable";
    case Errc::type_mismatch: return "TypeMismatch";
    case Errc::unsupported_negation: return "UnsupportedNegation";
    case Errc::unauthorized: return "Unauthorized";
    case Errc::mismatched_workload: return "MismatchedWorkload";
    case Errc::invalid_config: return "InvalidConfig";
    case Errc::io_error: return "IoError";
    case Errc::internal: return "InternalError";
    }
    return "UnknownError";
}

/// Carries the error code plus, where it makes sense, a position:
/// byte offset for file formats, character offset for SQL text,
/// line number for CSV ingestion.
class Error : public std::runtime_error {
public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    Error(Errc code, const std::string& message, std::size_t position = npos)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message),
          code_(code),
          position_(position) {}

    [[nodiscard]] Errc code() const noexcept { return code_; }
    [[nodiscard]] std::size_t position() const noexcept { return position_; }

private:
    Errc code_;
    std::size_t position_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message,
                              std::size_t position = Error::npos) {
    throw Error(code, message, position);
}

} // namespace sealdb
