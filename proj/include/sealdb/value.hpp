#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sealdb/cipher.hpp"
#include "sealdb/decimal.hpp"
#include "sealdb/error.hpp"

namespace sealdb {

enum class ColumnKind { integer, decimal, text };

inline std::string_view kind_name(ColumnKind kind) {
    switch (kind) {
    case ColumnKind::integer: return "integer";
    case ColumnKind::decimal: return "decimal";
    case ColumnKind::text: return "text";
    }
    return "?";
}

inline ColumnKind parse_kind(std::string_view text, std::size_t position = Error::npos) {
    if (text == "integer") return ColumnKind::integer;
    if (text == "decimal") return ColumnKind::decimal;
    if (text == "text") return ColumnKind::text;
    fail(Errc::format_error, "unknown column kind '" + std::string(text) + "'", position);
}

inline bool is_identifier(std::string_view name) {
    if (name.empty()) return false;
    if (!std::isalpha(static_cast<unsigned char>(name.front())) && name.front() != '_')
        return false;
    for (char c : name)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
    return true;
}

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::text;
    bool sensitive = false;

    friend bool operator==(const ColumnSpec&, const ColumnSpec&) = default;
};

/// One table cell: a plaintext integer/decimal/text value, or a cipher
/// envelope once the column has been protected.
using FieldValue = std::variant<std::int64_t, Decimal, std::string, CipherEnvelope>;

inline bool is_encrypted(const FieldValue& value) {
    return std::holds_alternative<CipherEnvelope>(value);
}

inline std::int64_t parse_int(std::string_view text, std::size_t position = Error::npos) {
    std::int64_t value = 0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last)
        fail(Errc::parse_error, "malformed integer: '" + std::string(text) + "'", position);
    return value;
}

/// Parses the canonical byte form of a plain value back into its kind.
inline FieldValue parse_plain(std::string_view text, ColumnKind kind,
                              std::size_t position = Error::npos) {
    switch (kind) {
    case ColumnKind::integer: return parse_int(text, position);
    case ColumnKind::decimal: return Decimal::parse(text, position);
    case ColumnKind::text: return std::string(text);
    }
    fail(Errc::internal, "unreachable column kind");
}

/// Canonical byte form of a plain value; also the exact plaintext handed
/// to the cipher when a sensitive cell is sealed.
inline std::string render_plain(const FieldValue& value) {
    if (const auto* i = std::get_if<std::int64_t>(&value)) return std::to_string(*i);
    if (const auto* d = std::get_if<Decimal>(&value)) return d->to_string();
    if (const auto* s = std::get_if<std::string>(&value)) return *s;
    fail(Errc::internal, "render_plain on an encrypted field");
}

/// Three-way comparison of two plain values of the same column kind.
/// Integers compare as signed arithmetic, decimals exactly, text as raw
/// byte sequences.
inline int compare_plain(const FieldValue& a, const FieldValue& b) {
    if (const auto* ia = std::get_if<std::int64_t>(&a)) {
        const auto* ib = std::get_if<std::int64_t>(&b);
        if (!ib) fail(Errc::internal, "comparing values of different kinds");
        return *ia < *ib ? -1 : *ia > *ib ? 1 : 0;
    }
    if (const auto* da = std::get_if<Decimal>(&a)) {
        const auto* db = std::get_if<Decimal>(&b);
        if (!db) fail(Errc::internal, "comparing values of different kinds");
        return da->compare(*db);
    }
    if (const auto* sa = std::get_if<std::string>(&a)) {
        const auto* sb = std::get_if<std::string>(&b);
        if (!sb) fail(Errc::internal, "comparing values of different kinds");
        int cmp = sa->compare(*sb);
        return cmp < 0 ? -1 : cmp > 0 ? 1 : 0;
    }
    fail(Errc::internal, "comparing encrypted fields");
}

} // namespace sealdb
