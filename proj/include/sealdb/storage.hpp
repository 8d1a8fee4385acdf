#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sealdb/error.hpp"
#include "sealdb/value.hpp"

namespace sealdb {

// ---------------------------------------------------------------------------
// Field escaping for the line-oriented table format.
//
// Records are one line each, fields tab-separated. Text fields escape
// tab, newline and backslash as \t, \n, \\. Encrypted cells are written
// as `enc:` followed by the envelope hex, so a literal text field that
// happens to begin with "enc:" additionally escapes its first colon
// (`enc\:`) to stay distinguishable.
// ---------------------------------------------------------------------------

inline std::string escape_field_text(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
        switch (c) {
        case '\t': out += "\\t"; break;
        case '\n': out += "\\n"; break;
        case '\\': out += "\\\\"; break;
        default: out.push_back(c);
        }
    }
    if (out.rfind("enc:", 0) == 0) out.insert(3, 1, '\\');
    return out;
}

inline std::string unescape_field_text(std::string_view text, std::size_t position = Error::npos) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c != '\\') {
            out.push_back(c);
            continue;
        }
        if (++i == text.size())
            fail(Errc::format_error, "dangling escape in text field", position);
        switch (text[i]) {
        case 't': out.push_back('\t'); break;
        case 'n': out.push_back('\n'); break;
        case '\\': out.push_back('\\'); break;
        case ':': out.push_back(':'); break;
        default:
            fail(Errc::format_error, "unknown escape in text field", position);
        }
    }
    return out;
}

inline std::string write_field(const FieldValue& value) {
    if (const auto* env = std::get_if<CipherEnvelope>(&value)) return "enc:" + env->to_hex();
    if (const auto* text = std::get_if<std::string>(&value)) return escape_field_text(*text);
    return render_plain(value);
}

inline FieldValue read_field(std::string_view raw, const ColumnSpec& column,
                             std::size_t position) {
    if (raw.rfind("enc:", 0) == 0) {
        if (!column.sensitive)
            fail(Errc::format_error,
                 "encrypted cell in non-sensitive column '" + column.name + "'", position);
        return CipherEnvelope::from_hex(raw.substr(4), position);
    }
    try {
        if (column.kind == ColumnKind::text)
            return unescape_field_text(raw, position);
        return parse_plain(raw, column.kind, position);
    } catch (const Error& e) {
        if (e.code() == Errc::format_error) throw;
        fail(Errc::format_error, e.what(), position);
    }
}

// ---------------------------------------------------------------------------
// Records and tables
// ---------------------------------------------------------------------------

/// One table row. `fields` is aligned with the schema; fields[0] is the
/// key column and always carries the key as a plain integer.
struct Record {
    std::uint64_t key = 0;
    std::vector<FieldValue> fields;

    friend bool operator==(const Record&, const Record&) = default;
};

/// Record-oriented table with a unique-key index. Immutable once built
/// (construction appends rows; afterwards only reads), so concurrent
/// readers need no locking.
///
/// Schema conventions: the first column is the key column and must be a
/// non-sensitive integer; key 0 is reserved as the noise sentinel and is
/// rejected in any table.
class Table {
public:
    explicit Table(std::vector<ColumnSpec> schema) : schema_(std::move(schema)) {
        if (schema_.empty()) fail(Errc::schema_mismatch, "schema has no columns");
        for (std::size_t i = 0; i < schema_.size(); ++i) {
            const ColumnSpec& col = schema_[i];
            if (!is_identifier(col.name))
                fail(Errc::schema_mismatch, "column name '" + col.name + "' is not an identifier");
            for (std::size_t j = i + 1; j < schema_.size(); ++j)
                if (schema_[j].name == col.name)
                    fail(Errc::schema_mismatch, "duplicate column name '" + col.name + "'");
        }
        if (schema_.front().kind != ColumnKind::integer || schema_.front().sensitive)
            fail(Errc::schema_mismatch,
                 "first column must be a non-sensitive integer key column");
    }

    void append(Record record) {
        if (record.fields.size() != schema_.size())
            fail(Errc::schema_mismatch, "record has " + std::to_string(record.fields.size()) +
                                            " fields, schema has " +
                                            std::to_string(schema_.size()));
        const auto* key_field = std::get_if<std::int64_t>(&record.fields[0]);
        if (key_field == nullptr || *key_field < 1 ||
            static_cast<std::uint64_t>(*key_field) != record.key)
            fail(Errc::schema_mismatch, "key field must be a positive integer matching the key");
        if (!index_.emplace(record.key, rows_.size()).second)
            fail(Errc::duplicate_key, "duplicate key " + std::to_string(record.key));
        for (std::size_t i = 0; i < record.fields.size(); ++i)
            check_field(record.fields[i], schema_[i]);
        rows_.push_back(std::move(record));
    }

    [[nodiscard]] const std::vector<ColumnSpec>& schema() const { return schema_; }
    [[nodiscard]] const std::vector<Record>& rows() const { return rows_; }
    [[nodiscard]] std::size_t row_count() const { return rows_.size(); }

    [[nodiscard]] const Record* lookup_by_key(std::uint64_t key) const {
        auto it = index_.find(key);
        return it == index_.end() ? nullptr : &rows_[it->second];
    }

    [[nodiscard]] std::optional<std::size_t> column_index(std::string_view name) const {
        for (std::size_t i = 0; i < schema_.size(); ++i)
            if (schema_[i].name == name) return i;
        return std::nullopt;
    }

    [[nodiscard]] std::vector<std::string> column_names() const {
        std::vector<std::string> names;
        names.reserve(schema_.size());
        for (const ColumnSpec& col : schema_) names.push_back(col.name);
        return names;
    }

    friend bool operator==(const Table& a, const Table& b) {
        return a.schema_ == b.schema_ && a.rows_ == b.rows_;
    }

    // --- persistence (SEALTABLE v1) ---

    static constexpr std::string_view kMagic = "SEALTABLE v1";

    void save(std::ostream& out) const {
        out << kMagic << '\n';
        for (std::size_t i = 0; i < schema_.size(); ++i) {
            if (i > 0) out << '\t';
            out << schema_[i].name << ':' << kind_name(schema_[i].kind) << ':'
                << (schema_[i].sensitive ? '1' : '0');
        }
        out << '\n';
        for (const Record& record : rows_) {
            for (std::size_t i = 0; i < record.fields.size(); ++i) {
                if (i > 0) out << '\t';
                out << write_field(record.fields[i]);
            }
            out << '\n';
        }
        if (!out) fail(Errc::io_error, "table write failed");
    }

    static Table load(std::istream& in) {
        LineReader reader(in);
        auto magic = reader.next();
        if (!magic)
            fail(Errc::format_error, "empty table file", 0);
        if (*magic != kMagic) {
            if (magic->rfind("SEALTABLE v", 0) == 0)
                fail(Errc::version_mismatch, "unsupported table version '" + *magic + "'");
            fail(Errc::format_error, "not a SEALTABLE file", 0);
        }
        std::size_t schema_offset = reader.offset();
        auto schema_line = reader.next();
        if (!schema_line)
            fail(Errc::format_error, "truncated table file: missing schema", schema_offset);
        Table table(parse_schema_line(*schema_line, schema_offset));
        while (true) {
            std::size_t offset = reader.offset();
            auto line = reader.next();
            if (!line) break;
            std::vector<std::string_view> raw = split_tabs(*line);
            if (raw.size() != table.schema_.size())
                fail(Errc::format_error, "record has " + std::to_string(raw.size()) +
                                             " fields, schema has " +
                                             std::to_string(table.schema_.size()),
                     offset);
            Record record;
            record.fields.reserve(raw.size());
            for (std::size_t i = 0; i < raw.size(); ++i)
                record.fields.push_back(read_field(raw[i], table.schema_[i], offset));
            const auto* key = std::get_if<std::int64_t>(&record.fields[0]);
            if (key == nullptr || *key < 1)
                fail(Errc::format_error, "record key must be a positive integer", offset);
            record.key = static_cast<std::uint64_t>(*key);
            try {
                table.append(std::move(record));
            } catch (const Error& e) {
                fail(Errc::format_error, e.what(), offset);
            }
        }
        return table;
    }

    static std::vector<ColumnSpec> parse_schema_line(std::string_view line, std::size_t offset) {
        std::vector<ColumnSpec> schema;
        for (std::string_view triple : split_tabs(line)) {
            auto first = triple.find(':');
            auto second = triple.rfind(':');
            if (first == std::string_view::npos || second == first)
                fail(Errc::format_error, "malformed schema entry '" + std::string(triple) + "'",
                     offset);
            ColumnSpec col;
            col.name = std::string(triple.substr(0, first));
            col.kind = parse_kind(triple.substr(first + 1, second - first - 1), offset);
            std::string_view flag = triple.substr(second + 1);
            if (flag != "0" && flag != "1")
                fail(Errc::format_error, "schema sensitivity flag must be 0 or 1", offset);
            col.sensitive = flag == "1";
            schema.push_back(std::move(col));
        }
        return schema;
    }

    /// Reads lines while tracking the byte offset of each line start, so
    /// format errors can point at the offending spot.
    class LineReader {
    public:
        explicit LineReader(std::istream& in) : in_(in) {}

        [[nodiscard]] std::size_t offset() const { return offset_; }

        std::optional<std::string> next() {
            std::string line;
            if (!std::getline(in_, line)) return std::nullopt;
            offset_ += line.size() + 1;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            return line;
        }

    private:
        std::istream& in_;
        std::size_t offset_ = 0;
    };

    static std::vector<std::string_view> split_tabs(std::string_view line) {
        std::vector<std::string_view> parts;
        std::size_t start = 0;
        while (true) {
            std::size_t tab = line.find('\t', start);
            if (tab == std::string_view::npos) {
                parts.push_back(line.substr(start));
                return parts;
            }
            parts.push_back(line.substr(start, tab - start));
            start = tab + 1;
        }
    }

private:
    static void check_field(const FieldValue& value, const ColumnSpec& column) {
        if (is_encrypted(value)) {
            if (!column.sensitive)
                fail(Errc::schema_mismatch,
                     "encrypted value in non-sensitive column '" + column.name + "'");
            return;
        }
        bool ok = false;
        switch (column.kind) {
        case ColumnKind::integer: ok = std::holds_alternative<std::int64_t>(value); break;
        case ColumnKind::decimal: ok = std::holds_alternative<Decimal>(value); break;
        case ColumnKind::text: ok = std::holds_alternative<std::string>(value); break;
        }
        if (!ok)
            fail(Errc::schema_mismatch,
                 "value kind does not match column '" + column.name + "'");
    }

    std::vector<ColumnSpec> schema_;
    std::vector<Record> rows_;
    std::unordered_map<std::uint64_t, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// CSV ingestion (RFC-4180-style quoting)
// ---------------------------------------------------------------------------

struct CsvRow {
    std::size_t line = 0;
    std::vector<std::string> fields;
};

inline std::vector<CsvRow> parse_csv(std::istream& in) {
    std::vector<CsvRow> rows;
    std::string field;
    CsvRow row;
    row.line = 1;
    std::size_t line = 1;
    bool in_quotes = false;
    bool row_has_content = false;

    auto end_field = [&] {
        row.fields.push_back(std::move(field));
        field.clear();
    };
    auto end_row = [&] {
        end_field();
        rows.push_back(std::move(row));
        row = CsvRow{};
        row.line = line;
        row_has_content = false;
    };

    char c;
    while (in.get(c)) {
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"':
            if (field.empty()) {
                in_quotes = true;
                row_has_content = true;
            } else {
                field.push_back('"');
            }
            break;
        case ',':
            end_field();
            row_has_content = true;
            break;
        case '\r':
            if (in.peek() == '\n') {
                in.get(c);
                ++line;
                end_row();
                row.line = line;
            } else {
                field.push_back('\r');
            }
            break;
        case '\n':
            ++line;
            end_row();
            row.line = line;
            break;
        default:
            field.push_back(c);
            row_has_content = true;
        }
    }
    if (in_quotes)
        fail(Errc::parse_error, "unterminated quoted CSV field", line);
    if (row_has_content || !row.fields.empty()) end_row();
    return rows;
}

/// Builds a plaintext table from CSV. The first CSV line must be a header
/// matching the schema column names exactly; every value lands as a plain
/// (unencrypted) field. Empty cells in sensitive columns are rejected:
/// the search structures built later have no representation for missing
/// values.
inline Table ingest_csv(std::istream& in, const std::vector<ColumnSpec>& schema) {
    Table table(schema);
    std::vector<CsvRow> rows = parse_csv(in);
    if (rows.empty()) fail(Errc::schema_mismatch, "CSV has no header row");

    const CsvRow& header = rows.front();
    if (header.fields.size() != schema.size())
        fail(Errc::schema_mismatch, "CSV header has " + std::to_string(header.fields.size()) +
                                        " columns, schema has " + std::to_string(schema.size()));
    for (std::size_t i = 0; i < schema.size(); ++i)
        if (header.fields[i] != schema[i].name)
            fail(Errc::schema_mismatch, "CSV header column '" + header.fields[i] +
                                            "' does not match schema column '" + schema[i].name +
                                            "'");

    for (std::size_t r = 1; r < rows.size(); ++r) {
        const CsvRow& csv = rows[r];
        if (csv.fields.size() != schema.size())
            fail(Errc::parse_error, "row has " + std::to_string(csv.fields.size()) +
                                        " fields, expected " + std::to_string(schema.size()),
                 csv.line);
        Record record;
        record.fields.reserve(schema.size());
        for (std::size_t i = 0; i < schema.size(); ++i) {
            const std::string& cell = csv.fields[i];
            if (cell.empty() && schema[i].sensitive)
                fail(Errc::null_sensitive_value,
                     "empty value in sensitive column '" + schema[i].name + "'", csv.line);
            record.fields.push_back(parse_plain(cell, schema[i].kind, csv.line));
        }
        const auto* key = std::get_if<std::int64_t>(&record.fields[0]);
        if (key == nullptr || *key < 1)
            fail(Errc::parse_error, "key column must hold a positive integer", csv.line);
        record.key = static_cast<std::uint64_t>(*key);
        try {
            table.append(std::move(record));
        } catch (const Error& e) {
            if (e.code() == Errc::duplicate_key)
                fail(Errc::duplicate_key, std::string(e.what()), csv.line);
            throw;
        }
    }
    return table;
}

} // namespace sealdb
