#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sealdb/cipher.hpp"
#include "sealdb/error.hpp"
#include "sealdb/storage.hpp"

namespace sealdb {

/// One row of a search table: the encrypted record key (8-byte big-endian
/// plaintext under the search key; sentinel key 0 marks noise) paired
/// with the searchable value, which is deliberately kept in the clear.
struct SearchRow {
    CipherEnvelope enc_key;
    FieldValue search_value;

    friend bool operator==(const SearchRow&, const SearchRow&) = default;
};

constexpr std::uint64_t kNoiseSentinelKey = 0;

/// Per-sensitive-column lookup table living in the secure schema. Row
/// order is an independent seeded permutation of the main table, its
/// column headings are meaningless aliases, and a configurable fraction
/// of rows is decoy noise. Which source column it serves is recorded only
/// in the metadata, never here.
///
/// Row access is instrumented: rows() bumps a counter by the number of
/// rows exposed, so tests can assert that unauthorized executions never
/// touch search-table contents.
class SearchTable {
public:
    SearchTable(std::string alias_key_column, std::string alias_value_column,
                ColumnKind value_kind, std::vector<SearchRow> rows)
        : alias_key_(std::move(alias_key_column)),
          alias_value_(std::move(alias_value_column)),
          value_kind_(value_kind),
          rows_(std::move(rows)) {
        if (!is_identifier(alias_key_) || !is_identifier(alias_value_) ||
            alias_key_ == alias_value_)
            fail(Errc::internal, "invalid search table aliases");
        for (const SearchRow& row : rows_) check_row(row);
    }

    SearchTable(SearchTable&& other) noexcept
        : alias_key_(std::move(other.alias_key_)),
          alias_value_(std::move(other.alias_value_)),
          value_kind_(other.value_kind_),
          rows_(std::move(other.rows_)),
          accesses_(other.accesses_.load()) {}

    SearchTable& operator=(SearchTable&& other) noexcept {
        alias_key_ = std::move(other.alias_key_);
        alias_value_ = std::move(other.alias_value_);
        value_kind_ = other.value_kind_;
        rows_ = std::move(other.rows_);
        accesses_.store(other.accesses_.load());
        return *this;
    }

    SearchTable(const SearchTable&) = delete;
    SearchTable& operator=(const SearchTable&) = delete;

    [[nodiscard]] const std::string& alias_key_column() const { return alias_key_; }
    [[nodiscard]] const std::string& alias_value_column() const { return alias_value_; }
    [[nodiscard]] ColumnKind value_kind() const { return value_kind_; }
    [[nodiscard]] std::size_t size() const { return rows_.size(); }

    [[nodiscard]] const std::vector<SearchRow>& rows() const {
        accesses_.fetch_add(rows_.size(), std::memory_order_relaxed);
        return rows_;
    }

    /// Uncounted access for persistence and integrity audits. The counter
    /// instruments the query path only.
    [[nodiscard]] const std::vector<SearchRow>& audit_rows() const { return rows_; }

    [[nodiscard]] std::uint64_t access_count() const {
        return accesses_.load(std::memory_order_relaxed);
    }

    friend bool operator==(const SearchTable& a, const SearchTable& b) {
        return a.alias_key_ == b.alias_key_ && a.alias_value_ == b.alias_value_ &&
               a.value_kind_ == b.value_kind_ && a.rows_ == b.rows_;
    }

    // --- persistence: same SEALTABLE v1 line format as Table ---

    void save(std::ostream& out) const {
        out << Table::kMagic << '\n';
        out << alias_key_ << ":integer:1\t" << alias_value_ << ':' << kind_name(value_kind_)
            << ":0\n";
        for (const SearchRow& row : rows_)
            out << "enc:" << row.enc_key.to_hex() << '\t' << write_field(row.search_value)
                << '\n';
        if (!out) fail(Errc::io_error, "search table write failed");
    }

    static SearchTable load(std::istream& in) {
        Table::LineReader reader(in);
        auto magic = reader.next();
        if (!magic) fail(Errc::format_error, "empty search table file", 0);
        if (*magic != Table::kMagic) {
            if (magic->rfind("SEALTABLE v", 0) == 0)
                fail(Errc::version_mismatch, "unsupported table version '" + *magic + "'");
            fail(Errc::format_error, "not a SEALTABLE file", 0);
        }
        std::size_t schema_offset = reader.offset();
        auto schema_line = reader.next();
        if (!schema_line)
            fail(Errc::format_error, "truncated search table: missing schema", schema_offset);
        auto schema = Table::parse_schema_line(*schema_line, schema_offset);
        if (schema.size() != 2 || schema[0].kind != ColumnKind::integer ||
            !schema[0].sensitive || schema[1].sensitive)
            fail(Errc::format_error, "search table schema must be one encrypted key column "
                                     "and one plain value column",
                 schema_offset);
        std::vector<SearchRow> rows;
        while (true) {
            std::size_t offset = reader.offset();
            auto line = reader.next();
            if (!line) break;
            auto raw = Table::split_tabs(*line);
            if (raw.size() != 2)
                fail(Errc::format_error, "search table rows have exactly two fields", offset);
            FieldValue enc = read_field(raw[0], schema[0], offset);
            const auto* env = std::get_if<CipherEnvelope>(&enc);
            if (env == nullptr)
                fail(Errc::format_error, "search table key cell is not encrypted", offset);
            rows.push_back(SearchRow{*env, read_field(raw[1], schema[1], offset)});
        }
        return SearchTable(schema[0].name, schema[1].name, schema[1].kind, std::move(rows));
    }

private:
    void check_row(const SearchRow& row) const {
        if (is_encrypted(row.search_value))
            fail(Errc::internal, "search values are stored in the clear");
        bool ok = false;
        switch (value_kind_) {
        case ColumnKind::integer: ok = std::holds_alternative<std::int64_t>(row.search_value); break;
        case ColumnKind::decimal: ok = std::holds_alternative<Decimal>(row.search_value); break;
        case ColumnKind::text: ok = std::holds_alternative<std::string>(row.search_value); break;
        }
        if (!ok) fail(Errc::internal, "search value kind mismatch");
    }

    std::string alias_key_;
    std::string alias_value_;
    ColumnKind value_kind_;
    std::vector<SearchRow> rows_;
    mutable std::atomic<std::uint64_t> accesses_{0};
};

/// Everything the rewriter and executor need that must never leave the
/// secure schema: which alias belongs to which sensitive column, the
/// seeds, the noise fraction, the grant list, and (when the CLI manages
/// key custody) the master secret.
struct SecureMetadata {
    struct AliasEntry {
        std::string table_id;
        std::string key_column;
        std::string value_column;

        friend bool operator==(const AliasEntry&, const AliasEntry&) = default;
    };

    std::string table_name;
    std::string cipher_name;
    Bytes master_secret;
    std::map<std::string, AliasEntry> aliases;
    Rational noise_fraction{1, 20};
    std::uint64_t shuffle_seed = 0;
    std::uint64_t noise_seed = 0;
    std::set<std::string> principals;

    friend bool operator==(const SecureMetadata&, const SecureMetadata&) = default;

    static constexpr std::string_view kMagic = "SEALMETA v1";

    void save(std::ostream& out) const {
        out << kMagic << '\n';
        out << "table " << table_name << '\n';
        out << "cipher " << cipher_name << '\n';
        if (!master_secret.empty()) out << "master " << hex_encode(master_secret) << '\n';
        out << "noise " << noise_fraction.to_string() << '\n';
        out << "shuffle_seed " << shuffle_seed << '\n';
        out << "noise_seed " << noise_seed << '\n';
        for (const std::string& user : principals) out << "principal " << user << '\n';
        for (const auto& [column, entry] : aliases)
            out << "alias " << column << ' ' << entry.table_id << ' ' << entry.key_column << ' '
                << entry.value_column << '\n';
        if (!out) fail(Errc::io_error, "metadata write failed");
    }

    static SecureMetadata load(std::istream& in) {
        Table::LineReader reader(in);
        auto magic = reader.next();
        if (!magic) fail(Errc::format_error, "empty metadata file", 0);
        if (*magic != kMagic) {
            if (magic->rfind("SEALMETA v", 0) == 0)
                fail(Errc::version_mismatch, "unsupported metadata version '" + *magic + "'");
            fail(Errc::format_error, "not a SEALMETA file", 0);
        }
        SecureMetadata meta;
        meta.noise_fraction = Rational{0, 1};
        while (true) {
            std::size_t offset = reader.offset();
            auto line = reader.next();
            if (!line) break;
            if (line->empty()) continue;
            std::istringstream words(*line);
            std::string tag;
            words >> tag;
            if (tag == "table") {
                words >> meta.table_name;
            } else if (tag == "cipher") {
                words >> meta.cipher_name;
            } else if (tag == "master") {
                std::string hex;
                words >> hex;
                meta.master_secret = hex_decode(hex);
            } else if (tag == "noise") {
                std::string fraction;
                words >> fraction;
                meta.noise_fraction = Rational::parse(fraction);
            } else if (tag == "shuffle_seed") {
                words >> meta.shuffle_seed;
            } else if (tag == "noise_seed") {
                words >> meta.noise_seed;
            } else if (tag == "principal") {
                std::string user;
                words >> user;
                if (user.empty())
                    fail(Errc::format_error, "principal entry without a user", offset);
                meta.principals.insert(user);
            } else if (tag == "alias") {
                std::string column;
                AliasEntry entry;
                words >> column >> entry.table_id >> entry.key_column >> entry.value_column;
                if (column.empty() || entry.value_column.empty())
                    fail(Errc::format_error, "malformed alias entry", offset);
                meta.aliases.emplace(std::move(column), std::move(entry));
            } else {
                fail(Errc::format_error, "unknown metadata entry '" + tag + "'", offset);
            }
            if (words.fail())
                fail(Errc::format_error, "malformed metadata entry '" + tag + "'", offset);
        }
        if (meta.table_name.empty() || meta.cipher_name.empty())
            fail(Errc::format_error, "metadata missing table or cipher entry");
        return meta;
    }
};

/// The protected form of one table: the main table with sensitive cells
/// sealed, one search table per sensitive column, and the metadata tying
/// them together. Immutable after protect; re-protect to change data.
struct ProtectedPair {
    Table main;
    std::map<std::string, SearchTable> search_tables;
    SecureMetadata meta;
};

struct TableKeys {
    CipherKey main;
    CipherKey search;
};

/// Independent keys for the two encryption sites, stretched from one
/// master secret. Whether the two sites share one key is configurable by
/// construction; distinct keys are the default.
inline TableKeys derive_table_keys(const Cipher& cipher, BytesView master) {
    return TableKeys{cipher.derive_key(master, "main-table"),
                     cipher.derive_key(master, "search-table")};
}

struct ProtectConfig {
    std::string table_name = "Encrypted_Data_Table";
    Rational noise_fraction{1, 20};
    std::uint64_t shuffle_seed = 1;
    std::uint64_t noise_seed = 1;
    std::set<std::string> principals;
    Bytes master_secret; // recorded in metadata when non-empty
};

struct AliasPair {
    std::string key_column;
    std::string value_column;
};

/// Deterministic decoy headings for one search table: two distinct
/// uppercase 8-letter identifiers derived from (seed, column), re-rolled
/// while either collides with a name in `avoid` (source schema names,
/// aliases already handed out).
inline AliasPair alias_columns(std::uint64_t seed, std::string_view column,
                               const std::set<std::string>& avoid = {}) {
    SplitMix64 rng(derive_seed(seed, column));
    auto fresh_name = [&rng] {
        std::string name(8, 'A');
        for (char& c : name) c = static_cast<char>('A' + rng.next_below(26));
        return name;
    };
    for (int attempt = 0; attempt < 1000; ++attempt) {
        AliasPair pair{fresh_name(), fresh_name()};
        while (pair.value_column == pair.key_column) pair.value_column = fresh_name();
        if (!avoid.contains(pair.key_column) && !avoid.contains(pair.value_column))
            return pair;
    }
    fail(Errc::internal, "alias generation exhausted");
}

/// `count` decoy rows: values sampled (seeded) from the real value
/// distribution, keys all encrypting the reserved sentinel 0.
inline std::vector<SearchRow> add_noise(const std::vector<FieldValue>& real_values,
                                        std::size_t count, std::uint64_t noise_seed,
                                        const Cipher& cipher, const CipherKey& search_key,
                                        NonceSequence& nonces) {
    if (count == 0) return {};
    if (real_values.empty())
        fail(Errc::empty_domain, "cannot sample noise from an empty value domain");
    SplitMix64 rng(noise_seed);
    std::vector<SearchRow> rows;
    rows.reserve(count);
    auto sentinel = be64_encode(kNoiseSentinelKey);
    for (std::size_t i = 0; i < count; ++i) {
        const FieldValue& value = real_values[rng.next_below(real_values.size())];
        rows.push_back(SearchRow{cipher.encrypt(sentinel, search_key, nonces.next()), value});
    }
    return rows;
}

struct SearchTableBuildConfig {
    std::string column_name;
    ColumnKind value_kind = ColumnKind::integer;
    Rational noise_fraction{0, 1};
    std::uint64_t shuffle_seed = 1;
    std::uint64_t noise_seed = 1;
    std::set<std::string> avoid_names;
};

/// Builds one search table: real rows (encrypted true keys, plaintext
/// values), ceil(noise_fraction * N) noise rows, then a seeded
/// Fisher-Yates reorder so row order carries no trace of main-table
/// order.
inline SearchTable build_search_table(
    const std::vector<std::pair<std::uint64_t, FieldValue>>& column_values,
    const Cipher& cipher, const CipherKey& search_key, const SearchTableBuildConfig& config,
    NonceSequence& nonces) {
    std::vector<SearchRow> rows;
    rows.reserve(column_values.size());
    std::vector<FieldValue> values_only;
    values_only.reserve(column_values.size());
    for (const auto& [key, value] : column_values) {
        if (key < 1) fail(Errc::internal, "record keys are >= 1");
        rows.push_back(
            SearchRow{cipher.encrypt(be64_encode(key), search_key, nonces.next()), value});
        values_only.push_back(value);
    }
    std::size_t noise_count = config.noise_fraction.ceil_mul(column_values.size());
    std::vector<SearchRow> noise =
        add_noise(values_only, noise_count, derive_seed(config.noise_seed, config.column_name),
                  cipher, search_key, nonces);
    rows.insert(rows.end(), std::make_move_iterator(noise.begin()),
                std::make_move_iterator(noise.end()));
    seeded_shuffle(rows, derive_seed(config.shuffle_seed, config.column_name));
    AliasPair alias =
        alias_columns(config.shuffle_seed, config.column_name, config.avoid_names);
    return SearchTable(alias.key_column, alias.value_column, config.value_kind,
                       std::move(rows));
}

/// Fails with NonceExhaustion if any two envelopes of one protect run
/// share a nonce; randomized encryption is only as good as its nonces.
inline void ensure_unique_nonces(const std::vector<const CipherEnvelope*>& envelopes) {
    std::unordered_set<std::string> seen;
    seen.reserve(envelopes.size());
    for (const CipherEnvelope* env : envelopes) {
        if (!seen.insert(to_string(env->nonce)).second)
            fail(Errc::nonce_exhaustion, "duplicate nonce among produced envelopes");
    }
}

/// Transforms a plaintext table into its protected pair: sensitive cells
/// of the main table are sealed under the main key, and every sensitive
/// column gets a shuffled, noise-padded, alias-headed search table under
/// the search key. No plaintext of a sensitive cell survives anywhere
/// except as the search tables' value column.
inline ProtectedPair protect(const Table& table, const Cipher& cipher, const TableKeys& keys,
                             const ProtectConfig& config) {
    if (config.noise_fraction.num >= config.noise_fraction.den)
        fail(Errc::invalid_config, "noise fraction must be below 1");
    std::vector<std::size_t> sensitive_columns;
    for (std::size_t i = 0; i < table.schema().size(); ++i)
        if (table.schema()[i].sensitive) sensitive_columns.push_back(i);
    if (sensitive_columns.empty())
        fail(Errc::no_sensitive_column, "table has no sensitive column to protect");

    NonceSequence nonces(
        derive_seed(config.shuffle_seed ^ (config.noise_seed * 0x9e3779b97f4a7c15ull),
                    "nonce-stream"));

    Table main(table.schema());
    for (const Record& row : table.rows()) {
        Record sealed = row;
        for (std::size_t col : sensitive_columns)
            sealed.fields[col] = cipher.encrypt(to_bytes(render_plain(row.fields[col])),
                                                keys.main, nonces.next());
        main.append(std::move(sealed));
    }

    SecureMetadata meta;
    meta.table_name = config.table_name;
    meta.cipher_name = std::string(cipher.name());
    meta.master_secret = config.master_secret;
    meta.noise_fraction = config.noise_fraction;
    meta.shuffle_seed = config.shuffle_seed;
    meta.noise_seed = config.noise_seed;
    meta.principals = config.principals;

    std::set<std::string> avoid;
    for (const ColumnSpec& col : table.schema()) avoid.insert(col.name);

    std::map<std::string, SearchTable> search_tables;
    for (std::size_t col : sensitive_columns) {
        const ColumnSpec& spec = table.schema()[col];
        std::vector<std::pair<std::uint64_t, FieldValue>> values;
        values.reserve(table.row_count());
        for (const Record& row : table.rows()) values.emplace_back(row.key, row.fields[col]);
        SearchTableBuildConfig build;
        build.column_name = spec.name;
        build.value_kind = spec.kind;
        build.noise_fraction = config.noise_fraction;
        build.shuffle_seed = config.shuffle_seed;
        build.noise_seed = config.noise_seed;
        build.avoid_names = avoid;
        SearchTable st = build_search_table(values, cipher, keys.search, build, nonces);
        avoid.insert(st.alias_key_column());
        avoid.insert(st.alias_value_column());
        // The file/table id is a third decoy name, unrelated to either
        // alias heading.
        std::string table_id =
            alias_columns(config.shuffle_seed, spec.name + "\ttable-id", avoid).key_column;
        avoid.insert(table_id);
        meta.aliases[spec.name] = SecureMetadata::AliasEntry{table_id, st.alias_key_column(),
                                                             st.alias_value_column()};
        search_tables.emplace(spec.name, std::move(st));
    }

    ProtectedPair pair{std::move(main), std::move(search_tables), std::move(meta)};

    std::vector<const CipherEnvelope*> envelopes;
    for (const Record& row : pair.main.rows())
        for (std::size_t col : sensitive_columns)
            envelopes.push_back(std::get_if<CipherEnvelope>(&row.fields[col]));
    for (const auto& [column, st] : pair.search_tables)
        for (const SearchRow& row : st.audit_rows()) envelopes.push_back(&row.enc_key);
    ensure_unique_nonces(envelopes);

    return pair;
}

// ---------------------------------------------------------------------------
// On-disk layout of a protected set: <dir>/main.tbl, <dir>/<id>.tbl per
// search table, <dir>/meta.seal. The metadata and search tables form the
// secure schema; they are written owner-only where the platform allows.
// ---------------------------------------------------------------------------

inline void restrict_permissions(const std::filesystem::path& path) {
    std::error_code ec;
    std::filesystem::permissions(path,
                                 std::filesystem::perms::owner_read |
                                     std::filesystem::perms::owner_write,
                                 std::filesystem::perm_options::replace, ec);
    // Best effort; some filesystems cannot express this.
}

inline void save_protected(const ProtectedPair& pair, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(Errc::io_error, "cannot create directory " + dir.string());

    auto open_out = [](const std::filesystem::path& path) {
        std::ofstream out(path, std::ios::binary);
        if (!out) fail(Errc::io_error, "cannot write " + path.string());
        return out;
    };

    {
        std::ofstream out = open_out(dir / "main.tbl");
        pair.main.save(out);
    }
    for (const auto& [column, entry] : pair.meta.aliases) {
        auto it = pair.search_tables.find(column);
        if (it == pair.search_tables.end())
            fail(Errc::internal, "alias map references missing search table");
        std::filesystem::path path = dir / (entry.table_id + ".tbl");
        std::ofstream out = open_out(path);
        it->second.save(out);
        out.close();
        restrict_permissions(path);
    }
    {
        std::filesystem::path path = dir / "meta.seal";
        std::ofstream out = open_out(path);
        pair.meta.save(out);
        out.close();
        restrict_permissions(path);
    }
}

inline ProtectedPair load_protected(const std::filesystem::path& dir) {
    auto open_in = [](const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) fail(Errc::io_error, "cannot read " + path.string());
        return in;
    };

    std::ifstream meta_in = open_in(dir / "meta.seal");
    SecureMetadata meta = SecureMetadata::load(meta_in);
    std::ifstream main_in = open_in(dir / "main.tbl");
    Table main = Table::load(main_in);
    std::map<std::string, SearchTable> search_tables;
    for (const auto& [column, entry] : meta.aliases) {
        std::ifstream in = open_in(dir / (entry.table_id + ".tbl"));
        search_tables.emplace(column, SearchTable::load(in));
    }
    return ProtectedPair{std::move(main), std::move(search_tables), std::move(meta)};
}

} // namespace sealdb
