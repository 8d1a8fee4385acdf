#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "sealdb/cipher.hpp"
#include "sealdb/error.hpp"
#include "sealdb/protect.hpp"
#include "sealdb/query.hpp"
#include "sealdb/storage.hpp"

namespace sealdb {

/// Who is asking, and which secure schemas they hold a grant for.
/// Immutable during an execution.
struct AuthContext {
    std::string user;
    std::set<std::string> granted;
};

inline AuthContext make_auth_context(std::string user, const SecureMetadata& meta) {
    AuthContext auth;
    auth.user = std::move(user);
    if (meta.principals.contains(auth.user)) auth.granted.insert(meta.table_name);
    return auth;
}

/// Finding no records is an outcome, not an error.
enum class SearchStatus { found, unsuccessful };

struct ExecStats {
    std::uint64_t keys_probed = 0;        // search rows whose value matched a probe
    std::uint64_t keys_matched = 0;       // rows in the final result
    std::uint64_t noise_filtered = 0;     // decrypted keys dropped (sentinel or absent)
    std::uint64_t decrypt_calls_inner = 0; // key decryptions in search tables
    std::uint64_t decrypt_calls_outer = 0; // value decryptions in the main table
    std::chrono::microseconds elapsed{0};
};

/// Ordered result: rows sorted by key ascending, sensitive columns
/// decrypted to their plain values.
struct ResultSet {
    std::vector<std::string> columns;
    std::vector<std::vector<FieldValue>> rows;
    SearchStatus status = SearchStatus::unsuccessful;
    ExecStats stats;
};

/// Probes one search table: scans the plaintext value column, decrypts
/// the key cell of matching rows only, and drops noise (sentinel 0) and
/// keys absent from the main table. Returns surviving keys sorted.
inline std::vector<std::uint64_t> probe_search_table(const ProbeAtom& atom,
                                                     const SearchTable& search,
                                                     const Cipher& cipher,
                                                     const CipherKey& search_key,
                                                     const Table& main,
                                                     DecryptionCounter& counter,
                                                     ExecStats& stats) {
    std::vector<std::uint64_t> keys;
    for (const SearchRow& row : search.rows()) {
        if (!eval_atom_on_value(*atom.atom, row.search_value)) continue;
        stats.keys_probed += 1;
        stats.decrypt_calls_inner += 1;
        Bytes plain = cipher.decrypt(row.enc_key, search_key, counter);
        std::uint64_t key = be64_decode(plain);
        if (key == kNoiseSentinelKey || main.lookup_by_key(key) == nullptr) {
            stats.noise_filtered += 1;
            continue;
        }
        keys.push_back(key);
    }
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    return keys;
}

namespace detail {

inline std::vector<std::uint64_t> intersect_keys(const std::vector<std::uint64_t>& a,
                                                 const std::vector<std::uint64_t>& b) {
    std::vector<std::uint64_t> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline std::vector<std::uint64_t> unite_keys(const std::vector<std::uint64_t>& a,
                                             const std::vector<std::uint64_t>& b) {
    std::vector<std::uint64_t> out;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline std::vector<std::uint64_t> eval_keyset(const KeySetExpr& expr,
                                              const ProtectedPair& pair, const Cipher& cipher,
                                              const TableKeys& keys,
                                              DecryptionCounter& counter, ExecStats& stats) {
    if (const auto* probe = std::get_if<KsProbe>(&expr.node)) {
        auto it = pair.search_tables.find(probe->probe.column);
        if (it == pair.search_tables.end())
            fail(Errc::internal, "plan references a missing search table");
        return probe_search_table(probe->probe, it->second, cipher, keys.search, pair.main,
                                  counter, stats);
    }
    if (const auto* plain = std::get_if<KsPlain>(&expr.node)) {
        // Plain subtree: evaluated over main-table plaintext columns, no
        // ciphertext involved.
        std::vector<std::uint64_t> out;
        for (const Record& row : pair.main.rows())
            if (eval_predicate_on_record(*plain->pred, row, pair.main)) out.push_back(row.key);
        std::sort(out.begin(), out.end());
        return out;
    }
    if (const auto* conj = std::get_if<KsAnd>(&expr.node))
        return intersect_keys(eval_keyset(*conj->left, pair, cipher, keys, counter, stats),
                              eval_keyset(*conj->right, pair, cipher, keys, counter, stats));
    const auto& disj = std::get<KsOr>(expr.node);
    return unite_keys(eval_keyset(*disj.left, pair, cipher, keys, counter, stats),
                      eval_keyset(*disj.right, pair, cipher, keys, counter, stats));
}

inline std::vector<FieldValue> project_row(const Record& row,
                                           const std::vector<std::size_t>& columns,
                                           const std::vector<ColumnSpec>& schema,
                                           const Cipher& cipher, const CipherKey& main_key,
                                           DecryptionCounter& counter, ExecStats& stats) {
    std::vector<FieldValue> out;
    out.reserve(columns.size());
    for (std::size_t col : columns) {
        const FieldValue& field = row.fields[col];
        if (const auto* env = std::get_if<CipherEnvelope>(&field)) {
            stats.decrypt_calls_outer += 1;
            Bytes plain = cipher.decrypt(*env, main_key, counter);
            out.push_back(parse_plain(to_string(plain), schema[col].kind));
        } else {
            out.push_back(field);
        }
    }
    return out;
}

inline std::vector<std::size_t> projection_indexes(const std::vector<std::string>& names,
                                                   const Table& table) {
    std::vector<std::size_t> out;
    out.reserve(names.size());
    for (const std::string& name : names) {
        auto index = table.column_index(name);
        if (!index) fail(Errc::internal, "unresolved projection column");
        out.push_back(*index);
    }
    return out;
}

} // namespace detail

/// Runs a plan over a protected pair.
///
/// Direct plans scan the main table, never touch a search table, and
/// decrypt only the projected sensitive fields of matching rows.
/// Rewritten plans gate on authorization first, then probe search
/// tables (inner decryptions), filter noise, combine key sets, fetch by
/// key, apply the plain residual, and decrypt projected sensitive fields
/// (outer decryptions).
inline ResultSet execute(const QueryPlan& plan, const ProtectedPair& pair,
                         const Cipher& cipher, const TableKeys& keys,
                         const AuthContext& auth, DecryptionCounter& counter) {
    auto started = std::chrono::steady_clock::now();
    ResultSet result;

    if (const auto* direct = std::get_if<DirectPlan>(&plan)) {
        result.columns = direct->projection;
        auto columns = detail::projection_indexes(direct->projection, pair.main);
        std::vector<const Record*> matches;
        for (const Record& row : pair.main.rows()) {
            if (direct->ast.predicate &&
                !eval_predicate_on_record(*direct->ast.predicate, row, pair.main))
                continue;
            matches.push_back(&row);
        }
        std::sort(matches.begin(), matches.end(),
                  [](const Record* a, const Record* b) { return a->key < b->key; });
        for (const Record* row : matches)
            result.rows.push_back(detail::project_row(*row, columns, pair.main.schema(), cipher,
                                                      keys.main, counter, result.stats));
    } else {
        const auto& plan_body = std::get<RewrittenPlan>(plan);
        if (!auth.granted.contains(pair.meta.table_name))
            fail(Errc::unauthorized,
                 "user '" + auth.user + "' has no grant for the secure schema of '" +
                     pair.meta.table_name + "'");
        result.columns = plan_body.projection;
        auto columns = detail::projection_indexes(plan_body.projection, pair.main);
        std::vector<std::uint64_t> matched_keys =
            detail::eval_keyset(*plan_body.keyset, pair, cipher, keys, counter, result.stats);
        for (std::uint64_t key : matched_keys) {
            const Record* row = pair.main.lookup_by_key(key);
            if (row == nullptr) fail(Errc::internal, "matched key vanished from the main table");
            if (plan_body.residual &&
                !eval_predicate_on_record(*plan_body.residual, *row, pair.main))
                continue;
            result.rows.push_back(detail::project_row(*row, columns, pair.main.schema(), cipher,
                                                      keys.main, counter, result.stats));
        }
    }

    result.stats.keys_matched = result.rows.size();
    result.status = result.rows.empty() ? SearchStatus::unsuccessful : SearchStatus::found;
    result.stats.elapsed = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::steady_clock::now() - started);
    return result;
}

/// The strategy the scheme competes against: decrypt every value of each
/// sensitive column the query references (exactly N calls per column),
/// then evaluate the predicate over plaintext. Same results, flat cost.
inline ResultSet baseline_full_decrypt(const QueryAst& ast, const ProtectedPair& pair,
                                       const Cipher& cipher, const CipherKey& main_key,
                                       DecryptionCounter& counter) {
    auto started = std::chrono::steady_clock::now();
    Classification cls = classify(ast, pair.meta, pair.main.schema());
    if (!cls.touches_encrypted)
        fail(Errc::invalid_config,
             "baseline strategy requires a query touching an encrypted column");

    const std::vector<ColumnSpec>& schema = pair.main.schema();
    std::set<std::size_t> referenced;
    for (const ProbeAtom& atom : cls.encrypted_atoms)
        referenced.insert(*pair.main.column_index(atom.column));
    for (const std::string& name : cls.projection) {
        std::size_t index = *pair.main.column_index(name);
        if (schema[index].sensitive) referenced.insert(index);
    }

    ResultSet result;
    result.columns = cls.projection;
    auto columns = detail::projection_indexes(cls.projection, pair.main);

    // Whole-column decryption up front; projections reuse the plaintext
    // already in hand.
    std::vector<Record> plain_rows;
    plain_rows.reserve(pair.main.row_count());
    for (const Record& row : pair.main.rows()) {
        Record plain = row;
        for (std::size_t col : referenced) {
            const auto* env = std::get_if<CipherEnvelope>(&plain.fields[col]);
            if (env == nullptr) continue;
            result.stats.decrypt_calls_inner += 1;
            plain.fields[col] =
                parse_plain(to_string(cipher.decrypt(*env, main_key, counter)), schema[col].kind);
        }
        plain_rows.push_back(std::move(plain));
    }
    result.stats.keys_probed = plain_rows.size();

    std::vector<const Record*> matches;
    for (const Record& row : plain_rows) {
        if (ast.predicate && !eval_predicate_on_record(*ast.predicate, row, pair.main)) continue;
        matches.push_back(&row);
    }
    std::sort(matches.begin(), matches.end(),
              [](const Record* a, const Record* b) { return a->key < b->key; });
    for (const Record* row : matches) {
        std::vector<FieldValue> out;
        out.reserve(columns.size());
        for (std::size_t col : columns) out.push_back(row->fields[col]);
        result.rows.push_back(std::move(out));
    }

    result.stats.keys_matched = result.rows.size();
    result.status = result.rows.empty() ? SearchStatus::unsuccessful : SearchStatus::found;
    result.stats.elapsed = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::steady_clock::now() - started);
    return result;
}

/// Tab-separated rendering with a header line; the CLI's output format.
/// Text cells escape tab, newline and backslash so rows stay one line.
inline std::string render_result_tsv(const ResultSet& result) {
    std::string out;
    for (std::size_t i = 0; i < result.columns.size(); ++i) {
        if (i > 0) out.push_back('\t');
        out += result.columns[i];
    }
    out.push_back('\n');
    for (const auto& row : result.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i > 0) out.push_back('\t');
            if (const auto* text = std::get_if<std::string>(&row[i]))
                out += escape_field_text(*text);
            else
                out += render_plain(row[i]);
        }
        out.push_back('\n');
    }
    return out;
}

inline std::string render_stats_line(const ExecStats& stats) {
    std::string out = "# keys_probed=" + std::to_string(stats.keys_probed);
    out += " keys_matched=" + std::to_string(stats.keys_matched);
    out += " noise_filtered=" + std::to_string(stats.noise_filtered);
    out += " decrypt_calls_inner=" + std::to_string(stats.decrypt_calls_inner);
    out += " decrypt_calls_outer=" + std::to_string(stats.decrypt_calls_outer);
    out += " elapsed_us=" + std::to_string(stats.elapsed.count());
    return out;
}

} // namespace sealdb
