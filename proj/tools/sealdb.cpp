// sealdb command-line tool: protect a CSV into an encrypted table plus
// search tables, query it with selective decryption, explain rewritten
// plans, benchmark the two execution strategies, and inspect a protected
// directory.
//
// stdout carries only command output; diagnostics go to stderr. Exit
// codes are stable per error class:
//   0  success (including empty query results)
//   2  command-line usage error
//   3  SQL syntax error
//   4  semantic error (unknown table/column, type mismatch, negation)
//   5  unauthorized
//   6  I/O error
//   7  file format error or version mismatch
//   8  data/config error (CSV problems, schema spec, bad fractions)
//   9  cryptographic error
//  10  internal error

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sealdb/sealdb.hpp"

namespace {

using namespace sealdb;

int exit_code_for(Errc code) {
    switch (code) {
    case Errc::syntax_error:
        return 3;
    case Errc::unknown_column:
    case Errc::unknown_table:
    case Errc::type_mismatch:
    case Errc::unsupported_negation:
        return 4;
    case Errc::unauthorized:
        return 5;
    case Errc::io_error:
        return 6;
    case Errc::format_error:
    case Errc::version_mismatch:
        return 7;
    case Errc::schema_mismatch:
    case Errc::duplicate_key:
    case Errc::null_sensitive_value:
    case Errc::parse_error:
    case Errc::no_sensitive_column:
    case Errc::empty_domain:
    case Errc::invalid_config:
        return 8;
    case Errc::invalid_key:
    case Errc::invalid_nonce:
    case Errc::auth_failure:
    case Errc::nonce_exhaustion:
        return 9;
    case Errc::mismatched_workload:
    case Errc::internal:
        return 10;
    }
    return 10;
}

std::vector<ColumnSpec> parse_schema_spec(const std::string& spec) {
    std::vector<ColumnSpec> schema;
    std::stringstream stream(spec);
    std::string triple;
    while (std::getline(stream, triple, ',')) {
        auto first = triple.find(':');
        auto second = triple.rfind(':');
        if (first == std::string::npos || second == first)
            fail(Errc::invalid_config,
                 "schema entries look like name:kind:sensitive, got '" + triple + "'");
        ColumnSpec col;
        col.name = triple.substr(0, first);
        col.kind = parse_kind(triple.substr(first + 1, second - first - 1));
        std::string flag = triple.substr(second + 1);
        if (flag == "1" || flag == "true") col.sensitive = true;
        else if (flag == "0" || flag == "false") col.sensitive = false;
        else
            fail(Errc::invalid_config, "sensitivity flag must be 0/1/true/false, got '" + flag +
                                           "'");
        schema.push_back(std::move(col));
    }
    if (schema.empty()) fail(Errc::invalid_config, "empty schema spec");
    return schema;
}

Bytes random_master_secret() {
    std::random_device rd;
    Bytes master(32);
    for (auto& b : master) b = static_cast<std::uint8_t>(rd() & 0xff);
    return master;
}

std::string read_sql_argument(const std::string& arg) {
    if (arg != "-") return arg;
    std::ostringstream buffer;
    buffer << std::cin.rdbuf();
    return buffer.str();
}

TableKeys keys_from_meta(const Cipher& cipher, const SecureMetadata& meta) {
    if (meta.master_secret.empty())
        fail(Errc::invalid_config,
             "metadata holds no master secret; this directory cannot be queried");
    return derive_table_keys(cipher, meta.master_secret);
}

struct ProtectArgs {
    std::string csv_path;
    std::string schema_spec;
    std::string out_dir;
    std::string table_name = "Encrypted_Data_Table";
    std::string noise = "0.05";
    std::string cipher_name = "aes256-gcm";
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::vector<std::string> grants;
};

int cmd_protect(const ProtectArgs& args) {
    std::ifstream csv(args.csv_path, std::ios::binary);
    if (!csv) fail(Errc::io_error, "cannot read " + args.csv_path);
    std::vector<ColumnSpec> schema = parse_schema_spec(args.schema_spec);
    Table table = ingest_csv(csv, schema);

    ProtectConfig config;
    config.table_name = args.table_name;
    config.noise_fraction = Rational::parse(args.noise);
    if (args.seed_given) {
        config.shuffle_seed = derive_seed(args.seed, "shuffle");
        config.noise_seed = derive_seed(args.seed, "noise");
    } else {
        std::random_device rd;
        config.shuffle_seed = (static_cast<std::uint64_t>(rd()) << 32) | rd();
        config.noise_seed = (static_cast<std::uint64_t>(rd()) << 32) | rd();
    }
    config.principals = args.grants.empty()
                            ? std::set<std::string>{"admin"}
                            : std::set<std::string>(args.grants.begin(), args.grants.end());
    config.master_secret = random_master_secret();

    auto cipher = make_cipher(args.cipher_name);
    TableKeys keys = derive_table_keys(*cipher, config.master_secret);
    ProtectedPair pair = protect(table, *cipher, keys, config);
    save_protected(pair, args.out_dir);

    std::cout << "protected " << pair.main.row_count() << " rows into " << args.out_dir
              << "\n";
    std::cout << "table: " << config.table_name << "  cipher: " << cipher->name() << "\n";
    for (const auto& [column, entry] : pair.meta.aliases) {
        const SearchTable& st = pair.search_tables.at(column);
        std::size_t noise_rows = st.size() - pair.main.row_count();
        std::cout << "search table " << entry.table_id << ".tbl: column " << column << ", "
                  << st.size() << " rows (" << noise_rows << " noise), aliases "
                  << entry.key_column << "/" << entry.value_column << "\n";
    }
    std::cout << "principals:";
    for (const std::string& user : pair.meta.principals) std::cout << ' ' << user;
    std::cout << "\n";
    return 0;
}

struct QueryArgs {
    std::string dir;
    std::string sql;
    std::string user = "admin";
    std::string strategy = "rewritten";
    bool stats = false;
};

int cmd_query(const QueryArgs& args) {
    ProtectedPair pair = load_protected(args.dir);
    auto cipher = make_cipher(pair.meta.cipher_name);
    TableKeys keys = keys_from_meta(*cipher, pair.meta);
    QueryAst ast = parse_query(read_sql_argument(args.sql));

    DecryptionCounter counter{0, "cli"};
    ResultSet result;
    if (args.strategy == "baseline") {
        result = baseline_full_decrypt(ast, pair, *cipher, keys.main, counter);
    } else if (args.strategy == "rewritten") {
        QueryPlan plan = rewrite(ast, pair.meta, pair.main.schema());
        AuthContext auth = make_auth_context(args.user, pair.meta);
        result = execute(plan, pair, *cipher, keys, auth, counter);
    } else {
        fail(Errc::invalid_config, "strategy must be rewritten or baseline");
    }

    std::cout << render_result_tsv(result);
    if (args.stats) std::cout << render_stats_line(result.stats) << "\n";
    if (result.status == SearchStatus::unsuccessful)
        std::cerr << "Search is unsuccessful\n";
    return 0;
}

int cmd_explain(const std::string& dir, const std::string& sql_arg) {
    ProtectedPair pair = load_protected(dir);
    QueryAst ast = parse_query(read_sql_argument(sql_arg));
    QueryPlan plan = rewrite(ast, pair.meta, pair.main.schema());
    std::cout << explain_plan(plan, pair.main.schema()) << "\n";
    return 0;
}

struct BenchArgs {
    std::size_t rows = 50'000;
    double step_percent = 2.0;
    double max_percent = 60.0;
    int reps = 5;
    std::int64_t delay_us = 2;
    std::string noise = "0.05";
    std::uint64_t seed = 1;
    std::string out_path;
};

int cmd_bench(const BenchArgs& args) {
    BenchConfig config;
    config.row_count = args.rows;
    config.selectivities = BenchConfig::steps(args.step_percent, args.max_percent);
    config.repetitions = args.reps;
    config.decrypt_delay = std::chrono::microseconds{args.delay_us};
    config.noise_fraction = Rational::parse(args.noise);
    config.seed = args.seed;
    config.validate();

    std::cerr << "generating " << config.row_count << " rows, "
              << config.selectivities.size() << " selectivity steps\n";
    Workload workload = generate_workload(config);

    XorStreamCipher cipher(config.decrypt_delay);
    ProtectConfig protect_config;
    protect_config.table_name = std::string(kBenchTableName);
    protect_config.noise_fraction = config.noise_fraction;
    protect_config.shuffle_seed = derive_seed(config.seed, "shuffle");
    protect_config.noise_seed = derive_seed(config.seed, "noise");
    protect_config.principals = {"bench-harness"};
    TableKeys keys = derive_table_keys(cipher, to_bytes("bench-master"));
    ProtectedPair pair = protect(workload.table, cipher, keys, protect_config);
    std::cerr << "protected; sweeping (" << config.repetitions << " repetitions per step, "
              << args.delay_us << "us decrypt delay)\n";

    BenchReport report = run_bench(config, pair, workload, cipher, keys);

    if (args.out_path.empty()) {
        emit_csv(report, std::cout);
    } else {
        std::ofstream out(args.out_path, std::ios::binary);
        if (!out) fail(Errc::io_error, "cannot write " + args.out_path);
        emit_csv(report, out);
    }
    if (report.crossover)
        std::cerr << "crossover at selectivity " << format_double(*report.crossover) << "\n";
    else
        std::cerr << "no crossover within the sweep\n";
    return 0;
}

int cmd_inspect(const std::string& dir) {
    ProtectedPair pair = load_protected(dir);
    std::cout << "table: " << pair.meta.table_name << "\n";
    std::cout << "cipher: " << pair.meta.cipher_name << "\n";
    std::cout << "rows: " << pair.main.row_count() << "\n";
    std::cout << "noise fraction: " << pair.meta.noise_fraction.to_string() << "\n";
    std::cout << "schema:";
    for (const ColumnSpec& col : pair.main.schema())
        std::cout << ' ' << col.name << ':' << kind_name(col.kind)
                  << (col.sensitive ? ":sensitive" : "");
    std::cout << "\n";
    for (const auto& [column, entry] : pair.meta.aliases) {
        const SearchTable& st = pair.search_tables.at(column);
        std::cout << "search table " << entry.table_id << ".tbl: " << st.size() << " rows for "
                  << column << "\n";
    }
    std::cout << "principals:";
    for (const std::string& user : pair.meta.principals) std::cout << ' ' << user;
    std::cout << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Encrypted tables with rewritten, selectively decrypting queries"};
    app.require_subcommand(1);

    ProtectArgs protect_args;
    CLI::App* protect_cmd =
        app.add_subcommand("protect", "Encrypt a CSV into a protected directory");
    protect_cmd->add_option("csv", protect_args.csv_path, "input CSV file")->required();
    protect_cmd
        ->add_option("--schema", protect_args.schema_spec,
                     "column spec: name:kind:sensitive,... (kind: integer|decimal|text)")
        ->required();
    protect_cmd->add_option("--out", protect_args.out_dir, "output directory")->required();
    protect_cmd->add_option("--table", protect_args.table_name, "logical table name");
    protect_cmd->add_option("--noise", protect_args.noise, "noise fraction (default 0.05)");
    protect_cmd->add_option("--cipher", protect_args.cipher_name,
                            "cipher: aes256-gcm (default) or xor-stream (tests only)");
    protect_cmd->add_option("--seed", protect_args.seed, "seed for shuffle/noise/aliases")
        ->each([&protect_args](const std::string&) { protect_args.seed_given = true; });
    protect_cmd->add_option("--grant", protect_args.grants,
                            "user granted access to the secure schema (repeatable; "
                            "default: admin)");

    QueryArgs query_args;
    CLI::App* query_cmd = app.add_subcommand("query", "Run a SELECT over a protected directory");
    query_cmd->add_option("dir", query_args.dir, "protected directory")->required();
    query_cmd->add_option("sql", query_args.sql, "SELECT statement ('-' reads stdin)")
        ->required();
    query_cmd->add_option("--user", query_args.user, "requesting user (default admin)");
    query_cmd->add_option("--strategy", query_args.strategy,
                          "rewritten (default) or baseline full-column decryption");
    query_cmd->add_flag("--stats", query_args.stats, "append an execution stats line");

    std::string explain_dir;
    std::string explain_sql;
    CLI::App* explain_cmd =
        app.add_subcommand("explain", "Show the rewritten plan without executing");
    explain_cmd->add_option("dir", explain_dir, "protected directory")->required();
    explain_cmd->add_option("sql", explain_sql, "SELECT statement ('-' reads stdin)")
        ->required();

    BenchArgs bench_args;
    CLI::App* bench_cmd =
        app.add_subcommand("bench", "Sweep selectivity and time both strategies");
    bench_cmd->add_option("--rows", bench_args.rows, "table size (default 50000)");
    bench_cmd->add_option("--steps", bench_args.step_percent,
                          "selectivity step in percent (default 2)");
    bench_cmd->add_option("--max-selectivity", bench_args.max_percent,
                          "sweep upper bound in percent (default 60)");
    bench_cmd->add_option("--reps", bench_args.reps, "repetitions per step (default 5)");
    bench_cmd->add_option("--delay-us", bench_args.delay_us,
                          "artificial per-decryption delay in microseconds (default 2)");
    bench_cmd->add_option("--noise", bench_args.noise, "noise fraction (default 0.05)");
    bench_cmd->add_option("--seed", bench_args.seed, "workload seed (default 1)");
    bench_cmd->add_option("--out", bench_args.out_path, "CSV output path (default stdout)");

    std::string inspect_dir;
    CLI::App* inspect_cmd =
        app.add_subcommand("inspect", "Summarize a protected directory without decrypting");
    inspect_cmd->add_option("dir", inspect_dir, "protected directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (protect_cmd->parsed()) return cmd_protect(protect_args);
        if (query_cmd->parsed()) return cmd_query(query_args);
        if (explain_cmd->parsed()) return cmd_explain(explain_dir, explain_sql);
        if (bench_cmd->parsed()) return cmd_bench(bench_args);
        if (inspect_cmd->parsed()) return cmd_inspect(inspect_dir);
    } catch (const sealdb::Error& e) {
        std::cerr << "sealdb: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "sealdb: unexpected error: " << e.what() << "\n";
        return 10;
    }
    return 2;
}
