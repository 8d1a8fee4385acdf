#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sealdb/error.hpp"
#include "sealdb/executor.hpp"
#include "sealdb/protect.hpp"
#include "sealdb/query.hpp"
#include "sealdb/storage.hpp"

namespace sealdb {

struct BenchConfig {
    std::size_t row_count = 50'000;
    std::vector<double> selectivities; // fractions, strictly increasing, in (0,1]
    int repetitions = 5;
    std::chrono::microseconds decrypt_delay{2};
    Rational noise_fraction{1, 20};
    std::uint64_t seed = 1;

    /// 2% steps up to 60% by default.
    static std::vector<double> steps(double step_percent = 2.0, double max_percent = 60.0) {
        std::vector<double> out;
        for (double p = step_percent; p <= max_percent + 1e-9; p += step_percent)
            out.push_back(p / 100.0);
        return out;
    }

    void validate() const {
        if (row_count == 0) fail(Errc::invalid_config, "row_count must be positive");
        if (repetitions < 1) fail(Errc::invalid_config, "repetitions must be at least 1");
        if (selectivities.empty()) fail(Errc::invalid_config, "no selectivity steps");
        double prev = 0.0;
        for (double s : selectivities) {
            if (s <= prev || s > 1.0)
                fail(Errc::invalid_config,
                     "selectivity steps must be strictly increasing within (0,1]");
            prev = s;
        }
    }
};

struct WorkloadQuery {
    std::string sql;
    std::size_t expected_rows = 0;
    double selectivity = 0.0;
};

struct Workload {
    Table table;
    std::vector<WorkloadQuery> queries;
};

inline constexpr std::string_view kBenchTableName = "bench";

/// Synthetic table and queries with exact selectivities: the sensitive
/// column holds a permutation of 1..N, so `BETWEEN lo AND lo+m-1`
/// matches exactly m rows. The distribution is constructed, not sampled.
inline Workload generate_workload(const BenchConfig& config) {
    config.validate();
    const std::size_t n = config.row_count;

    std::vector<std::int64_t> amounts(n);
    for (std::size_t i = 0; i < n; ++i) amounts[i] = static_cast<std::int64_t>(i + 1);
    seeded_shuffle(amounts, derive_seed(config.seed, "workload-values"));

    Table table(std::vector<ColumnSpec>{{"id", ColumnKind::integer, false},
                                        {"amount", ColumnKind::integer, true}});
    for (std::size_t i = 0; i < n; ++i) {
        Record row;
        row.key = i + 1;
        row.fields = {static_cast<std::int64_t>(i + 1), amounts[i]};
        table.append(std::move(row));
    }

    SplitMix64 rng(derive_seed(config.seed, "workload-queries"));
    std::vector<WorkloadQuery> queries;
    queries.reserve(config.selectivities.size());
    for (double fraction : config.selectivities) {
        auto m = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
        m = std::clamp<std::size_t>(m, 1, n);
        std::uint64_t lo = 1 + rng.next_below(n - m + 1);
        std::uint64_t hi = lo + m - 1;
        WorkloadQuery query;
        query.sql = "SELECT id, amount FROM " + std::string(kBenchTableName) +
                    " WHERE amount BETWEEN " + std::to_string(lo) + " AND " +
                    std::to_string(hi);
        query.expected_rows = m;
        query.selectivity = static_cast<double>(m) / static_cast<double>(n);
        queries.push_back(std::move(query));
    }
    return Workload{std::move(table), std::move(queries)};
}

struct BenchSample {
    double selectivity = 0.0;
    double time_rewritten_us = 0.0;
    double time_baseline_us = 0.0;
    std::uint64_t decrypts_rewritten = 0;
    std::uint64_t decrypts_baseline = 0;

    friend bool operator==(const BenchSample&, const BenchSample&) = default;
};

struct BenchReport {
    std::vector<BenchSample> samples;
    std::optional<double> crossover;

    friend bool operator==(const BenchReport&, const BenchReport&) = default;
};

/// Linear interpolation between the adjacent steps where the sign of
/// (time_rewritten - time_baseline) first flips; absent when the curves
/// never cross within the sweep.
inline std::optional<double> compute_crossover(const std::vector<BenchSample>& samples) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
        double d = samples[i].time_rewritten_us - samples[i].time_baseline_us;
        if (d == 0.0) return samples[i].selectivity;
        if (i + 1 == samples.size()) break;
        double next = samples[i + 1].time_rewritten_us - samples[i + 1].time_baseline_us;
        if ((d < 0.0 && next >= 0.0) || (d > 0.0 && next <= 0.0)) {
            double span = samples[i + 1].selectivity - samples[i].selectivity;
            return samples[i].selectivity + span * (0.0 - d) / (next - d);
        }
    }
    return std::nullopt;
}

namespace detail {

inline double median(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

} // namespace detail

/// Runs both strategies over every workload query, `repetitions` times
/// each, strictly sequentially. Records median wall time and exact
/// decryption counts per step, verifies the strategies agree row for row
/// (anything else aborts the run), and locates the crossover.
inline BenchReport run_bench(const BenchConfig& config, const ProtectedPair& pair,
                             const Workload& workload, const Cipher& cipher,
                             const TableKeys& keys) {
    config.validate();
    AuthContext auth{"bench-harness", {pair.meta.table_name}};
    BenchReport report;
    report.samples.reserve(workload.queries.size());

    for (const WorkloadQuery& query : workload.queries) {
        QueryAst ast = parse_query(query.sql);
        QueryPlan plan = rewrite(ast, pair.meta, pair.main.schema());

        BenchSample sample;
        sample.selectivity = query.selectivity;
        std::vector<double> rewritten_times;
        std::vector<double> baseline_times;
        std::string rewritten_rendered;
        std::string baseline_rendered;

        for (int rep = 0; rep < config.repetitions; ++rep) {
            DecryptionCounter counter{0, "bench-rewritten"};
            auto t0 = std::chrono::steady_clock::now();
            ResultSet result = execute(plan, pair, cipher, keys, auth, counter);
            auto t1 = std::chrono::steady_clock::now();
            rewritten_times.push_back(
                std::chrono::duration<double, std::micro>(t1 - t0).count());
            if (rep == 0) {
                sample.decrypts_rewritten = counter.count;
                rewritten_rendered = render_result_tsv(result);
                if (result.rows.size() != query.expected_rows)
                    fail(Errc::mismatched_workload,
                         "query matched " + std::to_string(result.rows.size()) +
                             " rows, workload expected " + std::to_string(query.expected_rows));
            } else if (counter.count != sample.decrypts_rewritten) {
                fail(Errc::mismatched_workload, "decryption count varied between repetitions");
            }
        }

        for (int rep = 0; rep < config.repetitions; ++rep) {
            DecryptionCounter counter{0, "bench-baseline"};
            auto t0 = std::chrono::steady_clock::now();
            ResultSet result = baseline_full_decrypt(ast, pair, cipher, keys.main, counter);
            auto t1 = std::chrono::steady_clock::now();
            baseline_times.push_back(
                std::chrono::duration<double, std::micro>(t1 - t0).count());
            if (rep == 0) {
                sample.decrypts_baseline = counter.count;
                baseline_rendered = render_result_tsv(result);
            }
        }

        if (rewritten_rendered != baseline_rendered)
            fail(Errc::mismatched_workload,
                 "strategies disagree on '" + query.sql + "'");

        sample.time_rewritten_us = detail::median(std::move(rewritten_times));
        sample.time_baseline_us = detail::median(std::move(baseline_times));
        report.samples.push_back(sample);
    }

    report.crossover = compute_crossover(report.samples);
    return report;
}

// ---------------------------------------------------------------------------
// CSV emission: plot-ready, one row per step, trailing crossover comment.
// Numbers print in shortest round-trip form so re-parsing reproduces the
// report exactly.
// ---------------------------------------------------------------------------

inline std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc{}) fail(Errc::internal, "double formatting failed");
    return std::string(buf, ptr);
}

inline constexpr std::string_view kBenchCsvHeader =
    "selectivity,time_rewritten_us,time_baseline_us,decrypts_rewritten,decrypts_baseline";

inline void emit_csv(const BenchReport& report, std::ostream& out) {
    out << kBenchCsvHeader << '\n';
    for (const BenchSample& s : report.samples) {
        out << format_double(s.selectivity) << ',' << format_double(s.time_rewritten_us) << ','
            << format_double(s.time_baseline_us) << ',' << s.decrypts_rewritten << ','
            << s.decrypts_baseline << '\n';
    }
    out << "# crossover=" << (report.crossover ? format_double(*report.crossover) : "none")
        << '\n';
    if (!out) fail(Errc::io_error, "report write failed");
}

inline BenchReport parse_report_csv(std::istream& in) {
    Table::LineReader reader(in);
    auto header = reader.next();
    if (!header || *header != kBenchCsvHeader)
        fail(Errc::format_error, "missing report header", 0);
    BenchReport report;
    bool saw_crossover = false;
    while (true) {
        std::size_t offset = reader.offset();
        auto line = reader.next();
        if (!line) break;
        if (line->empty()) continue;
        if (line->rfind("# crossover=", 0) == 0) {
            std::string_view value(*line);
            value.remove_prefix(std::string_view("# crossover=").size());
            if (value != "none") {
                double parsed = 0.0;
                auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), parsed);
                if (ec != std::errc{} || ptr != value.data() + value.size())
                    fail(Errc::format_error, "malformed crossover value", offset);
                report.crossover = parsed;
            }
            saw_crossover = true;
            continue;
        }
        std::vector<std::string_view> parts;
        std::string_view rest(*line);
        while (true) {
            auto comma = rest.find(',');
            if (comma == std::string_view::npos) {
                parts.push_back(rest);
                break;
            }
            parts.push_back(rest.substr(0, comma));
            rest.remove_prefix(comma + 1);
        }
        if (parts.size() != 5) fail(Errc::format_error, "report rows have five fields", offset);
        auto parse_double_part = [offset](std::string_view text) {
            double value = 0.0;
            auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
            if (ec != std::errc{} || ptr != text.data() + text.size())
                fail(Errc::format_error, "malformed number in report", offset);
            return value;
        };
        auto parse_u64_part = [offset](std::string_view text) {
            std::uint64_t value = 0;
            auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
            if (ec != std::errc{} || ptr != text.data() + text.size())
                fail(Errc::format_error, "malformed count in report", offset);
            return value;
        };
        BenchSample sample;
        sample.selectivity = parse_double_part(parts[0]);
        sample.time_rewritten_us = parse_double_part(parts[1]);
        sample.time_baseline_us = parse_double_part(parts[2]);
        sample.decrypts_rewritten = parse_u64_part(parts[3]);
        sample.decrypts_baseline = parse_u64_part(parts[4]);
        report.samples.push_back(sample);
    }
    if (!saw_crossover) fail(Errc::format_error, "report missing crossover line");
    return report;
}

} // namespace sealdb
