#pragma once

#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sealdb/sealdb.hpp"

namespace fixtures {

// Three-employee salary table used throughout: Salary is the sensitive
// column, everything else stays plain.
inline const char* kEmployeeCsv =
    "Key,Emp_Name,Salary,Job_Title\n"
    "1,Rajesh,10000,Manager\n"
    "2,Suresh,8000,Asst. Manager\n"
    "3,Mahesh,6000,Peon\n";

inline std::vector<sealdb::ColumnSpec> employee_schema() {
    return {{"Key", sealdb::ColumnKind::integer, false},
            {"Emp_Name", sealdb::ColumnKind::text, false},
            {"Salary", sealdb::ColumnKind::integer, true},
            {"Job_Title", sealdb::ColumnKind::text, false}};
}

inline sealdb::Table employee_table() {
    std::istringstream in(kEmployeeCsv);
    return sealdb::ingest_csv(in, employee_schema());
}

inline sealdb::ProtectConfig employee_protect_config(sealdb::Rational noise = {0, 1},
                                                     std::uint64_t shuffle_seed = 11,
                                                     std::uint64_t noise_seed = 12) {
    sealdb::ProtectConfig config;
    config.table_name = "Encrypted_Data_Table";
    config.noise_fraction = noise;
    config.shuffle_seed = shuffle_seed;
    config.noise_seed = noise_seed;
    config.principals = {"alice"};
    return config;
}

/// Employee fixture protected in one go with the test cipher.
struct ProtectedEmployees {
    sealdb::XorStreamCipher cipher;
    sealdb::TableKeys keys;
    sealdb::Table plain;
    sealdb::ProtectedPair pair;

    explicit ProtectedEmployees(sealdb::Rational noise = {0, 1},
                                std::uint64_t shuffle_seed = 11,
                                std::uint64_t noise_seed = 12)
        : keys(sealdb::derive_table_keys(cipher, sealdb::to_bytes("test-master-secret"))),
          plain(employee_table()),
          pair(sealdb::protect(plain, cipher, keys,
                               employee_protect_config(noise, shuffle_seed, noise_seed))) {}

    [[nodiscard]] sealdb::QueryPlan plan(const std::string& sql) const {
        return sealdb::rewrite(sealdb::parse_query(sql), pair.meta, pair.main.schema());
    }

    [[nodiscard]] sealdb::AuthContext alice() const {
        return sealdb::make_auth_context("alice", pair.meta);
    }
};

/// Temp directory that cleans up after itself.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("sealdb_test_" + std::to_string(rd()) + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline std::string save_table_to_string(const sealdb::Table& table) {
    std::ostringstream out;
    table.save(out);
    return out.str();
}

} // namespace fixtures
