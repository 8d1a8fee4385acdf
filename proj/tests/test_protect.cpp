#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "sealdb/sealdb.hpp"

using namespace sealdb;

namespace {

struct Protected {
    XorStreamCipher cipher;
    TableKeys keys;
    ProtectedPair pair;

    Protected(const Table& table, const ProtectConfig& config)
        : keys(derive_table_keys(cipher, to_bytes("test-master-secret"))),
          pair(protect(table, cipher, keys, config)) {}
};

std::uint64_t decrypt_key(const Cipher& cipher, const CipherKey& key,
                          const CipherEnvelope& env) {
    DecryptionCounter counter;
    return be64_decode(cipher.decrypt(env, key, counter));
}

std::multiset<std::pair<std::uint64_t, std::string>> decrypted_pairs(const Cipher& cipher,
                                                                     const CipherKey& key,
                                                                     const SearchTable& st) {
    std::multiset<std::pair<std::uint64_t, std::string>> out;
    for (const SearchRow& row : st.audit_rows())
        out.emplace(decrypt_key(cipher, key, row.enc_key), render_plain(row.search_value));
    return out;
}

Table uniform_table(std::size_t rows) {
    Table table({{"k", ColumnKind::integer, false}, {"v", ColumnKind::integer, true}});
    for (std::size_t i = 1; i <= rows; ++i) {
        Record record;
        record.key = i;
        record.fields = {static_cast<std::int64_t>(i), static_cast<std::int64_t>(i * 10)};
        table.append(std::move(record));
    }
    return table;
}

} // namespace

TEST_CASE("protecting the employee fixture seals salaries and copies them searchable") {
    Protected p(fixtures::employee_table(), fixtures::employee_protect_config());

    for (const Record& row : p.pair.main.rows()) {
        CHECK(is_encrypted(row.fields[2]));
        CHECK_FALSE(is_encrypted(row.fields[1]));
    }

    const SearchTable& st = p.pair.search_tables.at("Salary");
    REQUIRE(st.size() == 3);
    std::multiset<std::string> values;
    std::multiset<std::uint64_t> keys;
    for (const SearchRow& row : st.audit_rows()) {
        values.insert(render_plain(row.search_value));
        keys.insert(decrypt_key(p.cipher, p.keys.search, row.enc_key));
    }
    CHECK(values == std::multiset<std::string>{"10000", "6000", "8000"});
    CHECK(keys == std::multiset<std::uint64_t>{1, 2, 3});

    CHECK(p.pair.meta.aliases.count("Salary") == 1);
    CHECK(p.pair.meta.principals == std::set<std::string>{"alice"});
}

TEST_CASE("protecting an empty table yields empty search tables") {
    Table empty(fixtures::employee_schema());
    Protected p(empty, fixtures::employee_protect_config(Rational{1, 20}));
    CHECK(p.pair.main.row_count() == 0);
    CHECK(p.pair.search_tables.at("Salary").size() == 0);
}

TEST_CASE("noise fraction 0.05 over 1000 rows adds exactly 50 sentinel rows") {
    Protected p(uniform_table(1000), fixtures::employee_protect_config(Rational{1, 20}));
    const SearchTable& st = p.pair.search_tables.at("v");
    REQUIRE(st.size() == 1050);
    std::size_t sentinels = 0;
    for (const SearchRow& row : st.audit_rows())
        if (decrypt_key(p.cipher, p.keys.search, row.enc_key) == kNoiseSentinelKey) ++sentinels;
    CHECK(sentinels == 50);
}

TEST_CASE("build_search_table permutes its input") {
    XorStreamCipher cipher;
    CipherKey key = cipher.make_key(Bytes(16, 1));
    std::vector<std::pair<std::uint64_t, FieldValue>> values = {
        {1, std::int64_t{10000}}, {2, std::int64_t{8000}}, {3, std::int64_t{6000}}};

    auto build = [&](std::uint64_t shuffle_seed) {
        NonceSequence nonces(shuffle_seed * 1000 + 17);
        SearchTableBuildConfig config;
        config.column_name = "Salary";
        config.value_kind = ColumnKind::integer;
        config.noise_fraction = Rational{0, 1};
        config.shuffle_seed = shuffle_seed;
        config.noise_seed = 5;
        return build_search_table(values, cipher, key, config, nonces);
    };

    SearchTable a = build(1);
    SearchTable b = build(2);
    REQUIRE(a.size() == 3);
    REQUIRE(b.size() == 3);
    CHECK(decrypted_pairs(cipher, key, a) == decrypted_pairs(cipher, key, b));

    auto order = [&](const SearchTable& st) {
        std::vector<std::uint64_t> keys;
        for (const SearchRow& row : st.audit_rows())
            keys.push_back(decrypt_key(cipher, key, row.enc_key));
        return keys;
    };
    CHECK(order(a) != order(b));
}

TEST_CASE("noise values are drawn from the real value distribution") {
    Table source = uniform_table(100);
    Protected p(source, fixtures::employee_protect_config(Rational{1, 10}));
    const SearchTable& st = p.pair.search_tables.at("v");
    REQUIRE(st.size() == 110);
    std::set<std::string> real_values;
    for (const Record& row : source.rows())
        real_values.insert(render_plain(row.fields[1]));
    for (const SearchRow& row : st.audit_rows())
        CHECK(real_values.contains(render_plain(row.search_value)));
}

TEST_CASE("add_noise semantics") {
    XorStreamCipher cipher;
    CipherKey key = cipher.make_key(Bytes(16, 2));
    NonceSequence nonces(9);
    std::vector<FieldValue> domain{std::int64_t{10000}, std::int64_t{8000}, std::int64_t{6000}};

    CHECK(add_noise(domain, 0, 3, cipher, key, nonces).empty());

    auto rows = add_noise(domain, 5, 3, cipher, key, nonces);
    REQUIRE(rows.size() == 5);
    for (const SearchRow& row : rows) {
        CHECK(decrypt_key(cipher, key, row.enc_key) == kNoiseSentinelKey);
        std::int64_t v = std::get<std::int64_t>(row.search_value);
        CHECK((v == 10000 || v == 8000 || v == 6000));
    }

    std::vector<FieldValue> empty_domain;
    CHECK_THROWS_MATCHES(add_noise(empty_domain, 3, 3, cipher, key, nonces), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == Errc::empty_domain; }));
}

TEST_CASE("alias generation is deterministic, 8 uppercase letters, collision-averse") {
    AliasPair a1 = alias_columns(42, "Salary");
    AliasPair a2 = alias_columns(42, "Salary");
    CHECK(a1.key_column == a2.key_column);
    CHECK(a1.value_column == a2.value_column);
    CHECK(a1.key_column != a1.value_column);
    for (const std::string& name : {a1.key_column, a1.value_column}) {
        CHECK(name.size() == 8);
        for (char c : name) CHECK((c >= 'A' && c <= 'Z'));
    }

    AliasPair other = alias_columns(42, "Emp_Name");
    std::set<std::string> all{a1.key_column, a1.value_column, other.key_column,
                              other.value_column};
    CHECK(all.size() == 4);

    // If the natural choice is forbidden, a different deterministic pair
    // comes out.
    AliasPair avoided = alias_columns(42, "Salary", {a1.key_column});
    CHECK(avoided.key_column != a1.key_column);
    CHECK(alias_columns(42, "Salary", {a1.key_column}).key_column == avoided.key_column);
}

TEST_CASE("non-noise search rows are a bijection with main-table rows") {
    std::mt19937_64 seed_rng(99);
    for (int round = 0; round < 10; ++round) {
        Table table = uniform_table(1 + seed_rng() % 50);
        ProtectConfig config = fixtures::employee_protect_config(
            Rational{seed_rng() % 3, 10}, seed_rng(), seed_rng());
        Protected p(table, config);
        const SearchTable& st = p.pair.search_tables.at("v");

        std::map<std::uint64_t, std::string> from_search;
        for (const SearchRow& row : st.audit_rows()) {
            std::uint64_t key = decrypt_key(p.cipher, p.keys.search, row.enc_key);
            if (key == kNoiseSentinelKey) continue;
            CHECK(from_search.emplace(key, render_plain(row.search_value)).second);
        }
        REQUIRE(from_search.size() == table.row_count());
        for (const Record& row : table.rows()) {
            auto it = from_search.find(row.key);
            REQUIRE(it != from_search.end());
            CHECK(it->second == render_plain(row.fields[1]));
        }
    }
}

TEST_CASE("serialized main table retains no sensitive plaintext") {
    Table plain = fixtures::employee_table();
    Protected p(plain, fixtures::employee_protect_config(Rational{1, 20}));
    std::string serialized = fixtures::save_table_to_string(p.pair.main);
    for (const Record& row : plain.rows())
        CHECK(serialized.find(render_plain(row.fields[2])) == std::string::npos);
    // Plain columns are still there.
    CHECK(serialized.find("Rajesh") != std::string::npos);
}

TEST_CASE("permutation independence across shuffle seeds") {
    Table table = uniform_table(40);
    auto multiset_for = [&table](std::uint64_t shuffle_seed) {
        ProtectConfig config = fixtures::employee_protect_config({0, 1}, shuffle_seed, 5);
        Protected p(table, config);
        return decrypted_pairs(p.cipher, p.keys.search, p.pair.search_tables.at("v"));
    };
    auto m1 = multiset_for(1);
    auto m2 = multiset_for(2);
    auto m3 = multiset_for(3);
    CHECK(m1 == m2);
    CHECK(m2 == m3);
}

TEST_CASE("duplicate nonces are refused") {
    CipherEnvelope a{Bytes(12, 1), to_bytes("x")};
    CipherEnvelope b{Bytes(12, 2), to_bytes("y")};
    CipherEnvelope c{Bytes(12, 1), to_bytes("z")};
    CHECK_NOTHROW(ensure_unique_nonces({&a, &b}));
    CHECK_THROWS_MATCHES(ensure_unique_nonces({&a, &b, &c}), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == Errc::nonce_exhaustion; }));
}

TEST_CASE("protect validates its inputs") {
    XorStreamCipher cipher;
    TableKeys keys = derive_table_keys(cipher, to_bytes("m"));

    Table no_sensitive({{"k", ColumnKind::integer, false}, {"v", ColumnKind::text, false}});
    CHECK_THROWS_MATCHES(
        protect(no_sensitive, cipher, keys, fixtures::employee_protect_config()), Error,
        Catch::Matchers::Predicate<Error>(
            [](const Error& e) { return e.code() == Errc::no_sensitive_column; }));

    ProtectConfig config = fixtures::employee_protect_config(Rational{3, 2});
    CHECK_THROWS_MATCHES(protect(fixtures::employee_table(), cipher, keys, config), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == Errc::invalid_config; }));
}

TEST_CASE("search table persistence and access instrumentation") {
    Protected p(fixtures::employee_table(), fixtures::employee_protect_config());
    const SearchTable& st = p.pair.search_tables.at("Salary");

    std::stringstream buffer;
    st.save(buffer);
    SearchTable loaded = SearchTable::load(buffer);
    CHECK(loaded == st);

    std::uint64_t before = loaded.access_count();
    CHECK(before == 0);
    (void)loaded.audit_rows();
    CHECK(loaded.access_count() == 0);
    (void)loaded.rows();
    CHECK(loaded.access_count() == loaded.size());
}

TEST_CASE("metadata roundtrips through SEALMETA v1") {
    SecureMetadata meta;
    meta.table_name = "Encrypted_Data_Table";
    meta.cipher_name = "xor-stream";
    meta.master_secret = to_bytes("master");
    meta.noise_fraction = Rational{1, 20};
    meta.shuffle_seed = 11;
    meta.noise_seed = 12;
    meta.principals = {"alice", "bob"};
    meta.aliases["Salary"] = {"QQQQQQQQ", "QQQQQQQQ", "RRRRRRRR"};

    std::stringstream buffer;
    meta.save(buffer);
    CHECK(SecureMetadata::load(buffer) == meta);

    SECTION("version and format errors") {
        std::istringstream v2("SEALMETA v2\n");
        CHECK_THROWS_MATCHES(SecureMetadata::load(v2), Error,
                             Catch::Matchers::Predicate<Error>([](const Error& e) {
                                 return e.code() == Errc::version_mismatch;
                             }));
        std::istringstream junk("SEALMETA v1\nwhatever x\n");
        CHECK_THROWS_AS(SecureMetadata::load(junk), Error);
        std::istringstream missing("SEALMETA v1\ntable T\n");
        CHECK_THROWS_AS(SecureMetadata::load(missing), Error);
    }
}

TEST_CASE("protected directory save/load with restricted permissions") {
    fixtures::TempDir dir;
    Table plain = fixtures::employee_table();
    ProtectConfig config = fixtures::employee_protect_config(Rational{1, 20});
    config.master_secret = to_bytes("dir-master");
    XorStreamCipher cipher;
    TableKeys keys = derive_table_keys(cipher, config.master_secret);
    ProtectedPair pair = protect(plain, cipher, keys, config);

    save_protected(pair, dir.path());

    std::size_t files = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir.path())) {
        (void)entry;
        ++files;
    }
    CHECK(files == 3); // main table, one search table, metadata

    auto meta_perms = std::filesystem::status(dir.path() / "meta.seal").permissions();
    CHECK((meta_perms & std::filesystem::perms::others_read) == std::filesystem::perms::none);
    CHECK((meta_perms & std::filesystem::perms::group_read) == std::filesystem::perms::none);

    ProtectedPair loaded = load_protected(dir.path());
    CHECK(loaded.main == pair.main);
    CHECK(loaded.meta == pair.meta);
    REQUIRE(loaded.search_tables.size() == 1);
    CHECK(loaded.search_tables.at("Salary") == pair.search_tables.at("Salary"));
}
