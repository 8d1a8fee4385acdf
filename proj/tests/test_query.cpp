#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "fixtures.hpp"
#include "oracle.hpp"
#include "sealdb/sealdb.hpp"

using namespace sealdb;

namespace {

bool throws_code(Errc expected, auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code() == expected;
    }
    return false;
}

SecureMetadata fixture_meta() {
    XorStreamCipher cipher;
    TableKeys keys = derive_table_keys(cipher, to_bytes("m"));
    ProtectedPair pair =
        protect(fixtures::employee_table(), cipher, keys, fixtures::employee_protect_config());
    return pair.meta;
}

} // namespace

TEST_CASE("parsing the salary lookup query") {
    QueryAst ast = parse_query(
        "SELECT Emp_Name, Salary FROM Encrypted_Data_Table WHERE Salary = 10000");
    CHECK_FALSE(ast.star);
    CHECK(ast.projections == std::vector<std::string>{"Emp_Name", "Salary"});
    CHECK(ast.table == "Encrypted_Data_Table");
    REQUIRE(ast.predicate);
    const auto& cmp = std::get<Comparison>(ast.predicate->node);
    CHECK(cmp.column == "Salary");
    CHECK(cmp.op == CompareOp::eq);
    CHECK(std::get<std::int64_t>(cmp.value) == 10000);
}

TEST_CASE("star projection and absent predicate") {
    QueryAst ast = parse_query("SELECT * FROM T");
    CHECK(ast.star);
    CHECK(ast.projections.empty());
    CHECK(ast.predicate == nullptr);
}

TEST_CASE("syntax errors carry position and expectation") {
    SECTION("empty projection list") {
        try {
            parse_query("SELECT FROM T");
            FAIL("expected a syntax error");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::syntax_error);
            CHECK(e.position() == 7);
            CHECK(std::string(e.what()).find("column name") != std::string::npos);
        }
    }
    SECTION("assorted malformed queries") {
        for (const char* bad :
             {"", "SELECT", "SELECT a", "SELECT a FROM", "SELECT a FROM t WHERE",
              "SELECT a FROM t WHERE x", "SELECT a FROM t WHERE x = ", "SELECT a FROM t WHERE (x = 1",
              "SELECT a FROM t trailing", "SELECT a, FROM t", "SELECT a FROM t WHERE x LIKE 5",
              "SELECT a FROM t WHERE x BETWEEN 1", "SELECT a FROM t WHERE x = 'open",
              "SELECT a FROM t WHERE x @ 1", "SELECT a FROM t WHERE x = 1.2.3"}) {
            INFO(bad);
            CHECK(throws_code(Errc::syntax_error, [bad] { (void)parse_query(bad); }));
        }
    }
}

TEST_CASE("operator precedence is NOT over AND over OR") {
    QueryAst ast = parse_query("SELECT a FROM t WHERE NOT x = 1 AND y = 2 OR z = 3");
    // ((NOT (x=1)) AND (y=2)) OR (z=3)
    const auto& disj = std::get<OrPred>(ast.predicate->node);
    const auto& conj = std::get<AndPred>(disj.left->node);
    CHECK(std::holds_alternative<NotPred>(conj.left->node));
    CHECK(std::get<Comparison>(disj.right->node).column == "z");

    QueryAst grouped = parse_query("SELECT a FROM t WHERE x = 1 AND (y = 2 OR z = 3)");
    const auto& conj2 = std::get<AndPred>(grouped.predicate->node);
    CHECK(std::holds_alternative<OrPred>(conj2.right->node));
}

TEST_CASE("string literals unescape doubled quotes") {
    QueryAst ast = parse_query("SELECT a FROM t WHERE s = 'O''Brien'");
    CHECK(std::get<std::string>(std::get<Comparison>(ast.predicate->node).value) == "O'Brien");
}

TEST_CASE("numeric literal forms") {
    QueryAst ast = parse_query("SELECT a FROM t WHERE x = -12 AND y = 3.50 AND z <= -0.25");
    const auto& top = std::get<AndPred>(ast.predicate->node);
    const auto& left = std::get<AndPred>(top.left->node);
    CHECK(std::get<std::int64_t>(std::get<Comparison>(left.left->node).value) == -12);
    CHECK(std::get<Decimal>(std::get<Comparison>(left.right->node).value) ==
          Decimal::parse("3.5"));
    CHECK(std::get<Decimal>(std::get<Comparison>(top.right->node).value) ==
          Decimal::parse("-0.25"));
}

TEST_CASE("print then reparse is the identity on random queries") {
    std::mt19937_64 rng(31337);
    for (int round = 0; round < 40; ++round) {
        Table data = oracle::random_dataset(rng, 30);
        oracle::QueryGenerator gen(rng, data, "T");
        for (int q = 0; q < 25; ++q) {
            QueryAst ast = gen.generate();
            std::string printed = print_query(ast);
            INFO(printed);
            QueryAst reparsed = parse_query(printed);
            CHECK(asts_equal(ast, reparsed));
            CHECK(print_query(reparsed) == printed);
        }
    }
}

TEST_CASE("LIKE matching semantics") {
    CHECK(match_like("Suresh", "S%"));
    CHECK(match_like("Suresh", "_uresh"));
    CHECK_FALSE(match_like("Suresh", "uresh"));
    CHECK_FALSE(match_like("Suresh", "suresh")); // case-sensitive
    CHECK(match_like("", ""));
    CHECK(match_like("", "%"));
    CHECK_FALSE(match_like("", "_"));
    CHECK(match_like("abc", "a%%c"));
    CHECK(match_like("a%c", "a%c"));
    CHECK_FALSE(match_like("ab", "a_b"));
    CHECK(match_like("aXb", "a_b"));
}

TEST_CASE("LIKE agrees with the brute-force matcher") {
    std::mt19937_64 rng(4242);
    const char value_alphabet[] = {'a', 'b'};
    const char pattern_alphabet[] = {'a', 'b', '%', '_'};
    for (int i = 0; i < 20000; ++i) {
        std::string value;
        std::string pattern;
        std::size_t vn = rng() % 9;
        std::size_t pn = rng() % 9;
        for (std::size_t j = 0; j < vn; ++j) value.push_back(value_alphabet[rng() % 2]);
        for (std::size_t j = 0; j < pn; ++j) pattern.push_back(pattern_alphabet[rng() % 4]);
        INFO("value='" << value << "' pattern='" << pattern << "'");
        CHECK(match_like(value, pattern) == oracle::like_match_dp(value, pattern));
    }
}

TEST_CASE("classification splits encrypted atoms from the plain residual") {
    SecureMetadata meta = fixture_meta();
    auto schema = fixtures::employee_schema();

    SECTION("salary query touches the encrypted column") {
        QueryAst ast = parse_query(
            "SELECT Emp_Name, Salary FROM Encrypted_Data_Table WHERE Salary = 10000");
        Classification cls = classify(ast, meta, schema);
        CHECK(cls.touches_encrypted);
        REQUIRE(cls.encrypted_atoms.size() == 1);
        CHECK(cls.encrypted_atoms[0].column == "Salary");
        CHECK(cls.residual == nullptr);
        REQUIRE(cls.keyset);
        CHECK(std::holds_alternative<KsProbe>(cls.keyset->node));
    }
    SECTION("plain-column query does not") {
        QueryAst ast =
            parse_query("SELECT * FROM Encrypted_Data_Table WHERE Job_Title = 'Peon'");
        Classification cls = classify(ast, meta, schema);
        CHECK_FALSE(cls.touches_encrypted);
        CHECK(cls.projection ==
              std::vector<std::string>{"Key", "Emp_Name", "Salary", "Job_Title"});
    }
    SECTION("mixed AND keeps the plain conjunct as residual") {
        QueryAst ast = parse_query("SELECT * FROM Encrypted_Data_Table WHERE "
                                   "Salary BETWEEN 6000 AND 9000 AND Emp_Name LIKE 'S%'");
        Classification cls = classify(ast, meta, schema);
        CHECK(cls.touches_encrypted);
        CHECK(cls.encrypted_atoms.size() == 1);
        REQUIRE(cls.residual);
        CHECK(std::holds_alternative<LikePred>(cls.residual->node));
        CHECK(std::holds_alternative<KsProbe>(cls.keyset->node));
    }
    SECTION("mixed OR lowers the plain side into the key-set algebra") {
        QueryAst ast = parse_query("SELECT * FROM Encrypted_Data_Table WHERE "
                                   "Salary = 10000 OR Job_Title = 'Peon'");
        Classification cls = classify(ast, meta, schema);
        CHECK(cls.touches_encrypted);
        REQUIRE(cls.keyset);
        const auto& disj = std::get<KsOr>(cls.keyset->node);
        CHECK(std::holds_alternative<KsProbe>(disj.left->node));
        CHECK(std::holds_alternative<KsPlain>(disj.right->node));
        CHECK(cls.residual == nullptr);
    }

    SECTION("rejections") {
        CHECK(throws_code(Errc::unknown_table, [&] {
            (void)classify(parse_query("SELECT * FROM Mystery"), meta, schema);
        }));
        CHECK(throws_code(Errc::unknown_column, [&] {
            (void)classify(parse_query("SELECT Bonus FROM Encrypted_Data_Table"), meta, schema);
        }));
        CHECK(throws_code(Errc::unknown_column, [&] {
            (void)classify(
                parse_query("SELECT * FROM Encrypted_Data_Table WHERE Bonus = 1"), meta,
                schema);
        }));
        CHECK(throws_code(Errc::type_mismatch, [&] {
            (void)classify(
                parse_query("SELECT * FROM Encrypted_Data_Table WHERE Salary = 'high'"), meta,
                schema);
        }));
        CHECK(throws_code(Errc::type_mismatch, [&] {
            (void)classify(
                parse_query("SELECT * FROM Encrypted_Data_Table WHERE Salary LIKE '1%'"), meta,
                schema);
        }));
        CHECK(throws_code(Errc::type_mismatch, [&] {
            (void)classify(
                parse_query("SELECT * FROM Encrypted_Data_Table WHERE Emp_Name = 5"), meta,
                schema);
        }));
        CHECK(throws_code(Errc::type_mismatch, [&] {
            (void)classify(
                parse_query("SELECT * FROM Encrypted_Data_Table WHERE Salary = 1.5"), meta,
                schema);
        }));
        CHECK(throws_code(Errc::unsupported_negation, [&] {
            (void)classify(
                parse_query("SELECT * FROM Encrypted_Data_Table WHERE NOT (Salary = 10000)"),
                meta, schema);
        }));
        CHECK(throws_code(Errc::unsupported_negation, [&] {
            (void)classify(parse_query("SELECT * FROM Encrypted_Data_Table WHERE "
                                       "NOT (Salary = 10000 OR Job_Title = 'Peon')"),
                           meta, schema);
        }));
    }

    SECTION("NOT over a plain subtree is fine") {
        QueryAst ast = parse_query(
            "SELECT * FROM Encrypted_Data_Table WHERE NOT (Job_Title = 'Peon')");
        Classification cls = classify(ast, meta, schema);
        CHECK_FALSE(cls.touches_encrypted);
    }
}

TEST_CASE("rewrite produces direct or rewritten plans") {
    SecureMetadata meta = fixture_meta();
    auto schema = fixtures::employee_schema();

    SECTION("no encrypted reference gives a direct plan") {
        QueryPlan plan = rewrite(parse_query("SELECT * FROM Encrypted_Data_Table"), meta, schema);
        CHECK(std::holds_alternative<DirectPlan>(plan));
    }
    SECTION("encrypted predicate routes to the search table aliases") {
        QueryPlan plan = rewrite(
            parse_query(
                "SELECT Emp_Name, Salary FROM Encrypted_Data_Table WHERE Salary = 10000"),
            meta, schema);
        const auto& rewritten = std::get<RewrittenPlan>(plan);
        REQUIRE(rewritten.atoms.size() == 1);
        const SecureMetadata::AliasEntry& entry = meta.aliases.at("Salary");
        CHECK(rewritten.atoms[0].table_id == entry.table_id);
        CHECK(rewritten.atoms[0].alias_key == entry.key_column);
        CHECK(rewritten.atoms[0].alias_value == entry.value_column);
        CHECK(rewritten.residual == nullptr);
    }
}

TEST_CASE("explain mirrors the rewritten query shape") {
    SecureMetadata meta = fixture_meta();
    auto schema = fixtures::employee_schema();
    const SecureMetadata::AliasEntry& entry = meta.aliases.at("Salary");

    QueryPlan plan = rewrite(
        parse_query("SELECT Emp_Name, Salary FROM Encrypted_Data_Table WHERE Salary = 10000"),
        meta, schema);
    std::string text = explain_plan(plan, schema);
    INFO(text);
    CHECK(text.find("REWRITTEN") == 0);
    CHECK(text.find("DecryptFunction(Salary)") != std::string::npos);
    CHECK(text.find("Key IN") != std::string::npos);
    CHECK(text.find("DecryptFunction(" + entry.key_column + ")") != std::string::npos);
    CHECK(text.find(entry.value_column + " = 10000") != std::string::npos);
    CHECK(text.find("FROM " + entry.table_id) != std::string::npos);

    QueryPlan direct = rewrite(parse_query("SELECT * FROM Encrypted_Data_Table"), meta, schema);
    CHECK(explain_plan(direct, schema).rfind("DIRECT", 0) == 0);
}

TEST_CASE("classification is pure: same inputs, same outputs") {
    SecureMetadata meta = fixture_meta();
    auto schema = fixtures::employee_schema();
    QueryAst ast = parse_query("SELECT Emp_Name FROM Encrypted_Data_Table WHERE "
                               "Salary >= 8000 AND Job_Title <> 'Peon'");
    Classification a = classify(ast, meta, schema);
    Classification b = classify(ast, meta, schema);
    CHECK(a.touches_encrypted == b.touches_encrypted);
    CHECK(a.projection == b.projection);
    CHECK(a.encrypted_atoms.size() == b.encrypted_atoms.size());
    CHECK(predicates_equal(a.residual, b.residual));
}
