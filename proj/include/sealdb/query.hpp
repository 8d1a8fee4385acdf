#pragma once

#include <cctype>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sealdb/error.hpp"
#include "sealdb/protect.hpp"
#include "sealdb/storage.hpp"
#include "sealdb/value.hpp"

namespace sealdb {

// ---------------------------------------------------------------------------
// AST
// ---------------------------------------------------------------------------

enum class CompareOp { eq, ne, lt, le, gt, ge };

inline std::string_view op_symbol(CompareOp op) {
    switch (op) {
    case CompareOp::eq: return "=";
    case CompareOp::ne: return "<>";
    case CompareOp::lt: return "<";
    case CompareOp::le: return "<=";
    case CompareOp::gt: return ">";
    case CompareOp::ge: return ">=";
    }
    return "?";
}

using Literal = std::variant<std::int64_t, Decimal, std::string>;

struct Predicate;
using PredPtr = std::shared_ptr<const Predicate>;

struct Comparison {
    std::string column;
    CompareOp op = CompareOp::eq;
    Literal value;
};

struct BetweenPred {
    std::string column;
    Literal lo;
    Literal hi;
};

struct LikePred {
    std::string column;
    std::string pattern;
};

struct AndPred {
    PredPtr left;
    PredPtr right;
};

struct OrPred {
    PredPtr left;
    PredPtr right;
};

struct NotPred {
    PredPtr child;
};

struct Predicate {
    std::variant<Comparison, BetweenPred, LikePred, AndPred, OrPred, NotPred> node;
};

template <typename NodeT>
PredPtr make_pred(NodeT node) {
    return std::make_shared<const Predicate>(Predicate{std::move(node)});
}

/// Parsed SELECT statement. `projections` is empty exactly when `star`
/// is set; identifier resolution happens at classification, not here.
struct QueryAst {
    bool star = false;
    std::vector<std::string> projections;
    std::string table;
    PredPtr predicate; // null when no WHERE clause
};

// ---------------------------------------------------------------------------
// LIKE matching: % matches any run (possibly empty), _ exactly one
// character; case-sensitive; anchored at both ends. No ESCAPE clause.
// ---------------------------------------------------------------------------

inline bool match_like(std::string_view value, std::string_view pattern) {
    while (!pattern.empty()) {
        char p = pattern.front();
        if (p == '%') {
            pattern.remove_prefix(1);
            while (!pattern.empty() && pattern.front() == '%') pattern.remove_prefix(1);
            if (pattern.empty()) return true;
            for (std::size_t i = 0; i <= value.size(); ++i)
                if (match_like(value.substr(i), pattern)) return true;
            return false;
        }
        if (value.empty()) return false;
        if (p != '_' && p != value.front()) return false;
        pattern.remove_prefix(1);
        value.remove_prefix(1);
    }
    return value.empty();
}

// ---------------------------------------------------------------------------
// Lexer / parser
//
// Grammar:
//   query      := SELECT projections FROM ident [WHERE or-expr] [';']
//   projections:= '*' | ident (',' ident)*
//   or-expr    := and-expr (OR and-expr)*
//   and-expr   := not-expr (AND not-expr)*
//   not-expr   := NOT not-expr | primary
//   primary    := '(' or-expr ')' | comparison
//   comparison := ident (op literal | BETWEEN literal AND literal | LIKE string)
//   literal    := ['-'] number | string
//
// Keywords are case-insensitive; identifiers are case-sensitive. String
// literals are single-quoted with '' as the escape for a quote.
// ---------------------------------------------------------------------------

namespace detail {

struct Token {
    enum class Kind { identifier, number, string, symbol, end };
    Kind kind = Kind::end;
    std::string text;
    std::size_t pos = 0;
};

inline bool iequals(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::toupper(static_cast<unsigned char>(a[i])) !=
            std::toupper(static_cast<unsigned char>(b[i])))
            return false;
    return true;
}

inline std::vector<Token> lex(std::string_view text) {
    std::vector<Token> tokens;
    std::size_t i = 0;
    auto push = [&](Token::Kind kind, std::string value, std::size_t pos) {
        tokens.push_back(Token{kind, std::move(value), pos});
    };
    while (i < text.size()) {
        char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        std::size_t start = i;
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            while (i < text.size() && (std::isalnum(static_cast<unsigned char>(text[i])) ||
                                       text[i] == '_'))
                ++i;
            push(Token::Kind::identifier, std::string(text.substr(start, i - start)), start);
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '.' && i + 1 < text.size() &&
             std::isdigit(static_cast<unsigned char>(text[i + 1])))) {
            while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
            if (i < text.size() && text[i] == '.') {
                ++i;
                while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
            }
            push(Token::Kind::number, std::string(text.substr(start, i - start)), start);
            continue;
        }
        if (c == '\'') {
            std::string value;
            ++i;
            while (true) {
                if (i >= text.size())
                    fail(Errc::syntax_error, "unterminated string literal", start);
                if (text[i] == '\'') {
                    if (i + 1 < text.size() && text[i + 1] == '\'') {
                        value.push_back('\'');
                        i += 2;
                        continue;
                    }
                    ++i;
                    break;
                }
                value.push_back(text[i++]);
            }
            push(Token::Kind::string, std::move(value), start);
            continue;
        }
        if (c == '<') {
            if (i + 1 < text.size() && (text[i + 1] == '=' || text[i + 1] == '>')) {
                push(Token::Kind::symbol, std::string(text.substr(i, 2)), start);
                i += 2;
            } else {
                push(Token::Kind::symbol, "<", start);
                ++i;
            }
            continue;
        }
        if (c == '>') {
            if (i + 1 < text.size() && text[i + 1] == '=') {
                push(Token::Kind::symbol, ">=", start);
                i += 2;
            } else {
                push(Token::Kind::symbol, ">", start);
                ++i;
            }
            continue;
        }
        if (c == '=' || c == '(' || c == ')' || c == ',' || c == '*' || c == ';' || c == '-') {
            push(Token::Kind::symbol, std::string(1, c), start);
            ++i;
            continue;
        }
        fail(Errc::syntax_error, std::string("unexpected character '") + c + "'", start);
    }
    push(Token::Kind::end, "", text.size());
    return tokens;
}

class QueryParser {
public:
    explicit QueryParser(std::string_view text) : tokens_(lex(text)) {}

    QueryAst parse() {
        QueryAst ast;
        expect_keyword("SELECT");
        if (is_symbol("*")) {
            advance();
            ast.star = true;
        } else {
            ast.projections.push_back(expect_identifier("column name"));
            while (is_symbol(",")) {
                advance();
                ast.projections.push_back(expect_identifier("column name"));
            }
        }
        expect_keyword("FROM");
        ast.table = expect_identifier("table name");
        if (is_keyword("WHERE")) {
            advance();
            ast.predicate = parse_or();
        }
        if (is_symbol(";")) advance();
        if (peek().kind != Token::Kind::end)
            fail(Errc::syntax_error, "expected end of query, found '" + peek().text + "'",
                 peek().pos);
        return ast;
    }

private:
    const Token& peek() const { return tokens_[pos_]; }
    void advance() { ++pos_; }

    bool is_keyword(std::string_view kw) const {
        return peek().kind == Token::Kind::identifier && iequals(peek().text, kw);
    }
    bool is_symbol(std::string_view sym) const {
        return peek().kind == Token::Kind::symbol && peek().text == sym;
    }

    void expect_keyword(std::string_view kw) {
        if (!is_keyword(kw))
            fail(Errc::syntax_error,
                 "expected " + std::string(kw) + ", found '" + peek().text + "'", peek().pos);
        advance();
    }

    std::string expect_identifier(std::string_view what) {
        static constexpr std::string_view reserved[] = {"SELECT", "FROM", "WHERE",  "AND",
                                                        "OR",     "NOT",  "BETWEEN", "LIKE"};
        if (peek().kind != Token::Kind::identifier)
            fail(Errc::syntax_error,
                 "expected " + std::string(what) + ", found '" + peek().text + "'", peek().pos);
        for (std::string_view kw : reserved)
            if (iequals(peek().text, kw))
                fail(Errc::syntax_error,
                     "expected " + std::string(what) + ", found '" + peek().text + "'",
                     peek().pos);
        std::string name = peek().text;
        advance();
        return name;
    }

    PredPtr parse_or() {
        PredPtr left = parse_and();
        while (is_keyword("OR")) {
            advance();
            left = make_pred(OrPred{left, parse_and()});
        }
        return left;
    }

    PredPtr parse_and() {
        PredPtr left = parse_not();
        while (is_keyword("AND")) {
            advance();
            left = make_pred(AndPred{left, parse_not()});
        }
        return left;
    }

    PredPtr parse_not() {
        if (is_keyword("NOT")) {
            advance();
            return make_pred(NotPred{parse_not()});
        }
        return parse_primary();
    }

    PredPtr parse_primary() {
        if (is_symbol("(")) {
            advance();
            PredPtr inner = parse_or();
            if (!is_symbol(")"))
                fail(Errc::syntax_error, "expected ')', found '" + peek().text + "'",
                     peek().pos);
            advance();
            return inner;
        }
        std::string column = expect_identifier("column name");
        if (is_keyword("BETWEEN")) {
            advance();
            Literal lo = parse_literal();
            expect_keyword("AND");
            Literal hi = parse_literal();
            return make_pred(BetweenPred{std::move(column), std::move(lo), std::move(hi)});
        }
        if (is_keyword("LIKE")) {
            advance();
            if (peek().kind != Token::Kind::string)
                fail(Errc::syntax_error, "expected pattern string after LIKE", peek().pos);
            std::string pattern = peek().text;
            advance();
            return make_pred(LikePred{std::move(column), std::move(pattern)});
        }
        if (peek().kind == Token::Kind::symbol) {
            CompareOp op;
            const std::string& sym = peek().text;
            if (sym == "=") op = CompareOp::eq;
            else if (sym == "<>") op = CompareOp::ne;
            else if (sym == "<") op = CompareOp::lt;
            else if (sym == "<=") op = CompareOp::le;
            else if (sym == ">") op = CompareOp::gt;
            else if (sym == ">=") op = CompareOp::ge;
            else
                fail(Errc::syntax_error, "expected comparison operator, found '" + sym + "'",
                     peek().pos);
            advance();
            return make_pred(Comparison{std::move(column), op, parse_literal()});
        }
        fail(Errc::syntax_error, "expected comparison, found '" + peek().text + "'",
             peek().pos);
    }

    Literal parse_literal() {
        bool negative = false;
        std::size_t pos = peek().pos;
        if (is_symbol("-")) {
            negative = true;
            advance();
        }
        if (peek().kind == Token::Kind::number) {
            std::string raw = peek().text;
            advance();
            if (negative) raw.insert(0, 1, '-');
            try {
                if (raw.find('.') != std::string::npos) return Decimal::parse(raw, pos);
                return parse_int(raw, pos);
            } catch (const Error&) {
                fail(Errc::syntax_error, "malformed numeric literal '" + raw + "'", pos);
            }
        }
        if (!negative && peek().kind == Token::Kind::string) {
            std::string value = peek().text;
            advance();
            return value;
        }
        fail(Errc::syntax_error, "expected literal, found '" + peek().text + "'", peek().pos);
    }

    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline QueryAst parse_query(std::string_view text) {
    return detail::QueryParser(text).parse();
}

// ---------------------------------------------------------------------------
// Printing (canonical form; reparsing yields a structurally equal AST)
// ---------------------------------------------------------------------------

inline std::string render_literal(const Literal& literal) {
    if (const auto* i = std::get_if<std::int64_t>(&literal)) return std::to_string(*i);
    if (const auto* d = std::get_if<Decimal>(&literal)) return d->to_string();
    const auto& s = std::get<std::string>(literal);
    std::string out = "'";
    for (char c : s) {
        out.push_back(c);
        if (c == '\'') out.push_back('\'');
    }
    out.push_back('\'');
    return out;
}

namespace detail {

inline int pred_precedence(const Predicate& pred) {
    if (std::holds_alternative<OrPred>(pred.node)) return 1;
    if (std::holds_alternative<AndPred>(pred.node)) return 2;
    if (std::holds_alternative<NotPred>(pred.node)) return 3;
    return 4;
}

inline void print_pred(const Predicate& pred, std::string& out);

inline void print_child(const PredPtr& child, int parent_prec, bool is_right,
                        std::string& out) {
    int prec = pred_precedence(*child);
    bool parens = prec < parent_prec || (is_right && prec == parent_prec);
    if (parens) out.push_back('(');
    print_pred(*child, out);
    if (parens) out.push_back(')');
}

inline void print_pred(const Predicate& pred, std::string& out) {
    if (const auto* cmp = std::get_if<Comparison>(&pred.node)) {
        out += cmp->column;
        out.push_back(' ');
        out += op_symbol(cmp->op);
        out.push_back(' ');
        out += render_literal(cmp->value);
    } else if (const auto* between = std::get_if<BetweenPred>(&pred.node)) {
        out += between->column;
        out += " BETWEEN ";
        out += render_literal(between->lo);
        out += " AND ";
        out += render_literal(between->hi);
    } else if (const auto* like = std::get_if<LikePred>(&pred.node)) {
        out += like->column;
        out += " LIKE ";
        out += render_literal(Literal{like->pattern});
    } else if (const auto* conj = std::get_if<AndPred>(&pred.node)) {
        print_child(conj->left, 2, false, out);
        out += " AND ";
        print_child(conj->right, 2, true, out);
    } else if (const auto* disj = std::get_if<OrPred>(&pred.node)) {
        print_child(disj->left, 1, false, out);
        out += " OR ";
        print_child(disj->right, 1, true, out);
    } else if (const auto* neg = std::get_if<NotPred>(&pred.node)) {
        out += "NOT ";
        print_child(neg->child, 3, false, out);
    }
}

} // namespace detail

inline std::string print_query(const QueryAst& ast) {
    std::string out = "SELECT ";
    if (ast.star) {
        out += "*";
    } else {
        for (std::size_t i = 0; i < ast.projections.size(); ++i) {
            if (i > 0) out += ", ";
            out += ast.projections[i];
        }
    }
    out += " FROM ";
    out += ast.table;
    if (ast.predicate) {
        out += " WHERE ";
        detail::print_pred(*ast.predicate, out);
    }
    return out;
}

inline bool literals_equal(const Literal& a, const Literal& b) {
    return a == b;
}

inline bool predicates_equal(const PredPtr& a, const PredPtr& b) {
    if (!a || !b) return !a && !b;
    if (a->node.index() != b->node.index()) return false;
    if (const auto* ca = std::get_if<Comparison>(&a->node)) {
        const auto& cb = std::get<Comparison>(b->node);
        return ca->column == cb.column && ca->op == cb.op && literals_equal(ca->value, cb.value);
    }
    if (const auto* ba = std::get_if<BetweenPred>(&a->node)) {
        const auto& bb = std::get<BetweenPred>(b->node);
        return ba->column == bb.column && literals_equal(ba->lo, bb.lo) &&
               literals_equal(ba->hi, bb.hi);
    }
    if (const auto* la = std::get_if<LikePred>(&a->node)) {
        const auto& lb = std::get<LikePred>(b->node);
        return la->column == lb.column && la->pattern == lb.pattern;
    }
    if (const auto* na = std::get_if<AndPred>(&a->node)) {
        const auto& nb = std::get<AndPred>(b->node);
        return predicates_equal(na->left, nb.left) && predicates_equal(na->right, nb.right);
    }
    if (const auto* oa = std::get_if<OrPred>(&a->node)) {
        const auto& ob = std::get<OrPred>(b->node);
        return predicates_equal(oa->left, ob.left) && predicates_equal(oa->right, ob.right);
    }
    const auto& na = std::get<NotPred>(a->node);
    const auto& nb = std::get<NotPred>(b->node);
    return predicates_equal(na.child, nb.child);
}

inline bool asts_equal(const QueryAst& a, const QueryAst& b) {
    return a.star == b.star && a.projections == b.projections && a.table == b.table &&
           predicates_equal(a.predicate, b.predicate);
}

// ---------------------------------------------------------------------------
// Literal/value evaluation shared by classification and execution
// ---------------------------------------------------------------------------

/// Three-way comparison of a plain field against a literal; integer
/// literals promote to Decimal when the column is decimal-kinded.
inline int compare_field_literal(const FieldValue& field, const Literal& literal) {
    if (const auto* fi = std::get_if<std::int64_t>(&field)) {
        const auto* li = std::get_if<std::int64_t>(&literal);
        if (!li) fail(Errc::internal, "literal kind mismatch for integer column");
        return *fi < *li ? -1 : *fi > *li ? 1 : 0;
    }
    if (const auto* fd = std::get_if<Decimal>(&field)) {
        if (const auto* li = std::get_if<std::int64_t>(&literal))
            return fd->compare(Decimal::from_int(*li));
        if (const auto* ld = std::get_if<Decimal>(&literal)) return fd->compare(*ld);
        fail(Errc::internal, "literal kind mismatch for decimal column");
    }
    if (const auto* fs = std::get_if<std::string>(&field)) {
        const auto* ls = std::get_if<std::string>(&literal);
        if (!ls) fail(Errc::internal, "literal kind mismatch for text column");
        int cmp = fs->compare(*ls);
        return cmp < 0 ? -1 : cmp > 0 ? 1 : 0;
    }
    fail(Errc::internal, "comparison against an encrypted field");
}

inline bool apply_compare_op(int cmp, CompareOp op) {
    switch (op) {
    case CompareOp::eq: return cmp == 0;
    case CompareOp::ne: return cmp != 0;
    case CompareOp::lt: return cmp < 0;
    case CompareOp::le: return cmp <= 0;
    case CompareOp::gt: return cmp > 0;
    case CompareOp::ge: return cmp >= 0;
    }
    return false;
}

/// Evaluates an atomic predicate against one plain value (the value of
/// the predicate's column).
inline bool eval_atom_on_value(const Predicate& atom, const FieldValue& value) {
    if (const auto* cmp = std::get_if<Comparison>(&atom.node))
        return apply_compare_op(compare_field_literal(value, cmp->value), cmp->op);
    if (const auto* between = std::get_if<BetweenPred>(&atom.node))
        return compare_field_literal(value, between->lo) >= 0 &&
               compare_field_literal(value, between->hi) <= 0;
    if (const auto* like = std::get_if<LikePred>(&atom.node)) {
        const auto* text = std::get_if<std::string>(&value);
        if (!text) fail(Errc::internal, "LIKE on a non-text value");
        return match_like(*text, like->pattern);
    }
    fail(Errc::internal, "eval_atom_on_value on a non-atomic predicate");
}

/// Evaluates a predicate subtree over one record's plain fields. Any
/// encrypted field reached here is a planning bug.
inline bool eval_predicate_on_record(const Predicate& pred, const Record& record,
                                     const Table& table) {
    if (const auto* conj = std::get_if<AndPred>(&pred.node))
        return eval_predicate_on_record(*conj->left, record, table) &&
               eval_predicate_on_record(*conj->right, record, table);
    if (const auto* disj = std::get_if<OrPred>(&pred.node))
        return eval_predicate_on_record(*disj->left, record, table) ||
               eval_predicate_on_record(*disj->right, record, table);
    if (const auto* neg = std::get_if<NotPred>(&pred.node))
        return !eval_predicate_on_record(*neg->child, record, table);
    std::string_view column;
    if (const auto* cmp = std::get_if<Comparison>(&pred.node)) column = cmp->column;
    else if (const auto* between = std::get_if<BetweenPred>(&pred.node)) column = between->column;
    else column = std::get<LikePred>(pred.node).column;
    auto index = table.column_index(column);
    if (!index) fail(Errc::internal, "unresolved column in evaluation");
    return eval_atom_on_value(pred, record.fields[*index]);
}

// ---------------------------------------------------------------------------
// Classification and rewriting
// ---------------------------------------------------------------------------

/// An atomic predicate on a sensitive column, routed to that column's
/// search table. Alias fields are filled by rewrite().
struct ProbeAtom {
    std::string column;
    std::string table_id;
    std::string alias_key;
    std::string alias_value;
    PredPtr atom;
};

struct KeySetExpr;
using KeySetPtr = std::shared_ptr<const KeySetExpr>;

struct KsProbe {
    ProbeAtom probe;
};

/// A pure-plain subtree evaluated over the main table's plaintext
/// columns; produces a key set without touching any ciphertext.
struct KsPlain {
    PredPtr pred;
};

struct KsAnd {
    KeySetPtr left;
    KeySetPtr right;
};

struct KsOr {
    KeySetPtr left;
    KeySetPtr right;
};

/// Key-set algebra: And is set intersection, Or is set union, leaves are
/// search-table probes or plain main-table scans.
struct KeySetExpr {
    std::variant<KsProbe, KsPlain, KsAnd, KsOr> node;
};

template <typename NodeT>
KeySetPtr make_keyset(NodeT node) {
    return std::make_shared<const KeySetExpr>(KeySetExpr{std::move(node)});
}

struct Classification {
    bool touches_encrypted = false;
    std::vector<std::string> projection; // star expanded, resolved against the schema
    std::vector<ProbeAtom> encrypted_atoms;
    KeySetPtr keyset;  // set iff touches_encrypted
    PredPtr residual;  // plain conjuncts applied after the fetch; may be null
};

namespace detail {

inline const ColumnSpec& resolve_column(const std::vector<ColumnSpec>& schema,
                                        std::string_view name) {
    for (const ColumnSpec& col : schema)
        if (col.name == name) return col;
    fail(Errc::unknown_column, "unknown column '" + std::string(name) + "'");
}

inline void check_literal_kind(const ColumnSpec& column, const Literal& literal) {
    bool ok = false;
    switch (column.kind) {
    case ColumnKind::integer: ok = std::holds_alternative<std::int64_t>(literal); break;
    case ColumnKind::decimal:
        ok = std::holds_alternative<std::int64_t>(literal) ||
             std::holds_alternative<Decimal>(literal);
        break;
    case ColumnKind::text: ok = std::holds_alternative<std::string>(literal); break;
    }
    if (!ok)
        fail(Errc::type_mismatch, "literal does not fit " + std::string(kind_name(column.kind)) +
                                      " column '" + column.name + "'");
}

/// Validates one predicate subtree: resolves columns, type-checks
/// literals, rejects NOT above anything encrypted. Returns whether the
/// subtree references a sensitive column.
inline bool validate_predicate(const Predicate& pred, const std::vector<ColumnSpec>& schema) {
    if (const auto* conj = std::get_if<AndPred>(&pred.node))
        return validate_predicate(*conj->left, schema) |
               validate_predicate(*conj->right, schema);
    if (const auto* disj = std::get_if<OrPred>(&pred.node))
        return validate_predicate(*disj->left, schema) |
               validate_predicate(*disj->right, schema);
    if (const auto* neg = std::get_if<NotPred>(&pred.node)) {
        if (validate_predicate(*neg->child, schema))
            fail(Errc::unsupported_negation,
                 "NOT over an encrypted-column predicate is not supported");
        return false;
    }
    if (const auto* cmp = std::get_if<Comparison>(&pred.node)) {
        const ColumnSpec& col = resolve_column(schema, cmp->column);
        check_literal_kind(col, cmp->value);
        return col.sensitive;
    }
    if (const auto* between = std::get_if<BetweenPred>(&pred.node)) {
        const ColumnSpec& col = resolve_column(schema, between->column);
        check_literal_kind(col, between->lo);
        check_literal_kind(col, between->hi);
        return col.sensitive;
    }
    const auto& like = std::get<LikePred>(pred.node);
    const ColumnSpec& col = resolve_column(schema, like.column);
    if (col.kind != ColumnKind::text)
        fail(Errc::type_mismatch, "LIKE needs a text column, '" + col.name + "' is " +
                                      std::string(kind_name(col.kind)));
    return col.sensitive;
}

inline bool subtree_touches_encrypted(const Predicate& pred,
                                      const std::vector<ColumnSpec>& schema) {
    if (const auto* conj = std::get_if<AndPred>(&pred.node))
        return subtree_touches_encrypted(*conj->left, schema) ||
               subtree_touches_encrypted(*conj->right, schema);
    if (const auto* disj = std::get_if<OrPred>(&pred.node))
        return subtree_touches_encrypted(*disj->left, schema) ||
               subtree_touches_encrypted(*disj->right, schema);
    if (const auto* neg = std::get_if<NotPred>(&pred.node))
        return subtree_touches_encrypted(*neg->child, schema);
    std::string_view column;
    if (const auto* cmp = std::get_if<Comparison>(&pred.node)) column = cmp->column;
    else if (const auto* between = std::get_if<BetweenPred>(&pred.node)) column = between->column;
    else column = std::get<LikePred>(pred.node).column;
    return resolve_column(schema, column).sensitive;
}

inline std::string_view atom_column(const Predicate& pred) {
    if (const auto* cmp = std::get_if<Comparison>(&pred.node)) return cmp->column;
    if (const auto* between = std::get_if<BetweenPred>(&pred.node)) return between->column;
    return std::get<LikePred>(pred.node).column;
}

/// Lowers a sensitive-referencing subtree into key-set algebra. Plain
/// subtrees become scan leaves; sensitive atoms become probe leaves.
inline KeySetPtr lower_to_keyset(const PredPtr& pred, const std::vector<ColumnSpec>& schema,
                                 std::vector<ProbeAtom>& atoms) {
    if (!subtree_touches_encrypted(*pred, schema)) return make_keyset(KsPlain{pred});
    if (const auto* conj = std::get_if<AndPred>(&pred->node))
        return make_keyset(KsAnd{lower_to_keyset(conj->left, schema, atoms),
                                 lower_to_keyset(conj->right, schema, atoms)});
    if (const auto* disj = std::get_if<OrPred>(&pred->node))
        return make_keyset(KsOr{lower_to_keyset(disj->left, schema, atoms),
                                lower_to_keyset(disj->right, schema, atoms)});
    // validate_predicate already rejected NOT above encrypted atoms.
    ProbeAtom atom;
    atom.column = std::string(atom_column(*pred));
    atom.atom = pred;
    atoms.push_back(atom);
    return make_keyset(KsProbe{std::move(atom)});
}

inline void flatten_conjuncts(const PredPtr& pred, std::vector<PredPtr>& out) {
    if (const auto* conj = std::get_if<AndPred>(&pred->node)) {
        flatten_conjuncts(conj->left, out);
        flatten_conjuncts(conj->right, out);
        return;
    }
    out.push_back(pred);
}

} // namespace detail

/// Resolves a parsed query against the protected schema: projection
/// expansion, column/type checking, and the split of the WHERE tree into
/// the key-set algebra over encrypted atoms plus the plain residual.
inline Classification classify(const QueryAst& ast, const SecureMetadata& meta,
                               const std::vector<ColumnSpec>& schema) {
    if (ast.table != meta.table_name)
        fail(Errc::unknown_table, "unknown table '" + ast.table + "'");

    Classification result;
    if (ast.star) {
        for (const ColumnSpec& col : schema) result.projection.push_back(col.name);
    } else {
        for (const std::string& name : ast.projections) {
            detail::resolve_column(schema, name);
            result.projection.push_back(name);
        }
    }

    if (!ast.predicate) return result;

    result.touches_encrypted = detail::validate_predicate(*ast.predicate, schema);
    if (!result.touches_encrypted) {
        result.residual = ast.predicate;
        return result;
    }

    // Top-level AND conjuncts that never mention a sensitive column stay
    // out of the key-set algebra and run as a post-fetch filter.
    std::vector<PredPtr> conjuncts;
    detail::flatten_conjuncts(ast.predicate, conjuncts);
    KeySetPtr keyset;
    PredPtr residual;
    for (const PredPtr& conjunct : conjuncts) {
        if (detail::subtree_touches_encrypted(*conjunct, schema)) {
            KeySetPtr lowered =
                detail::lower_to_keyset(conjunct, schema, result.encrypted_atoms);
            keyset = keyset ? make_keyset(KsAnd{keyset, lowered}) : lowered;
        } else {
            residual = residual ? make_pred(AndPred{residual, conjunct}) : conjunct;
        }
    }
    result.keyset = keyset;
    result.residual = residual;
    return result;
}

struct DirectPlan {
    QueryAst ast;
    std::vector<std::string> projection;
};

struct RewrittenPlan {
    QueryAst ast;
    std::vector<std::string> projection;
    KeySetPtr keyset;
    PredPtr residual; // may be null
    std::vector<ProbeAtom> atoms;
};

using QueryPlan = std::variant<DirectPlan, RewrittenPlan>;

namespace detail {

inline KeySetPtr attach_aliases(const KeySetPtr& keyset, const SecureMetadata& meta,
                                std::vector<ProbeAtom>& atoms) {
    if (const auto* probe = std::get_if<KsProbe>(&keyset->node)) {
        auto it = meta.aliases.find(probe->probe.column);
        if (it == meta.aliases.end())
            fail(Errc::internal,
                 "sensitive column '" + probe->probe.column + "' has no search table");
        ProbeAtom atom = probe->probe;
        atom.table_id = it->second.table_id;
        atom.alias_key = it->second.key_column;
        atom.alias_value = it->second.value_column;
        atoms.push_back(atom);
        return make_keyset(KsProbe{std::move(atom)});
    }
    if (const auto* conj = std::get_if<KsAnd>(&keyset->node))
        return make_keyset(KsAnd{attach_aliases(conj->left, meta, atoms),
                                 attach_aliases(conj->right, meta, atoms)});
    if (const auto* disj = std::get_if<KsOr>(&keyset->node))
        return make_keyset(KsOr{attach_aliases(disj->left, meta, atoms),
                                attach_aliases(disj->right, meta, atoms)});
    return keyset;
}

} // namespace detail

/// Direct plan for plain-column queries; otherwise the two-phase plan:
/// search-table probes expressed against alias columns, key-set algebra
/// for the boolean structure, plain residual for the post-fetch filter.
inline QueryPlan rewrite(const QueryAst& ast, const SecureMetadata& meta,
                         const std::vector<ColumnSpec>& schema) {
    Classification cls = classify(ast, meta, schema);
    if (!cls.touches_encrypted)
        return DirectPlan{ast, std::move(cls.projection)};
    RewrittenPlan plan;
    plan.ast = ast;
    plan.projection = std::move(cls.projection);
    plan.atoms.clear();
    plan.keyset = detail::attach_aliases(cls.keyset, meta, plan.atoms);
    plan.residual = cls.residual;
    return plan;
}

// ---------------------------------------------------------------------------
// Plan explanation: a textual rendering shaped like the rewritten SQL,
// with the real alias names substituted.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string render_atom_over_alias(const ProbeAtom& atom) {
    std::string out;
    if (const auto* cmp = std::get_if<Comparison>(&atom.atom->node)) {
        out += atom.alias_value;
        out.push_back(' ');
        out += op_symbol(cmp->op);
        out.push_back(' ');
        out += render_literal(cmp->value);
    } else if (const auto* between = std::get_if<BetweenPred>(&atom.atom->node)) {
        out += atom.alias_value;
        out += " BETWEEN ";
        out += render_literal(between->lo);
        out += " AND ";
        out += render_literal(between->hi);
    } else {
        const auto& like = std::get<LikePred>(atom.atom->node);
        out += atom.alias_value;
        out += " LIKE ";
        out += render_literal(Literal{like.pattern});
    }
    return out;
}

inline std::string render_keyset(const KeySetExpr& keyset, const std::string& table_name) {
    if (const auto* probe = std::get_if<KsProbe>(&keyset.node))
        return "(SELECT DecryptFunction(" + probe->probe.alias_key + ") FROM " +
               probe->probe.table_id + " WHERE " + render_atom_over_alias(probe->probe) + ")";
    if (const auto* plain = std::get_if<KsPlain>(&keyset.node)) {
        std::string pred;
        print_pred(*plain->pred, pred);
        return "(SELECT Key FROM " + table_name + " WHERE " + pred + ")";
    }
    if (const auto* conj = std::get_if<KsAnd>(&keyset.node))
        return "(" + render_keyset(*conj->left, table_name) + " INTERSECT " +
               render_keyset(*conj->right, table_name) + ")";
    const auto& disj = std::get<KsOr>(keyset.node);
    return "(" + render_keyset(*disj.left, table_name) + " UNION " +
           render_keyset(*disj.right, table_name) + ")";
}

} // namespace detail

inline std::string explain_plan(const QueryPlan& plan, const std::vector<ColumnSpec>& schema) {
    if (const auto* direct = std::get_if<DirectPlan>(&plan)) {
        return "DIRECT: " + print_query(direct->ast);
    }
    const auto& rewritten = std::get<RewrittenPlan>(plan);
    auto is_sensitive = [&schema](const std::string& name) {
        for (const ColumnSpec& col : schema)
            if (col.name == name) return col.sensitive;
        return false;
    };
    std::string out = "REWRITTEN: SELECT ";
    for (std::size_t i = 0; i < rewritten.projection.size(); ++i) {
        if (i > 0) out += ", ";
        const std::string& name = rewritten.projection[i];
        out += is_sensitive(name) ? "DecryptFunction(" + name + ")" : name;
    }
    out += " FROM ";
    out += rewritten.ast.table;
    out += " WHERE Key IN ";
    out += detail::render_keyset(*rewritten.keyset, rewritten.ast.table);
    if (rewritten.residual) {
        std::string pred;
        detail::print_pred(*rewritten.residual, pred);
        out += " AND " + pred;
    }
    return out;
}

} // namespace sealdb
