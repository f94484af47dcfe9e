#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tokann/error.hpp"
#include "tokann/index.hpp"
#include "tokann/types.hpp"

namespace tokann {

class Restriction;

/// Immutable shared handle to a restriction tree node.
using RestrictionPtr = std::shared_ptr<const Restriction>;

enum class CompareOp { Lt, Le, Gt, Ge, Eq, Ne };

inline std::string_view compare_op_text(CompareOp op) {
    switch (op) {
        case CompareOp::Lt: return "<";
        case CompareOp::Le: return "<=";
        case CompareOp::Gt: return ">";
        case CompareOp::Ge: return ">=";
        case CompareOp::Eq: return "=";
        case CompareOp::Ne: return "!=";
    }
    return "?";
}

inline bool compare_holds(CompareOp op, double lhs, double rhs) {
    switch (op) {
        case CompareOp::Lt: return lhs < rhs;
        case CompareOp::Le: return lhs <= rhs;
        case CompareOp::Gt: return lhs > rhs;
        case CompareOp::Ge: return lhs >= rhs;
        case CompareOp::Eq: return lhs == rhs;
        case CompareOp::Ne: return lhs != rhs;
    }
    return false;
}

/// Boolean restriction tree over attribute predicates. Nodes are one of:
/// MatchAll, Pair (string equality), Compare (numeric comparison),
/// And / Or (each with at least two children), Not.
class Restriction {
public:
    struct MatchAll {};
    struct Pair {
        std::string name;
        std::string value;
    };
    struct Compare {
        std::string name;
        CompareOp op;
        double value;
    };
    struct And {
        std::vector<RestrictionPtr> children;
    };
    struct Or {
        std::vector<RestrictionPtr> children;
    };
    struct Not {
        RestrictionPtr child;
    };

    using Node = std::variant<MatchAll, Pair, Compare, And, Or, Not>;

    explicit Restriction(Node node) : node_(std::move(node)) {}

    const Node& node() const noexcept { return node_; }

    template <typename T>
    const T* get_if() const noexcept {
        return std::get_if<T>(&node_);
    }

private:
    Node node_;
};

inline RestrictionPtr make_match_all() {
    return std::make_shared<Restriction>(Restriction::MatchAll{});
}

inline RestrictionPtr make_pair(std::string name, std::string value) {
    if (name.empty()) throw ConfigError("restriction: attribute name must be non-empty");
    return std::make_shared<Restriction>(Restriction::Pair{std::move(name), std::move(value)});
}

inline RestrictionPtr make_compare(std::string name, CompareOp op, double value) {
    if (name.empty()) throw ConfigError("restriction: attribute name must be non-empty");
    return std::make_shared<Restriction>(Restriction::Compare{std::move(name), op, value});
}

inline RestrictionPtr make_and(std::vector<RestrictionPtr> children) {
    if (children.size() < 2) throw ConfigError("restriction: AND requires at least 2 children");
    return std::make_shared<Restriction>(Restriction::And{std::move(children)});
}

inline RestrictionPtr make_or(std::vector<RestrictionPtr> children) {
    if (children.size() < 2) throw ConfigError("restriction: OR requires at least 2 children");
    return std::make_shared<Restriction>(Restriction::Or{std::move(children)});
}

inline RestrictionPtr make_not(RestrictionPtr child) {
    if (!child) throw ConfigError("restriction: NOT requires a child");
    return std::make_shared<Restriction>(Restriction::Not{std::move(child)});
}

/// Structural equality (deep comparison through shared children).
inline bool operator==(const Restriction& a, const Restriction& b) {
    using R = Restriction;
    if (a.node().index() != b.node().index()) return false;
    if (const auto* pa = a.get_if<R::Pair>()) {
        const auto* pb = b.get_if<R::Pair>();
        return pa->name == pb->name && pa->value == pb->value;
    }
    if (const auto* ca = a.get_if<R::Compare>()) {
        const auto* cb = b.get_if<R::Compare>();
        return ca->name == cb->name && ca->op == cb->op && ca->value == cb->value;
    }
    auto children_equal = [](const std::vector<RestrictionPtr>& xs,
                             const std::vector<RestrictionPtr>& ys) {
        if (xs.size() != ys.size()) return false;
        for (std::size_t i = 0; i < xs.size(); ++i)
            if (!(*xs[i] == *ys[i])) return false;
        return true;
    };
    if (const auto* aa = a.get_if<R::And>())
        return children_equal(aa->children, b.get_if<R::And>()->children);
    if (const auto* oa = a.get_if<R::Or>())
        return children_equal(oa->children, b.get_if<R::Or>()->children);
    if (const auto* na = a.get_if<R::Not>()) return *na->child == *b.get_if<R::Not>()->child;
    return true;  // MatchAll
}

inline bool operator!=(const Restriction& a, const Restriction& b) { return !(a == b); }

// ---------------------------------------------------------------------------
// Lexer / parser
// ---------------------------------------------------------------------------

namespace detail {

/// Characters allowed in unquoted names, values, and numbers.
inline bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' ||
           c == '+';
}

inline bool ci_equal(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(a[i])) !=
            std::tolower(static_cast<unsigned char>(b[i])))
            return false;
    }
    return true;
}

inline bool is_keyword(std::string_view word) {
    return ci_equal(word, "AND") || ci_equal(word, "OR") || ci_equal(word, "NOT");
}

/// Strict decimal number: optional sign, digits with optional fraction, or a
/// leading-dot fraction. No scientific notation.
inline bool parse_decimal(std::string_view text, double& out) {
    std::size_t i = 0;
    if (i < text.size() && (text[i] == '+' || text[i] == '-')) ++i;
    std::size_t int_digits = 0;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i, ++int_digits;
    std::size_t frac_digits = 0;
    if (i < text.size() && text[i] == '.') {
        ++i;
        while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])))
            ++i, ++frac_digits;
    }
    if (i != text.size() || int_digits + frac_digits == 0) return false;
    if (int_digits > 0 && frac_digits == 0 && text.back() == '.') return false;
    // std::from_chars does not recognize a leading '+'.
    const std::size_t skip = text[0] == '+' ? 1 : 0;
    auto [ptr, ec] = std::from_chars(text.data() + skip, text.data() + text.size(), out);
    return ec == std::errc{} && ptr == text.data() + text.size();
}

struct QueryToken {
    enum class Kind { Word, Quoted, Colon, LParen, RParen, Op, End };
    Kind kind = Kind::End;
    std::size_t offset = 0;    ///< byte offset of the token start
    std::string text;          ///< word text or unescaped quoted value
    CompareOp op = CompareOp::Eq;
};

inline std::vector<QueryToken> lex_restriction(std::string_view text) {
    std::vector<QueryToken> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        QueryToken token;
        token.offset = i;
        if (c == '(') {
            token.kind = QueryToken::Kind::LParen;
            ++i;
        } else if (c == ')') {
            token.kind = QueryToken::Kind::RParen;
            ++i;
        } else if (c == ':') {
            token.kind = QueryToken::Kind::Colon;
            ++i;
        } else if (c == '<' || c == '>') {
            token.kind = QueryToken::Kind::Op;
            const bool eq = i + 1 < text.size() && text[i + 1] == '=';
            if (c == '<') token.op = eq ? CompareOp::Le : CompareOp::Lt;
            if (c == '>') token.op = eq ? CompareOp::Ge : CompareOp::Gt;
            i += eq ? 2 : 1;
        } else if (c == '=') {
            token.kind = QueryToken::Kind::Op;
            token.op = CompareOp::Eq;
            ++i;
        } else if (c == '!') {
            if (i + 1 >= text.size() || text[i + 1] != '=')
                throw ParseError(i, "expected '=' after '!'");
            token.kind = QueryToken::Kind::Op;
            token.op = CompareOp::Ne;
            i += 2;
        } else if (c == '"') {
            token.kind = QueryToken::Kind::Quoted;
            ++i;
            while (true) {
                if (i >= text.size()) throw ParseError(token.offset, "unterminated quoted value");
                const char q = text[i];
                if (q == '"') {
                    ++i;
                    break;
                }
                if (q == '\\') {
                    if (i + 1 >= text.size() || (text[i + 1] != '"' && text[i + 1] != '\\'))
                        throw ParseError(i, "expected '\\\\' or '\\\"' after '\\'");
                    token.text.push_back(text[i + 1]);
                    i += 2;
                } else {
                    token.text.push_back(q);
                    ++i;
                }
            }
        } else if (is_word_char(c)) {
            token.kind = QueryToken::Kind::Word;
            std::size_t start = i;
            while (i < text.size() && is_word_char(text[i])) ++i;
            token.text.assign(text.substr(start, i - start));
        } else {
            throw ParseError(i, "unexpected character");
        }
        tokens.push_back(std::move(token));
    }
    QueryToken end;
    end.kind = QueryToken::Kind::End;
    end.offset = text.size();
    tokens.push_back(std::move(end));
    return tokens;
}

class RestrictionParser {
public:
    explicit RestrictionParser(std::vector<QueryToken> tokens) : tokens_(std::move(tokens)) {}

    RestrictionPtr parse() {
        if (peek().kind == QueryToken::Kind::End) return make_match_all();
        RestrictionPtr expr = parse_expr();
        if (peek().kind != QueryToken::Kind::End)
            throw ParseError(peek().offset, "expected AND, OR, or end of input");
        return expr;
    }

private:
    const QueryToken& peek() const { return tokens_[pos_]; }
    const QueryToken& advance() { return tokens_[pos_++]; }

    bool at_keyword(std::string_view kw) const {
        return peek().kind == QueryToken::Kind::Word && ci_equal(peek().text, kw);
    }

    RestrictionPtr parse_expr() {
        std::vector<RestrictionPtr> children;
        children.push_back(parse_term());
        while (at_keyword("OR")) {
            advance();
            children.push_back(parse_term());
        }
        if (children.size() == 1) return std::move(children[0]);
        return make_or(std::move(children));
    }

    RestrictionPtr parse_term() {
        std::vector<RestrictionPtr> children;
        children.push_back(parse_factor());
        while (at_keyword("AND")) {
            advance();
            children.push_back(parse_factor());
        }
        if (children.size() == 1) return std::move(children[0]);
        return make_and(std::move(children));
    }

    RestrictionPtr parse_factor() {
        const QueryToken& token = peek();
        if (at_keyword("NOT")) {
            advance();
            return make_not(parse_factor());
        }
        if (token.kind == QueryToken::Kind::LParen) {
            advance();
            RestrictionPtr inner = parse_expr();
            if (peek().kind != QueryToken::Kind::RParen)
                throw ParseError(peek().offset, "expected ')'");
            advance();
            return inner;
        }
        if (token.kind == QueryToken::Kind::Word && !is_keyword(token.text))
            return parse_predicate();
        throw ParseError(token.offset, "expected NOT, '(', or an attribute name");
    }

    RestrictionPtr parse_predicate() {
        const QueryToken name = advance();
        const QueryToken& next = peek();
        if (next.kind == QueryToken::Kind::Colon) {
            advance();
            const QueryToken& value = peek();
            if (value.kind == QueryToken::Kind::Quoted ||
                (value.kind == QueryToken::Kind::Word && !is_keyword(value.text))) {
                advance();
                return make_pair(name.text, value.text);
            }
            throw ParseError(value.offset, "expected attribute value");
        }
        if (next.kind == QueryToken::Kind::Op) {
            const CompareOp op = advance().op;
            const QueryToken& number = peek();
            double parsed = 0.0;
            if (number.kind != QueryToken::Kind::Word || !parse_decimal(number.text, parsed))
                throw ParseError(number.offset, "expected number");
            advance();
            return make_compare(name.text, op, parsed);
        }
        throw ParseError(next.offset, "expected ':' or a comparison operator");
    }

    std::vector<QueryToken> tokens_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses restriction text. Grammar:
///   expr    := term {OR term}
///   term    := factor {AND factor}
///   factor  := NOT factor | "(" expr ")" | pair | compare
///   pair    := name ":" value
///   compare := name op number        op in { <, <=, >, >=, =, != }
/// AND binds tighter than OR; NOT binds tightest. Keywords are
/// case-insensitive; names and values are case-sensitive; values may be
/// double-quoted (with \" and \\ escapes) to include spaces or keywords.
/// Numbers are plain decimals. Empty or whitespace-only input -> MatchAll.
/// Throws ParseError carrying the byte offset of the offending token.
inline RestrictionPtr parse_restriction(std::string_view text) {
    return detail::RestrictionParser(detail::lex_restriction(text)).parse();
}

// ---------------------------------------------------------------------------
// Canonical formatter
// ---------------------------------------------------------------------------

namespace detail {

inline bool value_needs_quoting(std::string_view value) {
    if (value.empty() || is_keyword(value)) return true;
    return !std::all_of(value.begin(), value.end(), [](char c) { return is_word_char(c); });
}

inline void append_value(std::string& out, std::string_view value) {
    if (!value_needs_quoting(value)) {
        out.append(value);
        return;
    }
    out.push_back('"');
    for (char c : value) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    out.push_back('"');
}

/// Shortest fixed-notation decimal that round-trips to the same double.
inline std::string format_number(double value) {
    char buf[512];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::fixed);
    if (ec != std::errc{}) throw ConfigError("restriction: number is not representable");
    return std::string(buf, ptr);
}

inline void format_node(const Restriction& ast, std::string& out) {
    using R = Restriction;
    if (ast.get_if<R::MatchAll>()) return;
    if (const auto* p = ast.get_if<R::Pair>()) {
        out.append(p->name);
        out.push_back(':');
        append_value(out, p->value);
        return;
    }
    if (const auto* c = ast.get_if<R::Compare>()) {
        out.push_back('(');
        out.append(c->name);
        out.push_back(' ');
        out.append(compare_op_text(c->op));
        out.push_back(' ');
        out.append(format_number(c->value));
        out.push_back(')');
        return;
    }
    auto join = [&out](const std::vector<RestrictionPtr>& children, std::string_view kw) {
        out.push_back('(');
        for (std::size_t i = 0; i < children.size(); ++i) {
            if (i > 0) {
                out.push_back(' ');
                out.append(kw);
                out.push_back(' ');
            }
            format_node(*children[i], out);
        }
        out.push_back(')');
    };
    if (const auto* a = ast.get_if<R::And>()) return join(a->children, "AND");
    if (const auto* o = ast.get_if<R::Or>()) return join(o->children, "OR");
    const auto* n = ast.get_if<R::Not>();
    out.append("(NOT ");
    format_node(*n->child, out);
    out.push_back(')');
}

}  // namespace detail

/// Canonical fully-parenthesized text. parse_restriction(format_restriction(ast))
/// is structurally equal to ast; MatchAll formats to the empty string. A
/// MatchAll nested below another node has no textual form in the grammar, so
/// such trees do not survive a format/parse cycle.
inline std::string format_restriction(const Restriction& ast) {
    std::string out;
    detail::format_node(ast, out);
    return out;
}

inline std::string format_restriction(const RestrictionPtr& ast) {
    return format_restriction(*ast);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Evaluates a restriction against one attribute map. A Pair is true iff the
/// attribute exists with exactly that string value; a Compare is true iff the
/// attribute exists, is numeric, and satisfies the comparison. Missing
/// attributes make predicates false (so NOT of them is true).
inline bool evaluate_restriction(const Restriction& ast, const AttributeMap& attributes) {
    using R = Restriction;
    if (ast.get_if<R::MatchAll>()) return true;
    if (const auto* p = ast.get_if<R::Pair>()) {
        auto it = attributes.find(p->name);
        if (it == attributes.end()) return false;
        const std::string* s = std::get_if<std::string>(&it->second);
        return s != nullptr && *s == p->value;
    }
    if (const auto* c = ast.get_if<R::Compare>()) {
        auto it = attributes.find(c->name);
        if (it == attributes.end()) return false;
        const double* num = std::get_if<double>(&it->second);
        return num != nullptr && compare_holds(c->op, *num, c->value);
    }
    if (const auto* a = ast.get_if<R::And>()) {
        for (const auto& child : a->children)
            if (!evaluate_restriction(*child, attributes)) return false;
        return true;
    }
    if (const auto* o = ast.get_if<R::Or>()) {
        for (const auto& child : o->children)
            if (evaluate_restriction(*child, attributes)) return true;
        return false;
    }
    return !evaluate_restriction(*ast.get_if<R::Not>()->child, attributes);
}

inline bool evaluate_restriction(const RestrictionPtr& ast, const AttributeMap& attributes) {
    return evaluate_restriction(*ast, attributes);
}

// ---------------------------------------------------------------------------
// Posting-based resolution
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::uint32_t> all_ordinals(const IndexShard& shard) {
    std::vector<std::uint32_t> out(shard.size());
    for (std::uint32_t i = 0; i < out.size(); ++i) out[i] = i;
    return out;
}

inline std::vector<std::uint32_t> intersect_sorted(const std::vector<std::uint32_t>& a,
                                                   const std::vector<std::uint32_t>& b) {
    std::vector<std::uint32_t> out;
    out.reserve(std::min(a.size(), b.size()));
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline std::vector<std::uint32_t> union_sorted(const std::vector<std::uint32_t>& a,
                                               const std::vector<std::uint32_t>& b) {
    std::vector<std::uint32_t> out;
    out.reserve(a.size() + b.size());
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline std::vector<std::uint32_t> complement_sorted(const std::vector<std::uint32_t>& a,
                                                    std::uint32_t universe) {
    std::vector<std::uint32_t> out;
    out.reserve(universe - a.size());
    std::size_t j = 0;
    for (std::uint32_t i = 0; i < universe; ++i) {
        if (j < a.size() && a[j] == i) {
            ++j;
        } else {
            out.push_back(i);
        }
    }
    return out;
}

inline std::vector<std::uint32_t> resolve_node(const Restriction& ast, const IndexShard& shard) {
    using R = Restriction;
    if (ast.get_if<R::MatchAll>()) return all_ordinals(shard);
    if (const auto* p = ast.get_if<R::Pair>()) {
        // The category attribute is realized by sharding and never posted:
        // within a shard it matches either every document or none.
        if (p->name == kCategoryAttribute)
            return p->value == shard.category ? all_ordinals(shard)
                                              : std::vector<std::uint32_t>{};
        auto postings = posting_lookup(shard, attribute_posting_key(p->name, p->value));
        return {postings.begin(), postings.end()};
    }
    if (const auto* c = ast.get_if<R::Compare>()) {
        // Numeric attributes are forward-only; scan the shard.
        std::vector<std::uint32_t> out;
        for (std::uint32_t d = 0; d < shard.size(); ++d) {
            const AttributeMap& attrs = shard.forward.attributes[d];
            auto it = attrs.find(c->name);
            if (it == attrs.end()) continue;
            const double* num = std::get_if<double>(&it->second);
            if (num != nullptr && compare_holds(c->op, *num, c->value)) out.push_back(d);
        }
        return out;
    }
    if (const auto* a = ast.get_if<R::And>()) {
        std::vector<std::uint32_t> acc = resolve_node(*a->children[0], shard);
        for (std::size_t i = 1; i < a->children.size() && !acc.empty(); ++i)
            acc = intersect_sorted(acc, resolve_node(*a->children[i], shard));
        return acc;
    }
    if (const auto* o = ast.get_if<R::Or>()) {
        std::vector<std::uint32_t> acc = resolve_node(*o->children[0], shard);
        for (std::size_t i = 1; i < o->children.size(); ++i)
            acc = union_sorted(acc, resolve_node(*o->children[i], shard));
        return acc;
    }
    const auto* n = ast.get_if<R::Not>();
    return complement_sorted(resolve_node(*n->child, shard),
                             static_cast<std::uint32_t>(shard.size()));
}

}  // namespace detail

/// Exact allowed set {d : evaluate_restriction(ast, attributes(d))}, computed
/// with posting-list set operations where possible and forward scans for
/// numeric predicates. Returned ordinals are ascending.
inline std::vector<std::uint32_t> resolve_candidates(const Restriction& ast,
                                                     const IndexShard& shard) {
    return detail::resolve_node(ast, shard);
}

inline std::vector<std::uint32_t> resolve_candidates(const RestrictionPtr& ast,
                                                     const IndexShard& shard) {
    return detail::resolve_node(*ast, shard);
}

}  // namespace tokann
