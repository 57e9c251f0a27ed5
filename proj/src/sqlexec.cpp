#include "tabenc/sqlexec.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace tabenc::sql {

SyntaxError::SyntaxError(const std::string& msg, std::size_t offset_)
    : ValidationError("syntax error at byte " + std::to_string(offset_) + ": " + msg), offset(offset_) {}

namespace {

enum class Kind { Word, Symbol, End };

struct Token {
    Kind kind;
    std::string text;
    std::string lower;
    std::size_t offset;
};

std::vector<Token> lex(std::string_view s) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const char c = s[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else if (c == '(' || c == ')' || c == ',' || c == '=') {
            out.push_back({Kind::Symbol, std::string(1, c), std::string(1, c), i});
            ++i;
        } else if (c == '!') {
            if (i + 1 >= s.size() || s[i + 1] != '=') throw SyntaxError("expected '!='", i);
            out.push_back({Kind::Symbol, "!=", "!=", i});
            i += 2;
        } else {
            const std::size_t start = i;
            while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i])) && s[i] != '(' && s[i] != ')' &&
                   s[i] != ',' && s[i] != '=' && s[i] != '!')
                ++i;
            std::string w(s.substr(start, i - start));
            std::string lw = w;
            std::transform(lw.begin(), lw.end(), lw.begin(), [](unsigned char ch) { return std::tolower(ch); });
            out.push_back({Kind::Word, std::move(w), std::move(lw), start});
        }
    }
    out.push_back({Kind::End, "", "", s.size()});
    return out;
}

bool is_keyword(const std::string& lw) {
    static const std::set<std::string> kw{"select", "where", "from", "table", "and", "or", "in", "limit"};
    return kw.contains(lw);
}

class Parser {
public:
    explicit Parser(std::string_view text) : toks_(lex(text)) {}

    Query parse_top() {
        Query q = parse_query(/*nested=*/false);
        if (peek().kind != Kind::End) throw SyntaxError("unexpected '" + peek().text + "'", peek().offset);
        return q;
    }

private:
    const Token& peek() const { return toks_[pos_]; }
    const Token& take() { return toks_[pos_++]; }
    bool at_keyword(const char* kw) const { return peek().kind == Kind::Word && peek().lower == kw; }
    bool at_symbol(const char* sym) const { return peek().kind == Kind::Symbol && peek().text == sym; }

    void expect_keyword(const char* kw) {
        if (!at_keyword(kw)) throw SyntaxError(std::string("expected '") + kw + "'", peek().offset);
        ++pos_;
    }
    void expect_symbol(const char* sym) {
        if (!at_symbol(sym)) throw SyntaxError(std::string("expected '") + sym + "'", peek().offset);
        ++pos_;
    }
    std::string column() {
        const Token& t = peek();
        if (t.kind != Kind::Word || is_keyword(t.lower)) throw SyntaxError("expected column name", t.offset);
        ++pos_;
        return t.text;
    }
    std::string value() {
        const Token& t = peek();
        if (t.kind != Kind::Word || is_keyword(t.lower)) throw SyntaxError("expected value", t.offset);
        ++pos_;
        return t.text;
    }

    Query parse_query(bool nested) {
        Query q;
        expect_keyword("select");
        q.select_column = column();
        if (at_keyword("from")) {
            ++pos_;
            expect_keyword("table");
        }
        if (at_keyword("where")) {
            ++pos_;
            q.where = parse_condition(nested);
        } else if (nested) {
            throw SyntaxError("subquery needs a WHERE clause", peek().offset);
        }
        if (!nested && at_keyword("limit")) {
            ++pos_;
            const Token& t = take();
            if (t.kind != Kind::Word || t.text.empty() ||
                !std::all_of(t.text.begin(), t.text.end(), [](unsigned char c) { return std::isdigit(c); }))
                throw SyntaxError("LIMIT needs a non-negative integer", t.offset);
            q.limit = static_cast<std::size_t>(std::stoull(t.text));
        }
        return q;
    }

    Condition parse_condition(bool nested) {
        Condition c;
        c.atoms.push_back(parse_atom(nested));
        while (at_keyword("and") || at_keyword("or")) {
            const Token& t = take();
            c.connectives.push_back(t.lower == "and" ? Connective::And : Connective::Or);
            if (c.atoms.size() == kMaxAtoms) throw SyntaxError("more than 4 conditions", t.offset);
            c.atoms.push_back(parse_atom(nested));
        }
        if (nested) {
            // The nested form is exactly `select cy where cy = vy`.
            if (c.atoms.size() != 1 || !std::holds_alternative<Comparison>(c.atoms[0]) ||
                std::get<Comparison>(c.atoms[0]).op != CmpOp::Eq)
                throw SyntaxError("subquery must be a single equality", peek().offset);
        }
        return c;
    }

    Atom parse_atom(bool nested) {
        std::string col = column();
        if (at_keyword("in")) {
            ++pos_;
            expect_symbol("(");
            InList in{std::move(col), {}};
            in.values.push_back(value());
            while (at_symbol(",")) {
                ++pos_;
                in.values.push_back(value());
            }
            expect_symbol(")");
            return in;
        }
        if (at_symbol("!=")) {
            ++pos_;
            return Comparison{std::move(col), CmpOp::Ne, value()};
        }
        expect_symbol("=");
        if (at_symbol("(")) {
            const std::size_t off = peek().offset;
            if (nested) throw SyntaxError("nested subqueries are limited to one level", off);
            ++pos_;
            auto inner = std::make_shared<Query>(parse_query(/*nested=*/true));
            expect_symbol(")");
            return SubqueryEq{std::move(col), std::move(inner)};
        }
        return Comparison{std::move(col), CmpOp::Eq, value()};
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
};

std::string unparse_atom(const Atom& a) {
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Comparison>) {
                return x.column + (x.op == CmpOp::Eq ? " = " : " != ") + x.value;
            } else if constexpr (std::is_same_v<T, InList>) {
                std::string s = x.column + " in (";
                for (std::size_t i = 0; i < x.values.size(); ++i) s += (i ? ", " : "") + x.values[i];
                return s + ")";
            } else {
                return x.column + " = (" + unparse(*x.inner) + ")";
            }
        },
        a);
}

std::size_t resolve(const Table& t, const std::string& col) {
    auto idx = t.column_index(col);
    if (!idx) throw ExecutionError("unknown column '" + col + "'");
    return *idx;
}

bool eval_atom(const Atom& a, const Table& t, std::size_t row) {
    return std::visit(
        [&](const auto& x) -> bool {
            using T = std::decay_t<decltype(x)>;
            const std::string& cell = t.cell(row, resolve(t, x.column));
            if constexpr (std::is_same_v<T, Comparison>) {
                return (cell == x.value) == (x.op == CmpOp::Eq);
            } else if constexpr (std::is_same_v<T, InList>) {
                return std::find(x.values.begin(), x.values.end(), cell) != x.values.end();
            } else {
                // Scalar comparison against the first value of the inner result; empty never matches.
                auto inner = execute(*x.inner, t);
                return !inner.empty() && cell == inner.front();
            }
        },
        a);
}

bool eval_condition(const Condition& c, const Table& t, std::size_t row) {
    bool acc = eval_atom(c.atoms[0], t, row);
    for (std::size_t i = 1; i < c.atoms.size(); ++i) {
        const bool rhs = eval_atom(c.atoms[i], t, row);
        acc = c.connectives[i - 1] == Connective::And ? (acc && rhs) : (acc || rhs);
    }
    return acc;
}

}  // namespace

Query parse_sql(std::string_view text) { return Parser(text).parse_top(); }

std::string unparse(const Query& q) {
    std::string s = "select " + q.select_column;
    if (q.where) {
        s += " where " + unparse_atom(q.where->atoms[0]);
        for (std::size_t i = 1; i < q.where->atoms.size(); ++i)
            s += (q.where->connectives[i - 1] == Connective::And ? " and " : " or ") + unparse_atom(q.where->atoms[i]);
    }
    if (q.limit) s += " limit " + std::to_string(*q.limit);
    return s;
}

std::vector<std::string> execute(const Query& q, const Table& t) {
    const std::size_t sel = resolve(t, q.select_column);
    std::vector<std::string> out;
    for (std::size_t r = 0; r < t.n_rows(); ++r) {
        if (q.limit && out.size() >= *q.limit) break;
        if (q.where && !eval_condition(*q.where, t, r)) continue;
        out.push_back(t.cell(r, sel));
    }
    return out;
}

bool denotation_match(const std::vector<std::string>& pred, const std::vector<std::string>& gold,
                      MatchSemantics sem) {
    if (sem == MatchSemantics::Set)
        return std::set<std::string>(pred.begin(), pred.end()) == std::set<std::string>(gold.begin(), gold.end());
    if (pred.size() != gold.size()) return false;
    auto a = pred, b = gold;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return a == b;
}

double denotation_accuracy(const std::vector<std::vector<std::string>>& preds,
                           const std::vector<std::vector<std::string>>& golds, MatchSemantics sem) {
    if (preds.size() != golds.size())
        throw InputError("prediction count " + std::to_string(preds.size()) + " != gold count " +
                         std::to_string(golds.size()));
    if (preds.empty()) return 0.0;
    std::size_t ok = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) ok += denotation_match(preds[i], golds[i], sem);
    return static_cast<double>(ok) / static_cast<double>(preds.size());
}

}  // namespace tabenc::sql
