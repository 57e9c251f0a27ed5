#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tabenc/core.hpp"

namespace tabenc::sql {

struct SyntaxError : ValidationError {
    SyntaxError(const std::string& msg, std::size_t offset);
    std::size_t offset;  // byte offset into the query text
};

struct ExecutionError : ValidationError {
    using ValidationError::ValidationError;
};

enum class CmpOp { Eq, Ne };
enum class Connective { And, Or };

struct Query;

/// `col = value` / `col != value`
struct Comparison {
    std::string column;
    CmpOp op = CmpOp::Eq;
    std::string value;
};
/// `col in (v1, v2, ...)`
struct InList {
    std::string column;
    std::vector<std::string> values;
};
/// `col = (select ...)`
struct SubqueryEq {
    std::string column;
    std::shared_ptr<const Query> inner;
};

using Atom = std::variant<Comparison, InList, SubqueryEq>;

/// Atoms chained left to right; AND and OR have equal precedence.
struct Condition {
    std::vector<Atom> atoms;
    std::vector<Connective> connectives;  // atoms.size() - 1 entries
};

struct Query {
    std::string select_column;
    std::optional<Condition> where;
    std::optional<std::size_t> limit;
};

inline constexpr std::size_t kMaxAtoms = 4;

/// Grammar (keywords case-insensitive, FROM clause optional):
///   query := SELECT col [FROM TABLE] [WHERE cond] [LIMIT k]
///   cond  := atom ((AND|OR) atom)*          at most 4 atoms
///   atom  := col (=|!=) value | col IN '(' value (',' value)* ')'
///          | col = '(' SELECT col [FROM TABLE] WHERE col = value ')'
Query parse_sql(std::string_view text);

/// Canonical form: lowercase keywords, single spaces, "in (a, b)", "= (select ...)".
std::string unparse(const Query& q);

/// Values of the selected column for rows passing the filter, in table
/// order, truncated to LIMIT. Unknown columns raise ExecutionError.
std::vector<std::string> execute(const Query& q, const Table& t);
inline std::vector<std::string> execute(std::string_view text, const Table& t) { return execute(parse_sql(text), t); }

enum class MatchSemantics { Multiset, Set };

bool denotation_match(const std::vector<std::string>& pred, const std::vector<std::string>& gold,
                      MatchSemantics sem = MatchSemantics::Multiset);

/// Fraction of positions whose denotations match irrespective of order.
double denotation_accuracy(const std::vector<std::vector<std::string>>& preds,
                           const std::vector<std::vector<std::string>>& golds,
                           MatchSemantics sem = MatchSemantics::Multiset);

}  // namespace tabenc::sql
