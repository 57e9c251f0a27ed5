#pragma once

// Brute-force SQL evaluator: scans the query's word list once per row.
// No syntax tree is built; nested selects recurse on the word sub-range.

#include <cctype>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace oracle {

inline std::vector<std::string> sql_words(const std::string& q) {
    std::string spaced;
    for (char ch : q) {
        if (ch == '(' || ch == ')' || ch == ',') {
            spaced += ' ';
            spaced += ch;
            spaced += ' ';
        } else {
            spaced += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        }
    }
    std::istringstream in(spaced);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

struct SqlTable {
    std::vector<std::string> headers;
    std::vector<std::vector<std::string>> rows;

    std::size_t col(const std::string& name) const {
        for (std::size_t c = 0; c < headers.size(); ++c)
            if (headers[c] == name) return c;
        throw std::runtime_error("unknown column " + name);
    }
};

std::vector<std::string> sql_run(const std::vector<std::string>& w, std::size_t b, std::size_t e, const SqlTable& t);

// Index one past the ')' matching the '(' at position p.
inline std::size_t skip_parens(const std::vector<std::string>& w, std::size_t p) {
    int depth = 0;
    for (std::size_t i = p; i < w.size(); ++i) {
        if (w[i] == "(") ++depth;
        if (w[i] == ")" && --depth == 0) return i + 1;
    }
    throw std::runtime_error("unbalanced parentheses");
}

inline bool row_passes(const std::vector<std::string>& w, std::size_t b, std::size_t e, const SqlTable& t,
                       std::size_t r) {
    bool acc = false;
    std::string conn = "";
    std::size_t i = b;
    while (i < e) {
        if (w[i] == "and" || w[i] == "or") {
            conn = w[i++];
            continue;
        }
        const std::string& cell = t.rows[r][t.col(w[i])];
        const std::string& op = w[i + 1];
        bool v = false;
        if (op == "in") {
            std::size_t j = i + 3;
            for (; w[j] != ")"; ++j)
                if (w[j] != "," && w[j] == cell) v = true;
            i = j + 1;
        } else if (op == "=" && w[i + 2] == "(") {
            const std::size_t close = skip_parens(w, i + 2);
            const auto inner = sql_run(w, i + 3, close - 1, t);
            v = !inner.empty() && inner[0] == cell;
            i = close;
        } else if (op == "=") {
            v = cell == w[i + 2];
            i += 3;
        } else if (op == "!=") {
            v = cell != w[i + 2];
            i += 3;
        } else {
            throw std::runtime_error("unexpected word " + op);
        }
        acc = conn.empty() ? v : conn == "and" ? (acc && v) : (acc || v);
    }
    return acc;
}

// Words [b, e) hold "select col [from table] [where ...] [limit k]".
inline std::vector<std::string> sql_run(const std::vector<std::string>& w, std::size_t b, std::size_t e,
                                        const SqlTable& t) {
    const std::size_t sel = t.col(w[b + 1]);
    std::size_t where = e, limit_at = e;
    for (std::size_t i = b + 2; i < e; ++i) {
        if (w[i] == "(") {
            i = skip_parens(w, i) - 1;
            continue;
        }
        if (w[i] == "where" && where == e) where = i;
        if (w[i] == "limit") limit_at = i;
    }
    std::size_t cap = t.rows.size();
    if (limit_at != e) cap = std::stoul(w[limit_at + 1]);
    std::vector<std::string> out;
    for (std::size_t r = 0; r < t.rows.size() && out.size() < cap; ++r)
        if (where == e || row_passes(w, where + 1, limit_at, t, r)) out.push_back(t.rows[r][sel]);
    return out;
}

inline std::vector<std::string> sql_eval(const std::string& query, const SqlTable& t) {
    const auto w = sql_words(query);
    return sql_run(w, 0, w.size(), t);
}

}  // namespace oracle
