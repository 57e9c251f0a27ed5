#pragma once

// Reference layout and mask predicate written directly from the token
// and mask scheme descriptions, sharing no code with the library.

#include <cctype>
#include <string>
#include <vector>

namespace oracle {

enum Kind { Q, Sep, Tab, RowMark, ColMark, CellMark, Content };

struct Tok {
    std::string sym;
    Kind kind = Q;
    bool header = false;  // content of a header cell
    int row = 0;          // 1..R for data rows, 0 otherwise (headers use `header`)
    int col = 0;          // 1..C, 0 when outside a column
    int k = 0;            // index inside the cell
    int seg = 0;
};

// Digits of numbers are separate tokens; other words and punctuation stay whole.
inline std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char ch = text[i];
        if (ch == ' ') {
            flush();
        } else if (ch == '(' || ch == ')' || ch == ',' || ch == '=') {
            flush();
            out.emplace_back(1, ch);
        } else if (ch == '!' && i + 1 < text.size() && text[i + 1] == '=') {
            flush();
            out.emplace_back("!=");
            ++i;
        } else if (std::isdigit(static_cast<unsigned char>(ch)) && cur.empty()) {
            out.emplace_back(1, ch);
        } else {
            cur += ch;
        }
    }
    flush();
    return out;
}

inline std::vector<Tok> layout(const std::string& question, const std::vector<std::string>& headers,
                               const std::vector<std::vector<std::string>>& rows, int scheme) {
    std::vector<Tok> out;
    for (const auto& w : split_words(question)) out.push_back({w, Q, false, 0, 0, 0, 0});
    out.push_back({"SEP", Sep, false, 0, 0, 0, 1});
    auto cell = [&](const std::string& text, bool header, int r, int c) {
        int k = 0;
        for (const auto& w : split_words(text)) out.push_back({w, Content, header, r, c, k++, 1});
    };
    const int C = static_cast<int>(headers.size());
    const int R = static_cast<int>(rows.size());
    bool first = true;
    if (scheme == 0) {
        for (int c = 1; c <= C; ++c) {
            if (!first) out.push_back({"SEP", Sep, false, 0, 0, 0, 1});
            first = false;
            cell(headers[c - 1], true, 0, c);
        }
        for (int r = 1; r <= R; ++r)
            for (int c = 1; c <= C; ++c) {
                out.push_back({"SEP", Sep, false, 0, 0, 0, 1});
                cell(rows[r - 1][c - 1], false, r, c);
            }
    } else if (scheme == 1) {
        for (int c = 1; c <= C; ++c) cell(headers[c - 1], true, 0, c);
        for (int r = 1; r <= R; ++r) {
            out.push_back({"[ROW " + std::to_string(r) + "]", RowMark, false, r, 0, 0, 1});
            for (int c = 1; c <= C; ++c) {
                out.push_back({"[CELL]", CellMark, false, r, c, 0, 1});
                cell(rows[r - 1][c - 1], false, r, c);
            }
        }
    } else {
        out.push_back({"[TAB]", Tab, false, 0, 0, 0, 1});
        for (int c = 1; c <= C; ++c) {
            out.push_back({"[COL]", ColMark, false, 0, c, 0, 1});
            cell(headers[c - 1], true, 0, c);
        }
        for (int r = 1; r <= R; ++r) {
            out.push_back({"[ROW]", RowMark, false, r, 0, 0, 1});
            for (int c = 1; c <= C; ++c) {
                out.push_back({"[CELL]", CellMark, false, r, c, 0, 1});
                cell(rows[r - 1][c - 1], false, r, c);
            }
        }
    }
    return out;
}

// CPE by a single left-to-right scan: a run continues only while consecutive
// tokens are both question tokens or both content of the same cell.
inline std::vector<int> cpe_positions(const std::vector<Tok>& toks) {
    std::vector<int> pos(toks.size(), 0);
    for (std::size_t i = 1; i < toks.size(); ++i) {
        const Tok& a = toks[i - 1];
        const Tok& b = toks[i];
        const bool same_run = (a.kind == Q && b.kind == Q) ||
                              (a.kind == Content && b.kind == Content && a.header == b.header && a.row == b.row &&
                               a.col == b.col);
        pos[i] = same_run ? pos[i - 1] + 1 : 0;
    }
    return pos;
}

// Rows are relations, columns M1..M6.
//                         M1 M2 M3 M4 M5 M6
inline constexpr bool kSameCol[6] = {1, 1, 0, 1, 0, 0};
inline constexpr bool kSameRow[6] = {1, 0, 1, 0, 1, 0};
inline constexpr bool kRelays[6] = {0, 0, 0, 1, 1, 1};

inline bool same_row(const Tok& a, const Tok& b) { return a.header == b.header && a.row == b.row; }

inline bool relay_links(const Tok& t, const Tok& w) {
    if (w.kind != Content) return false;
    switch (t.kind) {
        case RowMark: return !w.header && w.row == t.row;
        case ColMark: return w.col == t.col;
        case CellMark: return !w.header && w.row == t.row && w.col == t.col;
        case Tab: return true;
        default: return false;
    }
}

/// scheme 0..6
inline bool allows(const std::vector<Tok>& toks, int scheme, std::size_t i, std::size_t j) {
    if (scheme == 0 || i == j) return true;
    const Tok& a = toks[i];
    const Tok& b = toks[j];
    if (a.kind == Q || b.kind == Q) return true;
    const int s = scheme - 1;
    if (a.kind == Content && b.kind == Content)
        return (kSameCol[s] && a.col == b.col) || (kSameRow[s] && same_row(a, b));
    if (!kRelays[s]) return false;
    return relay_links(a, b) || relay_links(b, a);
}

// Bias classes, by listing index of the library enum.
enum Rel {
    Self, QQ, QCell, CellQ, QHead, HeadQ, SameRowRel, SameColRel, CellHead, HeadCell, HeadHeadCol, SameCellRel, Other
};

inline int bias_class(const std::vector<Tok>& toks, std::size_t i, std::size_t j) {
    if (i == j) return Self;
    const Tok& a = toks[i];
    const Tok& b = toks[j];
    const bool ah = a.kind == Content && a.header, bh = b.kind == Content && b.header;
    // Ordered rule list; the first rule that fires wins.
    const std::vector<std::pair<bool, Rel>> rules = {
        {a.kind == Q && b.kind == Q, QQ},
        {a.kind == Q && bh, QHead},
        {ah && b.kind == Q, HeadQ},
        {a.kind == Q, QCell},
        {b.kind == Q, CellQ},
        {a.kind != Content || b.kind != Content, Other},
        {ah && bh && a.col == b.col, HeadHeadCol},
        {same_row(a, b) && a.col == b.col, SameCellRel},
        {!ah && bh && a.col == b.col, CellHead},
        {ah && !bh && a.col == b.col, HeadCell},
        {same_row(a, b), SameRowRel},
        {a.col == b.col, SameColRel},
    };
    for (const auto& [fires, rel] : rules)
        if (fires) return rel;
    return Other;
}

}  // namespace oracle
