#include "tabenc/mask.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <map>
#include <sstream>
#include <tuple>

namespace tabenc {

BitMatrix::BitMatrix(std::size_t rows, std::size_t cols, bool value)
    : rows_(rows), cols_(cols), stride_((cols + 63) / 64), words_(rows * stride_, 0) {
    if (value)
        for (std::size_t i = 0; i < rows; ++i) set_range(i, 0, cols);
}

void BitMatrix::set_range(std::size_t i, std::size_t k0, std::size_t k1) {
    if (k0 >= k1) return;
    std::uint64_t* w = words_.data() + i * stride_;
    std::size_t a = k0 >> 6, b = (k1 - 1) >> 6;
    const std::uint64_t lo = ~std::uint64_t{0} << (k0 & 63);
    const std::uint64_t hi = ~std::uint64_t{0} >> (63 - ((k1 - 1) & 63));
    if (a == b) {
        w[a] |= lo & hi;
        return;
    }
    w[a] |= lo;
    for (std::size_t x = a + 1; x < b; ++x) w[x] = ~std::uint64_t{0};
    w[b] |= hi;
}

std::size_t BitMatrix::count() const {
    std::size_t n = 0;
    for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
}

std::size_t BitMatrix::count_row(std::size_t i) const {
    std::size_t n = 0;
    for (std::size_t x = 0; x < stride_; ++x) n += static_cast<std::size_t>(std::popcount(words_[i * stride_ + x]));
    return n;
}

BitMatrix causal_mask(std::size_t n) {
    BitMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.set_range(i, 0, i + 1);
    return m;
}

namespace {

struct Rules {
    bool same_column = false;
    bool same_row = false;
    bool relays = false;  // [ROW] [COL] [CELL] [TAB] <-> cell content
};

Rules rules_for(MaskScheme s) {
    switch (s) {
        case MaskScheme::M0: return {};
        case MaskScheme::M1: return {true, true, false};
        case MaskScheme::M2: return {true, false, false};
        case MaskScheme::M3: return {false, true, false};
        case MaskScheme::M4: return {true, false, true};
        case MaskScheme::M5: return {false, true, true};
        case MaskScheme::M6: return {false, false, true};
    }
    return {};
}

void check_scheme(const EncodedInput& enc, MaskScheme scheme) {
    if (!is_legal(enc.scheme, scheme))
        throw ConfigError("illegal factor combination (" + to_string(enc.scheme) + ", " + to_string(scheme) +
                          "): " + to_string(scheme) + " requires T2 structural tokens");
}

bool is_question(const EncodedInput& enc, std::size_t i) { return enc.roles[i] == TokenRole::Question; }
bool is_content(const EncodedInput& enc, std::size_t i) { return enc.roles[i] == TokenRole::CellContent; }

}  // namespace

bool mask_allows(const EncodedInput& enc, MaskScheme scheme, std::size_t i, std::size_t j) {
    if (i == j || scheme == MaskScheme::M0) return true;
    // q <-> q and q <-> w: the question sees the whole table side and vice versa.
    if (is_question(enc, i) || is_question(enc, j)) return true;
    const Rules rules = rules_for(scheme);
    const bool ci = is_content(enc, i), cj = is_content(enc, j);
    if (ci && cj) {
        if (rules.same_column && enc.col_idx[i] == enc.col_idx[j]) return true;
        if (rules.same_row && enc.row_idx[i] == enc.row_idx[j]) return true;
        return false;
    }
    if (!rules.relays || ci == cj) return false;
    const std::size_t tok = ci ? j : i;
    const std::size_t cell = ci ? i : j;
    switch (enc.roles[tok]) {
        case TokenRole::RowTok: return enc.row_idx[tok] == enc.row_idx[cell];
        case TokenRole::ColTok: return enc.col_idx[tok] == enc.col_idx[cell];
        case TokenRole::CellTok:
            return enc.row_idx[tok] == enc.row_idx[cell] && enc.col_idx[tok] == enc.col_idx[cell];
        case TokenRole::TableTok: return true;
        default: return false;
    }
}

AttentionMask build_mask_bruteforce(const EncodedInput& enc, MaskScheme scheme) {
    check_scheme(enc, scheme);
    const std::size_t n = enc.size();
    AttentionMask m{n, scheme, BitMatrix(n, n), {}};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (mask_allows(enc, scheme, i, j)) m.dense.set(i, j);
    m.blocks = export_blocks(m.dense);
    return m;
}

AttentionMask build_mask(const EncodedInput& enc, MaskScheme scheme) {
    check_scheme(enc, scheme);
    const std::size_t n = enc.size();
    AttentionMask m{n, scheme, BitMatrix(n, n, scheme == MaskScheme::M0), {}};
    if (scheme == MaskScheme::M0) {
        m.blocks = export_blocks(m.dense);
        return m;
    }
    BitMatrix& d = m.dense;
    for (std::size_t i = 0; i < n; ++i) d.set(i, i);

    // The question is always a prefix; it forms a full band in both directions.
    const std::size_t q = enc.question_length();
    for (std::size_t i = 0; i < q; ++i) d.set_range(i, 0, n);
    for (std::size_t i = q; i < n; ++i) d.set_range(i, 0, q);

    const Rules rules = rules_for(scheme);
    std::map<std::int32_t, std::vector<std::size_t>> by_row, by_col;
    std::map<std::pair<std::int32_t, std::int32_t>, std::vector<std::size_t>> by_cell;
    std::vector<std::size_t> content;
    for (std::size_t i = 0; i < n; ++i) {
        if (!is_content(enc, i)) continue;
        by_row[enc.row_idx[i]].push_back(i);
        by_col[enc.col_idx[i]].push_back(i);
        by_cell[{enc.row_idx[i], enc.col_idx[i]}].push_back(i);
        content.push_back(i);
    }
    auto connect_all = [&](const std::vector<std::size_t>& g) {
        for (std::size_t a : g)
            for (std::size_t b : g) d.set(a, b);
    };
    if (rules.same_column)
        for (const auto& [_, g] : by_col) connect_all(g);
    if (rules.same_row)
        for (const auto& [_, g] : by_row) connect_all(g);
    if (rules.relays) {
        static const std::vector<std::size_t> none;
        auto lookup = [](const auto& groups, const auto& key) -> const std::vector<std::size_t>& {
            auto it = groups.find(key);
            return it == groups.end() ? none : it->second;
        };
        for (std::size_t t = q; t < n; ++t) {
            const std::vector<std::size_t>* targets = nullptr;
            switch (enc.roles[t]) {
                case TokenRole::RowTok: targets = &lookup(by_row, enc.row_idx[t]); break;
                case TokenRole::ColTok: targets = &lookup(by_col, enc.col_idx[t]); break;
                case TokenRole::CellTok: targets = &lookup(by_cell, std::pair{enc.row_idx[t], enc.col_idx[t]}); break;
                case TokenRole::TableTok: targets = &content; break;
                default: break;
            }
            if (!targets) continue;
            for (std::size_t c : *targets) {
                d.set(t, c);
                d.set(c, t);
            }
        }
    }
    m.blocks = export_blocks(d);
    return m;
}

double sparsity(const BitMatrix& allowed) {
    const double total = static_cast<double>(allowed.rows()) * static_cast<double>(allowed.cols());
    if (total == 0) return 0.0;
    return 1.0 - static_cast<double>(allowed.count()) / total;
}

double sparsity(const AttentionMask& mask) { return sparsity(mask.dense); }

std::vector<Block> export_blocks(const BitMatrix& allowed) {
    std::vector<Block> done;
    // Open rectangles keyed by their key range; value = first query row.
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> open, next;
    for (std::size_t i = 0; i < allowed.rows(); ++i) {
        next.clear();
        allowed.for_each_run(i, [&](std::size_t k0, std::size_t k1) {
            auto it = open.find({k0, k1});
            if (it != open.end()) {
                next.emplace(it->first, it->second);
                open.erase(it);
            } else {
                next.emplace(std::pair{k0, k1}, i);
            }
        });
        for (const auto& [key, q0] : open) done.push_back({q0, i, key.first, key.second});
        open.swap(next);
    }
    for (const auto& [key, q0] : open) done.push_back({q0, allowed.rows(), key.first, key.second});
    std::sort(done.begin(), done.end(),
              [](const Block& a, const Block& b) { return std::tie(a.q0, a.k0) < std::tie(b.q0, b.k0); });
    return done;
}

std::string blocks_to_text(const AttentionMask& mask) {
    std::ostringstream out;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", sparsity(mask));
    out << "L=" << mask.length << " scheme=" << to_string(mask.scheme) << " sparsity=" << buf << '\n';
    for (const auto& b : mask.blocks) out << b.q0 << ' ' << b.q1 << ' ' << b.k0 << ' ' << b.k1 << '\n';
    return out.str();
}

std::string to_string(BiasClass c) {
    static constexpr const char* names[] = {"self",
                                            "question->question",
                                            "question->cell",
                                            "cell->question",
                                            "question->header",
                                            "header->question",
                                            "same-row",
                                            "same-column",
                                            "cell->column-header",
                                            "column-header->cell",
                                            "header<->header-same-column",
                                            "same-cell",
                                            "other"};
    return names[static_cast<std::size_t>(c)];
}

// Priority order: self, q->q, q->header, header->q, q->cell, cell->q,
// header<->header (same column), same-cell, cell->header, header->cell,
// same-row, same-column, other. "cell" means any non-header table token for
// the question relations and data-row content otherwise.
BiasClass classify_bias_pair(const EncodedInput& enc, std::size_t i, std::size_t j) {
    if (i == j) return BiasClass::Self;
    const bool qi = is_question(enc, i), qj = is_question(enc, j);
    const bool ci = is_content(enc, i), cj = is_content(enc, j);
    const bool hi = ci && enc.row_idx[i] == kHeaderRow, hj = cj && enc.row_idx[j] == kHeaderRow;
    if (qi && qj) return BiasClass::QuestionToQuestion;
    if (qi && hj) return BiasClass::QuestionToHeader;
    if (hi && qj) return BiasClass::HeaderToQuestion;
    if (qi) return BiasClass::QuestionToCell;
    if (qj) return BiasClass::CellToQuestion;
    if (!ci || !cj) return BiasClass::Other;
    const bool same_col = enc.col_idx[i] == enc.col_idx[j];
    const bool same_row = enc.row_idx[i] == enc.row_idx[j];
    if (hi && hj && same_col) return BiasClass::HeaderHeaderSameColumn;
    if (same_row && same_col) return BiasClass::SameCell;
    if (!hi && hj && same_col) return BiasClass::CellToColumnHeader;
    if (hi && !hj && same_col) return BiasClass::ColumnHeaderToCell;
    if (same_row) return BiasClass::SameRow;
    if (same_col) return BiasClass::SameColumn;
    return BiasClass::Other;
}

BiasRelationMap build_bias_map(const EncodedInput& enc) {
    const std::size_t n = enc.size();
    BiasRelationMap m{n, std::vector<std::uint8_t>(n * n)};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m.rel[i * n + j] = static_cast<std::uint8_t>(classify_bias_pair(enc, i, j));
    return m;
}

}  // namespace tabenc
