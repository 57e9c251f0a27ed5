#include "tabenc/linearize.hpp"

#include <algorithm>
#include <sstream>

namespace tabenc {

std::string to_string(TokenRole r) {
    switch (r) {
        case TokenRole::Question: return "Question";
        case TokenRole::TableTok: return "TableTok";
        case TokenRole::RowTok: return "RowTok";
        case TokenRole::ColTok: return "ColTok";
        case TokenRole::CellTok: return "CellTok";
        case TokenRole::CellContent: return "CellContent";
        case TokenRole::Boundary: return "Boundary";
    }
    return "?";
}

TruncationError::TruncationError(std::size_t required_, std::size_t limit_)
    : ValidationError("encoded input needs " + std::to_string(required_) + " tokens, context limit is " +
                      std::to_string(limit_)),
      required(required_),
      limit(limit_) {}

std::size_t EncodedInput::question_length() const {
    std::size_t q = 0;
    while (q < roles.size() && roles[q] == TokenRole::Question) ++q;
    return q;
}

namespace {

class Builder {
public:
    explicit Builder(EncodedInput& enc) : enc_(enc) {}

    void push(TokenId id, TokenRole role, std::int32_t row, std::int32_t col, std::int32_t ord, std::int32_t seg) {
        enc_.token_ids.push_back(id);
        enc_.roles.push_back(role);
        enc_.row_idx.push_back(row);
        enc_.col_idx.push_back(col);
        enc_.cell_ord.push_back(ord);
        enc_.segment.push_back(seg);
    }
    void structural(TokenId id, TokenRole role, std::int32_t row, std::int32_t col) { push(id, role, row, col, 0, 1); }
    void content(const std::string& text, std::int32_t row, std::int32_t col) {
        auto toks = tokenize_text(text, &enc_.unk_count);
        for (std::size_t k = 0; k < toks.size(); ++k)
            push(toks[k], TokenRole::CellContent, row, col, static_cast<std::int32_t>(k), 1);
    }

private:
    EncodedInput& enc_;
};

}  // namespace

EncodedInput linearize(std::string_view question, const Table& table, TokenScheme scheme,
                       const LinearizeOptions& opts) {
    const auto& v = Vocabulary::instance();
    if (scheme == TokenScheme::T1 && table.n_rows() > static_cast<std::size_t>(Vocabulary::kMaxIndexedRows))
        throw ConfigError("T1 supports at most " + std::to_string(Vocabulary::kMaxIndexedRows) + " rows, table has " +
                          std::to_string(table.n_rows()));

    EncodedInput enc;
    enc.scheme = scheme;
    Builder b(enc);
    for (TokenId id : tokenize_text(question, &enc.unk_count)) b.push(id, TokenRole::Question, 0, 0, 0, 0);
    b.structural(v.sep(), TokenRole::Boundary, 0, 0);

    const auto n_cols = static_cast<std::int32_t>(table.n_cols());
    const auto n_rows = static_cast<std::int32_t>(table.n_rows());
    switch (scheme) {
        case TokenScheme::T0: {
            for (std::int32_t c = 1; c <= n_cols; ++c) {
                if (c > 1) b.structural(v.sep(), TokenRole::Boundary, 0, 0);
                b.content(table.headers()[c - 1], kHeaderRow, c);
            }
            for (std::int32_t r = 1; r <= n_rows; ++r)
                for (std::int32_t c = 1; c <= n_cols; ++c) {
                    b.structural(v.sep(), TokenRole::Boundary, 0, 0);
                    b.content(table.cell(r - 1, c - 1), r, c);
                }
            break;
        }
        case TokenScheme::T1: {
            for (std::int32_t c = 1; c <= n_cols; ++c) b.content(table.headers()[c - 1], kHeaderRow, c);
            for (std::int32_t r = 1; r <= n_rows; ++r) {
                b.structural(v.indexed_row(r), TokenRole::RowTok, r, 0);
                for (std::int32_t c = 1; c <= n_cols; ++c) {
                    b.structural(v.cell(), TokenRole::CellTok, r, c);
                    b.content(table.cell(r - 1, c - 1), r, c);
                }
            }
            break;
        }
        case TokenScheme::T2: {
            b.structural(v.tab(), TokenRole::TableTok, 0, 0);
            for (std::int32_t c = 1; c <= n_cols; ++c) {
                b.structural(v.col(), TokenRole::ColTok, 0, c);
                b.content(table.headers()[c - 1], kHeaderRow, c);
            }
            for (std::int32_t r = 1; r <= n_rows; ++r) {
                b.structural(v.row(), TokenRole::RowTok, r, 0);
                for (std::int32_t c = 1; c <= n_cols; ++c) {
                    b.structural(v.cell(), TokenRole::CellTok, r, c);
                    b.content(table.cell(r - 1, c - 1), r, c);
                }
            }
            break;
        }
    }
    if (enc.size() > opts.context_limit) throw TruncationError(enc.size(), opts.context_limit);
    return enc;
}

EncodedInput assign_positions(EncodedInput enc, PositionScheme scheme) {
    const std::size_t n = enc.size();
    enc.pos_idx.assign(n, 0);
    if (scheme == PositionScheme::TPE) {
        for (std::size_t i = 0; i < n; ++i) enc.pos_idx[i] = static_cast<std::int32_t>(i);
        return enc;
    }
    for (std::size_t i = 1; i < n; ++i) {
        const TokenRole role = enc.roles[i];
        bool restart = false;
        switch (role) {
            case TokenRole::Question: restart = enc.roles[i - 1] != TokenRole::Question; break;
            case TokenRole::CellContent:
                restart = enc.roles[i - 1] != TokenRole::CellContent || enc.row_idx[i - 1] != enc.row_idx[i] ||
                          enc.col_idx[i - 1] != enc.col_idx[i];
                break;
            default: restart = true; break;
        }
        enc.pos_idx[i] = restart ? 0 : enc.pos_idx[i - 1] + 1;
    }
    return enc;
}

TableDims reconstruct_dims(const EncodedInput& enc) {
    TableDims d;
    for (std::size_t i = 0; i < enc.size(); ++i) {
        if (enc.roles[i] != TokenRole::CellContent) continue;
        d.rows = std::max<std::size_t>(d.rows, static_cast<std::size_t>(std::max(enc.row_idx[i], 0)));
        d.cols = std::max<std::size_t>(d.cols, static_cast<std::size_t>(enc.col_idx[i]));
    }
    return d;
}

std::string encoding_to_tsv(const EncodedInput& enc) {
    const auto& v = Vocabulary::instance();
    std::ostringstream out;
    out << "index\tsymbol\trole\trow\tcol\tcell_ord\tsegment\tpos\n";
    for (std::size_t i = 0; i < enc.size(); ++i) {
        out << i << '\t' << v.symbol(enc.token_ids[i]) << '\t' << to_string(enc.roles[i]) << '\t';
        if (enc.row_idx[i] == kHeaderRow)
            out << 'H';
        else
            out << enc.row_idx[i];
        out << '\t' << enc.col_idx[i] << '\t' << enc.cell_ord[i] << '\t' << enc.segment[i] << '\t';
        if (enc.has_positions())
            out << enc.pos_idx[i];
        else
            out << '-';
        out << '\n';
    }
    return out.str();
}

}  // namespace tabenc
