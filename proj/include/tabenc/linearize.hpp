#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tabenc/core.hpp"
#include "tabenc/vocab.hpp"

namespace tabenc {

enum class TokenRole : std::uint8_t { Question, TableTok, RowTok, ColTok, CellTok, CellContent, Boundary };

std::string to_string(TokenRole r);

/// row_idx value carried by header cells (data rows are 1..R, 0 = not in table).
inline constexpr std::int32_t kHeaderRow = -1;

struct TruncationError : ValidationError {
    TruncationError(std::size_t required, std::size_t limit);
    std::size_t required;
    std::size_t limit;
};

/// Token ids plus every per-token channel consumed by embeddings, masks and biases.
struct EncodedInput {
    std::vector<TokenId> token_ids;
    std::vector<TokenRole> roles;
    std::vector<std::int32_t> row_idx;
    std::vector<std::int32_t> col_idx;
    std::vector<std::int32_t> cell_ord;
    std::vector<std::int32_t> segment;
    std::vector<std::int32_t> pos_idx;  // empty until assign_positions

    TokenScheme scheme = TokenScheme::T0;
    std::size_t unk_count = 0;

    std::size_t size() const { return token_ids.size(); }
    bool has_positions() const { return pos_idx.size() == token_ids.size(); }
    /// Number of leading question tokens.
    std::size_t question_length() const;
};

struct LinearizeOptions {
    std::size_t context_limit = 512;
};

/// Layout: question tokens, SEP, then the table side.
///   T0: header cells then data rows, all cells joined with SEP
///   T1: header cells, then per data row `[ROW r]` and per cell `[CELL]` + content
///   T2: `[TAB]`, per column `[COL]` + header content, per data row `[ROW]` and per cell `[CELL]` + content
/// Throws TruncationError when the result would exceed the context limit.
EncodedInput linearize(std::string_view question, const Table& table, TokenScheme scheme,
                       const LinearizeOptions& opts = {});

/// TPE: global index. CPE: restart at 0 at index 0, at every structural or
/// boundary token and at each cell's first content token.
EncodedInput assign_positions(EncodedInput enc, PositionScheme scheme);

struct TableDims {
    std::size_t rows = 0;
    std::size_t cols = 0;
};

/// Recovers table dimensions from (roles, row_idx, col_idx) alone.
TableDims reconstruct_dims(const EncodedInput& enc);

/// Per-token TSV: index, symbol, role, row, col, cell_ord, segment, pos.
std::string encoding_to_tsv(const EncodedInput& enc);

}  // namespace tabenc
