#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tabenc {

// Error taxonomy. The CLI maps ValidationError subclasses to exit code 2 and
// everything else to exit code 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ValidationError : Error {
    using Error::Error;
};
struct InputError : ValidationError {
    using ValidationError::ValidationError;
};
struct ConfigError : ValidationError {
    using ValidationError::ValidationError;
};
struct ContractViolation : Error {
    using Error::Error;
};
struct RuntimeFailure : Error {
    using Error::Error;
};

using Row = std::vector<std::string>;

/// Rectangular grid of non-empty string cells with a header row.
class Table {
public:
    Table(Row headers, std::vector<Row> rows);

    const Row& headers() const { return headers_; }
    const std::vector<Row>& rows() const { return rows_; }
    std::size_t n_rows() const { return rows_.size(); }
    std::size_t n_cols() const { return headers_.size(); }
    const std::string& cell(std::size_t r, std::size_t c) const { return rows_[r][c]; }

    /// Index of a header name, if present.
    std::optional<std::size_t> column_index(std::string_view name) const;

    friend bool operator==(const Table&, const Table&) = default;

private:
    Row headers_;
    std::vector<Row> rows_;
};

/// Headers c1..cN.
Row default_headers(std::size_t n_cols);

struct QAExample {
    Table table;
    std::string query;
    std::vector<std::string> answer;
};

enum class TokenScheme : std::uint8_t { T0, T1, T2 };
enum class MaskScheme : std::uint8_t { M0, M1, M2, M3, M4, M5, M6 };
enum class PositionScheme : std::uint8_t { TPE, CPE };
enum class BiasScheme : std::uint8_t { B0, B1 };
enum class EmbeddingScheme : std::uint8_t { E0, E1 };

inline constexpr std::array kAllTokenSchemes{TokenScheme::T0, TokenScheme::T1, TokenScheme::T2};
inline constexpr std::array kAllMaskSchemes{MaskScheme::M0, MaskScheme::M1, MaskScheme::M2, MaskScheme::M3,
                                            MaskScheme::M4, MaskScheme::M5, MaskScheme::M6};
inline constexpr std::array kAllPositionSchemes{PositionScheme::TPE, PositionScheme::CPE};
inline constexpr std::array kAllBiasSchemes{BiasScheme::B0, BiasScheme::B1};
inline constexpr std::array kAllEmbeddingSchemes{EmbeddingScheme::E0, EmbeddingScheme::E1};

std::string to_string(TokenScheme s);
std::string to_string(MaskScheme s);
std::string to_string(PositionScheme s);
std::string to_string(BiasScheme s);
std::string to_string(EmbeddingScheme s);

// Parsers throw ConfigError on unknown names.
TokenScheme parse_token_scheme(std::string_view s);
MaskScheme parse_mask_scheme(std::string_view s);
PositionScheme parse_position_scheme(std::string_view s);
BiasScheme parse_bias_scheme(std::string_view s);
EmbeddingScheme parse_embedding_scheme(std::string_view s);

/// Masks M4..M6 reference [TAB]/[COL]/[ROW]/[CELL] tokens and need T2.
constexpr bool requires_structural_tokens(MaskScheme m) {
    return m == MaskScheme::M4 || m == MaskScheme::M5 || m == MaskScheme::M6;
}
constexpr bool is_legal(TokenScheme t, MaskScheme m) {
    return !requires_structural_tokens(m) || t == TokenScheme::T2;
}

/// One point of the T x M x PE x B x E grid.
struct FactorConfig {
    TokenScheme tokens = TokenScheme::T0;
    MaskScheme mask = MaskScheme::M0;
    PositionScheme pe = PositionScheme::TPE;
    BiasScheme bias = BiasScheme::B0;
    EmbeddingScheme emb = EmbeddingScheme::E0;

    bool legal() const { return is_legal(tokens, mask); }
    /// Throws ConfigError naming the illegal (T, M) pair.
    void validate() const;
    /// "T0/M1/TPE/B0/E1"
    std::string label() const;

    friend bool operator==(const FactorConfig&, const FactorConfig&) = default;
};

FactorConfig parse_factor_label(std::string_view label);

/// Every point of the raw grid, legal or not, in enum order.
std::vector<FactorConfig> full_factor_grid();

}  // namespace tabenc
