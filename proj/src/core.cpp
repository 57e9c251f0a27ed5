#include "tabenc/core.hpp"

#include <algorithm>

namespace tabenc {

Table::Table(Row headers, std::vector<Row> rows) : headers_(std::move(headers)), rows_(std::move(rows)) {
    if (headers_.empty()) throw InputError("table must have at least one column");
    if (rows_.empty()) throw InputError("table must have at least one data row");
    const auto check_cells = [](const Row& row, const char* what) {
        for (const auto& cell : row)
            if (cell.empty()) throw InputError(std::string("empty cell in ") + what);
    };
    check_cells(headers_, "header");
    for (std::size_t r = 0; r < rows_.size(); ++r) {
        if (rows_[r].size() != headers_.size())
            throw InputError("ragged table: row " + std::to_string(r + 1) + " has " +
                             std::to_string(rows_[r].size()) + " cells, expected " +
                             std::to_string(headers_.size()));
        check_cells(rows_[r], "data row");
    }
}

std::optional<std::size_t> Table::column_index(std::string_view name) const {
    auto it = std::find(headers_.begin(), headers_.end(), name);
    if (it == headers_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - headers_.begin());
}

Row default_headers(std::size_t n_cols) {
    Row h;
    h.reserve(n_cols);
    for (std::size_t c = 1; c <= n_cols; ++c) h.push_back("c" + std::to_string(c));
    return h;
}

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<E, N>& all, const char* what) {
    for (E e : all)
        if (to_string(e) == s) return e;
    throw ConfigError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

}  // namespace

std::string to_string(TokenScheme s) { return "T" + std::to_string(static_cast<int>(s)); }
std::string to_string(MaskScheme s) { return "M" + std::to_string(static_cast<int>(s)); }
std::string to_string(PositionScheme s) { return s == PositionScheme::TPE ? "TPE" : "CPE"; }
std::string to_string(BiasScheme s) { return "B" + std::to_string(static_cast<int>(s)); }
std::string to_string(EmbeddingScheme s) { return "E" + std::to_string(static_cast<int>(s)); }

TokenScheme parse_token_scheme(std::string_view s) { return parse_enum(s, kAllTokenSchemes, "token scheme"); }
MaskScheme parse_mask_scheme(std::string_view s) { return parse_enum(s, kAllMaskSchemes, "mask scheme"); }
PositionScheme parse_position_scheme(std::string_view s) {
    return parse_enum(s, kAllPositionSchemes, "position scheme");
}
BiasScheme parse_bias_scheme(std::string_view s) { return parse_enum(s, kAllBiasSchemes, "bias scheme"); }
EmbeddingScheme parse_embedding_scheme(std::string_view s) {
    return parse_enum(s, kAllEmbeddingSchemes, "embedding scheme");
}

void FactorConfig::validate() const {
    if (!legal())
        throw ConfigError("illegal factor combination (" + to_string(tokens) + ", " + to_string(mask) + "): " +
                          to_string(mask) + " requires T2 structural tokens");
}

std::string FactorConfig::label() const {
    return to_string(tokens) + "/" + to_string(mask) + "/" + to_string(pe) + "/" + to_string(bias) + "/" +
           to_string(emb);
}

FactorConfig parse_factor_label(std::string_view label) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        auto slash = label.find('/', start);
        parts.push_back(label.substr(start, slash - start));
        if (slash == std::string_view::npos) break;
        start = slash + 1;
    }
    if (parts.size() != 5) throw ConfigError("factor label must have 5 parts: '" + std::string(label) + "'");
    return FactorConfig{parse_token_scheme(parts[0]), parse_mask_scheme(parts[1]), parse_position_scheme(parts[2]),
                        parse_bias_scheme(parts[3]), parse_embedding_scheme(parts[4])};
}

std::vector<FactorConfig> full_factor_grid() {
    std::vector<FactorConfig> out;
    for (auto t : kAllTokenSchemes)
        for (auto m : kAllMaskSchemes)
            for (auto pe : kAllPositionSchemes)
                for (auto b : kAllBiasSchemes)
                    for (auto e : kAllEmbeddingSchemes) out.push_back({t, m, pe, b, e});
    return out;
}

}  // namespace tabenc
