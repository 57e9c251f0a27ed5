#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tabenc/core.hpp"
#include "tabenc/linearize.hpp"

namespace tabenc {

/// Row-major bit matrix; one bit per (query, key) pair.
class BitMatrix {
public:
    BitMatrix() = default;
    BitMatrix(std::size_t rows, std::size_t cols, bool value = false);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool get(std::size_t i, std::size_t j) const { return (words_[i * stride_ + (j >> 6)] >> (j & 63)) & 1u; }
    void set(std::size_t i, std::size_t j) { words_[i * stride_ + (j >> 6)] |= std::uint64_t{1} << (j & 63); }
    /// Sets columns [k0, k1) of row i.
    void set_range(std::size_t i, std::size_t k0, std::size_t k1);
    std::size_t count() const;
    std::size_t count_row(std::size_t i) const;
    const std::uint64_t* row_words(std::size_t i) const { return words_.data() + i * stride_; }
    std::size_t stride() const { return stride_; }

    /// Maximal runs [k0, k1) of set bits in row i.
    template <typename F>
    void for_each_run(std::size_t i, F&& f) const;

    friend bool operator==(const BitMatrix&, const BitMatrix&) = default;

private:
    std::size_t rows_ = 0, cols_ = 0, stride_ = 0;
    std::vector<std::uint64_t> words_;
};

/// Lower-triangular (causal) mask of size n.
BitMatrix causal_mask(std::size_t n);

/// Half-open rectangle [q0, q1) x [k0, k1) of allowed (query, key) pairs.
struct Block {
    std::size_t q0 = 0, q1 = 0, k0 = 0, k1 = 0;
    std::size_t area() const { return (q1 - q0) * (k1 - k0); }
    friend bool operator==(const Block&, const Block&) = default;
};

struct AttentionMask {
    std::size_t length = 0;
    MaskScheme scheme = MaskScheme::M0;
    BitMatrix dense;  // true = attention allowed
    std::vector<Block> blocks;

    bool allowed(std::size_t i, std::size_t j) const { return dense.get(i, j); }
};

/// Structural allow relation of the mask schemes, built from token groups.
/// Throws ConfigError when scheme needs T2 tokens and enc was not linearized with T2.
AttentionMask build_mask(const EncodedInput& enc, MaskScheme scheme);

/// Same relation evaluated pair by pair, no grouping shortcuts.
AttentionMask build_mask_bruteforce(const EncodedInput& enc, MaskScheme scheme);

/// The per-pair predicate behind build_mask_bruteforce.
bool mask_allows(const EncodedInput& enc, MaskScheme scheme, std::size_t i, std::size_t j);

/// Fraction of the L^2 pairs that are disallowed.
double sparsity(const AttentionMask& mask);
double sparsity(const BitMatrix& allowed);

/// Exact rectangle tiling of the allowed set: row runs merged across
/// consecutive identical rows, sorted by (q0, k0).
std::vector<Block> export_blocks(const BitMatrix& allowed);
inline std::vector<Block> export_blocks(const AttentionMask& mask) { return export_blocks(mask.dense); }

/// Text block format: "L=<len> scheme=<M> sparsity=<float>" then one "q0 q1 k0 k1" per line.
std::string blocks_to_text(const AttentionMask& mask);

// Relation classes for learnable attention biases. Ids follow this listing;
// classification tests them in the priority order documented in mask.cpp.
enum class BiasClass : std::uint8_t {
    Self,
    QuestionToQuestion,
    QuestionToCell,
    CellToQuestion,
    QuestionToHeader,
    HeaderToQuestion,
    SameRow,
    SameColumn,
    CellToColumnHeader,
    ColumnHeaderToCell,
    HeaderHeaderSameColumn,
    SameCell,
    Other,
};
inline constexpr std::size_t kNumBiasClasses = 13;

std::string to_string(BiasClass c);

struct BiasRelationMap {
    std::size_t length = 0;
    std::vector<std::uint8_t> rel;  // row-major L x L, values < kNumBiasClasses

    BiasClass at(std::size_t i, std::size_t j) const { return static_cast<BiasClass>(rel[i * length + j]); }
};

BiasClass classify_bias_pair(const EncodedInput& enc, std::size_t i, std::size_t j);
BiasRelationMap build_bias_map(const EncodedInput& enc);

// ---- implementation of the template member ----

template <typename F>
void BitMatrix::for_each_run(std::size_t i, F&& f) const {
    const std::uint64_t* w = row_words(i);
    std::size_t j = 0;
    while (j < cols_) {
        // find next set bit
        std::size_t wi = j >> 6;
        std::uint64_t word = w[wi] & (~std::uint64_t{0} << (j & 63));
        while (word == 0) {
            if (++wi >= stride_) return;
            word = w[wi];
        }
        const std::size_t start = (wi << 6) + static_cast<std::size_t>(__builtin_ctzll(word));
        if (start >= cols_) return;
        // find next clear bit
        std::uint64_t inv = ~w[wi] & (~std::uint64_t{0} << (start & 63));
        while (inv == 0) {
            if (++wi >= stride_) break;
            inv = ~w[wi];
        }
        std::size_t end = wi >= stride_ ? cols_ : (wi << 6) + static_cast<std::size_t>(__builtin_ctzll(inv));
        if (end > cols_) end = cols_;
        f(start, end);
        j = end;
    }
}

}  // namespace tabenc
