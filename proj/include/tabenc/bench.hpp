#pragma once

#include <string>
#include <vector>

#include "tabenc/core.hpp"
#include "tabenc/linearize.hpp"

namespace tabenc {

struct BenchRow {
    std::size_t length = 0;
    MaskScheme scheme = MaskScheme::M0;
    std::string dir;  // fwd | bwd
    double dense_ms = 0.0;
    double sparse_ms = 0.0;
    double speedup = 0.0;
};

struct BenchOptions {
    std::size_t trials = 20;
    std::size_t head_dim = 16;
    std::size_t n_cols = 8;
    std::size_t cell_digits = 15;  // typical cell width; cells are stretched to land on the exact length
    std::uint64_t seed = 7;
};

/// T2 encoding of a synthetic digit table whose sequence length is exactly `length`.
EncodedInput bench_input(std::size_t length, const BenchOptions& opts = {});

/// Median wall times of dense and block-sparse attention, forward and backward, per length.
std::vector<BenchRow> bench_attention(const std::vector<std::size_t>& lengths, MaskScheme scheme,
                                      const BenchOptions& opts = {});

/// length,scheme,dir,dense_ms,sparse_ms,speedup
std::string bench_to_csv(const std::vector<BenchRow>& rows);

}  // namespace tabenc
