#include "tabenc/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

#include "tabenc/attention.hpp"
#include "tabenc/mask.hpp"
#include "tabenc/rng.hpp"

namespace tabenc {

namespace {

constexpr std::size_t kQuestionTokens = 2;  // "select c1"

using Clock = std::chrono::steady_clock;

// Runs f enough times that one measurement spans at least 100 timer ticks,
// so the clock resolution stays below 1% of what is measured.
template <typename F>
double time_ms(F&& f) {
    const auto tick = std::chrono::duration<double, std::milli>(Clock::duration(1)).count();
    std::size_t reps = 1;
    while (true) {
        const auto t0 = Clock::now();
        for (std::size_t r = 0; r < reps; ++r) f();
        const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
        if (ms >= 100.0 * tick || reps >= (std::size_t{1} << 20)) return ms / static_cast<double>(reps);
        reps *= 2;
    }
}

double median(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace

EncodedInput bench_input(std::size_t length, const BenchOptions& opts) {
    const std::size_t c = opts.n_cols;
    if (c == 0 || opts.cell_digits == 0) throw ConfigError("bench table needs columns and non-empty cells");
    // question + SEP + [TAB] + C x ([COL] cK) ; each data row: [ROW] + C x ([CELL] + digits)
    const std::size_t fixed = kQuestionTokens + 1 + 1 + 2 * c;
    const std::size_t per_row = 1 + c * (1 + opts.cell_digits);
    if (length < fixed + 1 + 2 * c) throw ConfigError("bench length " + std::to_string(length) + " is too short");
    const std::size_t rows = std::max<std::size_t>(1, (length - fixed + per_row / 2) / per_row);
    const std::size_t digits = length - fixed - rows * (1 + c);
    if (digits < rows * c) throw ConfigError("bench length " + std::to_string(length) + " is too short");

    Rng rng = derive_rng(Seed{opts.seed}, "bench", length);
    std::vector<Row> data(rows, Row(c));
    const std::size_t n_cells = rows * c;
    for (std::size_t x = 0; x < n_cells; ++x) {
        const std::size_t w = digits / n_cells + (x < digits % n_cells ? 1 : 0);
        std::string s(w, '0');
        for (auto& ch : s) ch = static_cast<char>('0' + rng.uniform_int(0, 9));
        data[x / c][x % c] = std::move(s);
    }
    Table t(default_headers(c), std::move(data));
    auto enc = linearize("select c1", t, TokenScheme::T2, LinearizeOptions{length});
    if (enc.size() != length) throw RuntimeFailure("bench table landed on length " + std::to_string(enc.size()));
    return enc;
}

std::vector<BenchRow> bench_attention(const std::vector<std::size_t>& lengths, MaskScheme scheme,
                                      const BenchOptions& opts) {
    if (opts.trials == 0) throw ConfigError("bench needs at least one trial");
    std::vector<BenchRow> out;
    for (std::size_t len : lengths) {
        const auto enc = bench_input(len, opts);
        const auto mask = build_mask(enc, scheme);
        const auto blocks = export_blocks(mask);

        Rng rng = derive_rng(Seed{opts.seed}, "bench-qkv", len);
        const auto n = static_cast<Eigen::Index>(len), d = static_cast<Eigen::Index>(opts.head_dim);
        Mat<float> q(n, d), k(n, d), v(n, d), dout(n, d);
        for (auto* m : {&q, &k, &v, &dout})
            for (Eigen::Index x = 0; x < m->size(); ++x) m->data()[x] = static_cast<float>(rng.normal());
        AttentionInput<float> in{q, k, v, &mask.dense, nullptr, 1.0f / std::sqrt(static_cast<float>(d))};

        const auto fwd_dense = attn_dense(in);
        const auto fwd_sparse = attn_block_sparse<float>(in, blocks);
        std::vector<double> df, sf, db, sb;
        for (std::size_t t = 0; t < opts.trials; ++t) {
            df.push_back(time_ms([&] { (void)attn_dense(in); }));
            sf.push_back(time_ms([&] { (void)attn_block_sparse<float>(in, blocks); }));
            db.push_back(time_ms([&] { (void)attn_backward<float>(in, fwd_dense, dout); }));
            sb.push_back(time_ms([&] { (void)attn_backward_block_sparse<float>(in, blocks, fwd_sparse, dout); }));
        }
        for (int dir = 0; dir < 2; ++dir) {
            BenchRow r;
            r.length = len;
            r.scheme = scheme;
            r.dir = dir == 0 ? "fwd" : "bwd";
            r.dense_ms = median(dir == 0 ? df : db);
            r.sparse_ms = median(dir == 0 ? sf : sb);
            r.speedup = r.dense_ms / r.sparse_ms;
            out.push_back(std::move(r));
        }
    }
    return out;
}

std::string bench_to_csv(const std::vector<BenchRow>& rows) {
    std::string s = "length,scheme,dir,dense_ms,sparse_ms,speedup\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%s,%s,%.4f,%.4f,%.3f\n", r.length, to_string(r.scheme).c_str(),
                      r.dir.c_str(), r.dense_ms, r.sparse_ms, r.speedup);
        s += buf;
    }
    return s;
}

}  // namespace tabenc
