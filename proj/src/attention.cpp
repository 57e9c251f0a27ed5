#include "tabenc/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tabenc/parallel.hpp"

namespace tabenc {

namespace {

constexpr std::size_t kDenseChunk = 64;

template <typename S>
using MapMat = Eigen::Map<Mat<S>>;

template <typename S>
void apply_row_mask(const BitMatrix* allowed, std::size_t i, S* logits, std::size_t n) {
    if (!allowed) return;
    const S neg_inf = -std::numeric_limits<S>::infinity();
    for (std::size_t j = 0; j < n; ++j)
        if (!allowed->get(i, j)) logits[j] = neg_inf;
}

template <typename S>
void zero_masked(const BitMatrix* allowed, std::size_t i, S* p, std::size_t n) {
    if (!allowed) return;
    for (std::size_t j = 0; j < n; ++j)
        if (!allowed->get(i, j)) p[j] = S(0);
}

[[noreturn]] void empty_row(std::size_t i) {
    throw ContractViolation("attention row " + std::to_string(i) + " has no allowed key");
}

// Softmax probabilities of query rows [r0, r0 + n) given saved statistics.
template <typename S>
void dense_probs(const AttentionInput<S>& in, const std::vector<S>& row_max, const std::vector<S>& row_sum,
                 std::size_t r0, std::size_t n, Mat<S>& p) {
    const std::size_t lk = static_cast<std::size_t>(in.k.rows());
    p.noalias() = in.q.middleRows(r0, n) * in.k.transpose();
    p *= in.scale;
    if (in.bias) p += in.bias->middleRows(r0, n);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t i = r0 + r;
        S* row = p.data() + r * lk;
        Eigen::Map<Eigen::Array<S, 1, Eigen::Dynamic>> a(row, static_cast<Eigen::Index>(lk));
        a = (a - row_max[i]).exp() / row_sum[i];
        zero_masked(in.allowed, i, row, lk);
    }
}

// Visits each block clipped to query rows [a, e), cut into chunks of at most kDenseChunk rows.
template <typename F>
void for_each_tile(std::span<const Block> blocks, std::size_t a, std::size_t e, F&& f) {
    for (const auto& b : blocks) {
        const std::size_t qa = std::max(b.q0, a), qb = std::min(b.q1, e);
        for (std::size_t r = qa; r < qb; r += kDenseChunk) f(b, r, std::min(kDenseChunk, qb - r));
    }
}

}  // namespace

template <typename S>
void validate_attention_input(const AttentionInput<S>& in) {
    if (in.q.rows() < 1 || in.k.rows() < 1 || in.q.cols() < 1)
        throw InputError("attention needs L >= 1 and d >= 1");
    if (in.q.cols() != in.k.cols() || in.k.rows() != in.v.rows())
        throw InputError("attention shape mismatch: q " + std::to_string(in.q.rows()) + "x" +
                         std::to_string(in.q.cols()) + ", k " + std::to_string(in.k.rows()) + "x" +
                         std::to_string(in.k.cols()) + ", v " + std::to_string(in.v.rows()) + "x" +
                         std::to_string(in.v.cols()));
    const auto lq = static_cast<std::size_t>(in.q.rows()), lk = static_cast<std::size_t>(in.k.rows());
    if (in.allowed && (in.allowed->rows() != lq || in.allowed->cols() != lk))
        throw InputError("attention mask shape does not match q/k lengths");
    if (in.bias && (static_cast<std::size_t>(in.bias->rows()) != lq || static_cast<std::size_t>(in.bias->cols()) != lk))
        throw InputError("attention bias shape does not match q/k lengths");
    if (!in.q.allFinite() || !in.k.allFinite() || !in.v.allFinite())
        throw InputError("attention input contains NaN or Inf");
    if (in.bias && !in.bias->allFinite()) throw InputError("attention bias contains NaN or Inf");
}

template <typename S>
AttentionOutput<S> attn_dense(const AttentionInput<S>& in, bool keep_weights) {
    validate_attention_input(in);
    const auto lq = static_cast<std::size_t>(in.q.rows()), lk = static_cast<std::size_t>(in.k.rows());
    AttentionOutput<S> res;
    res.out = Mat<S>::Zero(in.q.rows(), in.v.cols());
    res.row_max.assign(lq, S(0));
    res.row_sum.assign(lq, S(0));
    if (keep_weights) res.weights = Mat<S>::Zero(in.q.rows(), in.k.rows());

    const std::size_t n_chunks = (lq + kDenseChunk - 1) / kDenseChunk;
    parallel_for(n_chunks, [&](std::size_t, std::size_t cb, std::size_t ce) {
        Mat<S> p;
        for (std::size_t c = cb; c < ce; ++c) {
            const std::size_t r0 = c * kDenseChunk, n = std::min(kDenseChunk, lq - r0);
            p.noalias() = in.q.middleRows(r0, n) * in.k.transpose();
            p *= in.scale;
            if (in.bias) p += in.bias->middleRows(r0, n);
            for (std::size_t r = 0; r < n; ++r) {
                const std::size_t i = r0 + r;
                S* row = p.data() + r * lk;
                apply_row_mask(in.allowed, i, row, lk);
                Eigen::Map<Eigen::Array<S, 1, Eigen::Dynamic>> a(row, static_cast<Eigen::Index>(lk));
                const S m = a.maxCoeff();
                if (!std::isfinite(m)) empty_row(i);
                a = (a - m).exp();
                zero_masked(in.allowed, i, row, lk);
                const S l = a.sum();
                a /= l;
                res.row_max[i] = m;
                res.row_sum[i] = l;
            }
            res.out.middleRows(r0, n).noalias() = p * in.v;
            if (keep_weights) res.weights.middleRows(r0, n) = p;
        }
    });
    return res;
}

template <typename S>
AttentionOutput<S> attn_block_sparse(const AttentionInput<S>& in, std::span<const Block> blocks) {
    validate_attention_input(in);
    const auto lq = static_cast<std::size_t>(in.q.rows());
    AttentionOutput<S> res;
    res.out = Mat<S>::Zero(in.q.rows(), in.v.cols());
    res.row_max.assign(lq, -std::numeric_limits<S>::infinity());
    res.row_sum.assign(lq, S(0));

    std::size_t max_area = 0;
    for (const auto& b : blocks) max_area = std::max(max_area, std::min(b.q1 - b.q0, kDenseChunk) * (b.k1 - b.k0));

    parallel_for(lq, [&](std::size_t, std::size_t a, std::size_t e) {
        std::vector<S> buf(max_area);
        auto tile = [&](const Block& b, std::size_t qa, std::size_t nq) {
            const std::size_t nk = b.k1 - b.k0;
            MapMat<S> s(buf.data(), static_cast<Eigen::Index>(nq), static_cast<Eigen::Index>(nk));
            s.noalias() = in.q.middleRows(qa, nq) * in.k.middleRows(b.k0, nk).transpose();
            s *= in.scale;
            if (in.bias) s += in.bias->block(qa, b.k0, nq, nk);
            return s;
        };
        // Pass 1: running max and normalizer per row.
        for_each_tile(blocks, a, e, [&](const Block& b, std::size_t qa, std::size_t nq) {
            auto s = tile(b, qa, nq);
            for (std::size_t r = 0; r < nq; ++r) {
                auto row = s.row(static_cast<Eigen::Index>(r)).array();
                const std::size_t i = qa + r;
                const S m_old = res.row_max[i];
                const S m_new = std::max(m_old, row.maxCoeff());
                const S carried = res.row_sum[i] == S(0) ? S(0) : res.row_sum[i] * std::exp(m_old - m_new);
                res.row_sum[i] = carried + (row - m_new).exp().sum();
                res.row_max[i] = m_new;
            }
        });
        for (std::size_t i = a; i < e; ++i)
            if (res.row_sum[i] == S(0)) empty_row(i);
        // Pass 2: normalized weights times values.
        for_each_tile(blocks, a, e, [&](const Block& b, std::size_t qa, std::size_t nq) {
            const std::size_t nk = b.k1 - b.k0;
            auto s = tile(b, qa, nq);
            for (std::size_t r = 0; r < nq; ++r) {
                auto row = s.row(static_cast<Eigen::Index>(r)).array();
                row = (row - res.row_max[qa + r]).exp() / res.row_sum[qa + r];
            }
            res.out.middleRows(qa, nq).noalias() += s * in.v.middleRows(b.k0, nk);
        });
    });
    return res;
}

template <typename S>
AttentionGrads<S> attn_backward(const AttentionInput<S>& in, const AttentionOutput<S>& fwd,
                                const Eigen::Ref<const Mat<S>>& dout) {
    validate_attention_input(in);
    if (dout.rows() != fwd.out.rows() || dout.cols() != fwd.out.cols())
        throw InputError("upstream gradient shape does not match attention output");
    const auto lq = static_cast<std::size_t>(in.q.rows());
    AttentionGrads<S> g;
    g.dq = Mat<S>::Zero(in.q.rows(), in.q.cols());
    g.dk = Mat<S>::Zero(in.k.rows(), in.k.cols());
    g.dv = Mat<S>::Zero(in.v.rows(), in.v.cols());
    if (in.bias) g.dbias = Mat<S>::Zero(in.q.rows(), in.k.rows());
    const Eigen::Matrix<S, Eigen::Dynamic, 1> delta = (dout.array() * fwd.out.array()).rowwise().sum();

    const std::size_t n_chunks = (lq + kDenseChunk - 1) / kDenseChunk;
    const std::size_t workers = std::min(worker_count(), std::max<std::size_t>(n_chunks, 1));
    std::vector<Mat<S>> dk_parts(workers), dv_parts(workers);
    parallel_for(n_chunks, [&](std::size_t w, std::size_t cb, std::size_t ce) {
        Mat<S>& dk = dk_parts[w];
        Mat<S>& dv = dv_parts[w];
        dk = Mat<S>::Zero(in.k.rows(), in.k.cols());
        dv = Mat<S>::Zero(in.v.rows(), in.v.cols());
        Mat<S> p, ds;
        for (std::size_t c = cb; c < ce; ++c) {
            const std::size_t r0 = c * kDenseChunk, n = std::min(kDenseChunk, lq - r0);
            dense_probs(in, fwd.row_max, fwd.row_sum, r0, n, p);
            const auto dout_c = dout.middleRows(r0, n);
            dv.noalias() += p.transpose() * dout_c;
            ds.noalias() = dout_c * in.v.transpose();
            ds = (p.array() * (ds.array().colwise() - delta.segment(r0, n).array())).matrix();
            g.dq.middleRows(r0, n).noalias() = in.scale * (ds * in.k);
            dk.noalias() += in.scale * (ds.transpose() * in.q.middleRows(r0, n));
            if (in.bias) g.dbias.middleRows(r0, n) = ds;
        }
    });
    for (std::size_t w = 0; w < workers; ++w) {
        if (dk_parts[w].size() == 0) continue;
        g.dk += dk_parts[w];
        g.dv += dv_parts[w];
    }
    return g;
}

template <typename S>
AttentionGrads<S> attn_backward_block_sparse(const AttentionInput<S>& in, std::span<const Block> blocks,
                                             const AttentionOutput<S>& fwd, const Eigen::Ref<const Mat<S>>& dout) {
    validate_attention_input(in);
    if (dout.rows() != fwd.out.rows() || dout.cols() != fwd.out.cols())
        throw InputError("upstream gradient shape does not match attention output");
    const auto lq = static_cast<std::size_t>(in.q.rows());
    AttentionGrads<S> g;
    g.dq = Mat<S>::Zero(in.q.rows(), in.q.cols());
    g.dk = Mat<S>::Zero(in.k.rows(), in.k.cols());
    g.dv = Mat<S>::Zero(in.v.rows(), in.v.cols());
    if (in.bias) g.dbias = Mat<S>::Zero(in.q.rows(), in.k.rows());
    const Eigen::Matrix<S, Eigen::Dynamic, 1> delta = (dout.array() * fwd.out.array()).rowwise().sum();

    std::size_t max_area = 0;
    for (const auto& b : blocks) max_area = std::max(max_area, std::min(b.q1 - b.q0, kDenseChunk) * (b.k1 - b.k0));
    const std::size_t workers = std::min(worker_count(), lq);
    std::vector<Mat<S>> dk_parts(workers), dv_parts(workers);
    parallel_for(lq, [&](std::size_t w, std::size_t a, std::size_t e) {
        Mat<S>& dk = dk_parts[w];
        Mat<S>& dv = dv_parts[w];
        dk = Mat<S>::Zero(in.k.rows(), in.k.cols());
        dv = Mat<S>::Zero(in.v.rows(), in.v.cols());
        std::vector<S> pbuf(max_area), dsbuf(max_area);
        for_each_tile(blocks, a, e, [&](const Block& b, std::size_t qa_, std::size_t nq_) {
            const std::size_t qa = qa_;
            const auto nq = static_cast<Eigen::Index>(nq_);
            const auto nk = static_cast<Eigen::Index>(b.k1 - b.k0);
            const auto qi = static_cast<Eigen::Index>(qa), ki = static_cast<Eigen::Index>(b.k0);
            MapMat<S> p(pbuf.data(), nq, nk), ds(dsbuf.data(), nq, nk);
            p.noalias() = in.q.middleRows(qi, nq) * in.k.middleRows(ki, nk).transpose();
            p *= in.scale;
            if (in.bias) p += in.bias->block(qi, ki, nq, nk);
            for (Eigen::Index r = 0; r < nq; ++r) {
                auto row = p.row(r).array();
                row = (row - fwd.row_max[qa + r]).exp() / fwd.row_sum[qa + r];
            }
            const auto dout_q = dout.middleRows(qi, nq);
            dv.middleRows(ki, nk).noalias() += p.transpose() * dout_q;
            ds.noalias() = dout_q * in.v.middleRows(ki, nk).transpose();
            ds = (p.array() * (ds.array().colwise() - delta.segment(qi, nq).array())).matrix();
            g.dq.middleRows(qi, nq).noalias() += in.scale * (ds * in.k.middleRows(ki, nk));
            dk.middleRows(ki, nk).noalias() += in.scale * (ds.transpose() * in.q.middleRows(qi, nq));
            if (in.bias) g.dbias.block(qi, ki, nq, nk) = ds;
        });
    });
    for (std::size_t w = 0; w < workers; ++w) {
        if (dk_parts[w].size() == 0) continue;
        g.dk += dk_parts[w];
        g.dv += dv_parts[w];
    }
    return g;
}

template <typename S>
Mat<S> materialize_bias(const BiasRelationMap& rel, std::span<const S> class_values) {
    if (class_values.size() != kNumBiasClasses) throw InputError("bias needs one value per relation class");
    const auto n = static_cast<Eigen::Index>(rel.length);
    Mat<S> b(n, n);
    for (std::size_t x = 0; x < rel.rel.size(); ++x) b.data()[x] = class_values[rel.rel[x]];
    return b;
}

template <typename S>
std::array<S, kNumBiasClasses> bias_class_gradient(const Mat<S>& dbias, const BiasRelationMap& rel) {
    std::array<S, kNumBiasClasses> g{};
    if (static_cast<std::size_t>(dbias.size()) != rel.rel.size())
        throw InputError("bias gradient shape does not match relation map");
    for (std::size_t x = 0; x < rel.rel.size(); ++x) g[rel.rel[x]] += dbias.data()[x];
    return g;
}

#define TABENC_INSTANTIATE(S)                                                                                    \
    template void validate_attention_input<S>(const AttentionInput<S>&);                                          \
    template AttentionOutput<S> attn_dense<S>(const AttentionInput<S>&, bool);                                    \
    template AttentionOutput<S> attn_block_sparse<S>(const AttentionInput<S>&, std::span<const Block>);           \
    template AttentionGrads<S> attn_backward<S>(const AttentionInput<S>&, const AttentionOutput<S>&,              \
                                                const Eigen::Ref<const Mat<S>>&);                                  \
    template AttentionGrads<S> attn_backward_block_sparse<S>(const AttentionInput<S>&, std::span<const Block>,    \
                                                             const AttentionOutput<S>&,                           \
                                                             const Eigen::Ref<const Mat<S>>&);                     \
    template Mat<S> materialize_bias<S>(const BiasRelationMap&, std::span<const S>);                              \
    template std::array<S, kNumBiasClasses> bias_class_gradient<S>(const Mat<S>&, const BiasRelationMap&);

TABENC_INSTANTIATE(float)
TABENC_INSTANTIATE(double)

#undef TABENC_INSTANTIATE

}  // namespace tabenc
