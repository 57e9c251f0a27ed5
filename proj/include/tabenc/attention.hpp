#pragma once

#include <Eigen/Core>
#include <array>
#include <span>
#include <vector>

#include "tabenc/mask.hpp"

namespace tabenc {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Single-head scaled dot-product attention operands.
///
/// q is Lq x d, k and v are Lk x d. `allowed` (Lq x Lk) excludes pairs from
/// the softmax entirely; null means every pair is allowed. `bias` (Lq x Lk)
/// is added to the logits before the softmax.
template <typename S>
struct AttentionInput {
    Eigen::Ref<const Mat<S>> q;
    Eigen::Ref<const Mat<S>> k;
    Eigen::Ref<const Mat<S>> v;
    const BitMatrix* allowed = nullptr;
    const Mat<S>* bias = nullptr;
    S scale = S(1);
};

template <typename S>
struct AttentionOutput {
    Mat<S> out;
    // Softmax statistics over the allowed set: row max of the logits and the
    // sum of exp(logit - max). Backward recomputes probabilities from these.
    std::vector<S> row_max;
    std::vector<S> row_sum;
    Mat<S> weights;  // Lq x Lk, only filled on request (debug)
};

template <typename S>
struct AttentionGrads {
    Mat<S> dq, dk, dv;
    Mat<S> dbias;  // empty when the input carried no bias
};

/// Dense reference: softmax(scale * q k^T + bias, restricted to allowed) v.
/// Processes query rows in chunks; keep_weights materializes the full matrix.
template <typename S>
AttentionOutput<S> attn_dense(const AttentionInput<S>& in, bool keep_weights = false);

/// Block-sparse forward. Logits are only computed inside the rectangles,
/// which must tile `in.allowed` exactly. Two passes: max/sum, then weighted
/// accumulation. Parallel across query row ranges.
template <typename S>
AttentionOutput<S> attn_block_sparse(const AttentionInput<S>& in, std::span<const Block> blocks);

/// Analytic backward of attn_dense given the forward statistics.
template <typename S>
AttentionGrads<S> attn_backward(const AttentionInput<S>& in, const AttentionOutput<S>& fwd,
                                const Eigen::Ref<const Mat<S>>& dout);

/// Analytic backward restricted to the rectangles.
template <typename S>
AttentionGrads<S> attn_backward_block_sparse(const AttentionInput<S>& in, std::span<const Block> blocks,
                                             const AttentionOutput<S>& fwd, const Eigen::Ref<const Mat<S>>& dout);

/// bias[i][j] = class_values[rel(i, j)].
template <typename S>
Mat<S> materialize_bias(const BiasRelationMap& rel, std::span<const S> class_values);

/// Gradient of per-class scalars: sum of dbias over the pairs of each class.
template <typename S>
std::array<S, kNumBiasClasses> bias_class_gradient(const Mat<S>& dbias, const BiasRelationMap& rel);

/// Throws InputError for shape mismatches or non-finite inputs.
template <typename S>
void validate_attention_input(const AttentionInput<S>& in);

}  // namespace tabenc
