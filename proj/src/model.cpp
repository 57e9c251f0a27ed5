#include "tabenc/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <iostream>
#include <numeric>

#include "json.hpp"
#include "tabenc/json_io.hpp"
#include "tabenc/rng.hpp"
#include "tabenc/sqlexec.hpp"
#include "tabenc/vocab.hpp"

namespace tabenc {

using nlohmann::json;
using MatF = Mat<float>;

// ---------------------------------------------------------------- config

void ModelConfig::validate() const {
    auto bad = [](const std::string& m) { throw ConfigError("model config: " + m); };
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) bad("d_model must be a positive multiple of n_heads");
    if (n_enc_layers == 0 || n_dec_layers == 0) bad("need at least one encoder and one decoder layer");
    if (ffn_dim == 0) bad("ffn_dim must be positive");
    if (max_positions < context_length) bad("max_positions must be >= context_length");
    if (max_positions < max_answer_tokens) bad("max_positions must be >= max_answer_tokens");
    if (vocab_size != 0 && vocab_size != Vocabulary::instance().size()) bad("vocab_size does not match the vocabulary");
    if (batch_size == 0) bad("batch_size must be positive");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) bad("learning_rate must be >= 0");
    if (eval_every == 0) bad("eval_every must be positive");
    if (!(eval_fraction >= 0.0 && eval_fraction < 1.0)) bad("eval_fraction must be in [0, 1)");
    if (max_answer_tokens == 0) bad("max_answer_tokens must be positive");
    factor.validate();
}

ModelConfig model_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("model config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("model config must be a JSON object");
    ModelConfig c;
    c.vocab_size = Vocabulary::instance().size();
    try {
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string& k = it.key();
            const json& v = it.value();
            if (k == "d_model") c.d_model = v.get<std::size_t>();
            else if (k == "n_heads") c.n_heads = v.get<std::size_t>();
            else if (k == "n_enc_layers") c.n_enc_layers = v.get<std::size_t>();
            else if (k == "n_dec_layers") c.n_dec_layers = v.get<std::size_t>();
            else if (k == "ffn_dim") c.ffn_dim = v.get<std::size_t>();
            else if (k == "max_positions") c.max_positions = v.get<std::size_t>();
            else if (k == "context_length") c.context_length = v.get<std::size_t>();
            else if (k == "vocab_size") c.vocab_size = v.get<std::size_t>();
            else if (k == "factor") c.factor = parse_factor_label(v.get<std::string>());
            else if (k == "steps") c.steps = v.get<std::size_t>();
            else if (k == "batch_size") c.batch_size = v.get<std::size_t>();
            else if (k == "learning_rate") c.learning_rate = v.get<double>();
            else if (k == "patience") c.patience = v.get<std::size_t>();
            else if (k == "eval_every") c.eval_every = v.get<std::size_t>();
            else if (k == "eval_fraction") c.eval_fraction = v.get<double>();
            else if (k == "eval_max") c.eval_max = v.get<std::size_t>();
            else if (k == "warmup_steps") c.warmup_steps = v.get<std::size_t>();
            else if (k == "clip_norm") c.clip_norm = v.get<double>();
            else if (k == "target_da") c.target_da = v.get<double>();
            else if (k == "max_answer_tokens") c.max_answer_tokens = v.get<std::size_t>();
            else if (k == "seed") c.seed = v.get<std::uint64_t>();
            else throw ConfigError("model config: unknown field '" + k + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

std::string model_config_to_json(const ModelConfig& c) {
    json j = json::object();
    j["d_model"] = c.d_model;
    j["n_heads"] = c.n_heads;
    j["n_enc_layers"] = c.n_enc_layers;
    j["n_dec_layers"] = c.n_dec_layers;
    j["ffn_dim"] = c.ffn_dim;
    j["max_positions"] = c.max_positions;
    j["context_length"] = c.context_length;
    j["vocab_size"] = c.vocab_size ? c.vocab_size : Vocabulary::instance().size();
    j["factor"] = c.factor.label();
    j["steps"] = c.steps;
    j["batch_size"] = c.batch_size;
    j["learning_rate"] = c.learning_rate;
    j["patience"] = c.patience;
    j["eval_every"] = c.eval_every;
    j["eval_fraction"] = c.eval_fraction;
    j["eval_max"] = c.eval_max;
    j["warmup_steps"] = c.warmup_steps;
    j["clip_norm"] = c.clip_norm;
    j["target_da"] = c.target_da;
    j["max_answer_tokens"] = c.max_answer_tokens;
    j["seed"] = c.seed;
    return j.dump(2) + "\n";
}

PreparedExample prepare_example(const QAExample& ex, const ModelConfig& cfg) {
    PreparedExample p;
    p.enc = assign_positions(linearize(ex.query, ex.table, cfg.factor.tokens, LinearizeOptions{cfg.context_length}),
                             cfg.factor.pe);
    if (cfg.factor.mask != MaskScheme::M0) p.mask = build_mask(p.enc, cfg.factor.mask).dense;
    if (cfg.factor.bias == BiasScheme::B1) p.rel = build_bias_map(p.enc);
    p.target = encode_answer(ex.answer);
    if (p.target.size() > cfg.max_answer_tokens)
        throw InputError("answer needs " + std::to_string(p.target.size()) + " decoder tokens, limit is " +
                         std::to_string(cfg.max_answer_tokens));
    return p;
}

// ---------------------------------------------------------------- network pieces

namespace {

struct Param {
    std::string name;
    MatF w, g, m, v;
};

void init_normal(MatF& w, Rng& rng, double std) {
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<float>(rng.normal() * std);
}

struct Linear {
    Param* W = nullptr;
    Param* b = nullptr;

    void forward(const MatF& x, MatF& y) const {
        y.noalias() = x * W->w;
        y.rowwise() += b->w.row(0);
    }
    // dx may be null when the input gradient is not needed.
    void backward(const MatF& x, const MatF& dy, MatF* dx) const {
        W->g.noalias() += x.transpose() * dy;
        b->g.row(0) += dy.colwise().sum();
        if (dx) dx->noalias() = dy * W->w.transpose();
    }
};

struct LNCache {
    MatF xhat;
    std::vector<float> rstd;
};

struct LayerNorm {
    Param* gamma = nullptr;
    Param* beta = nullptr;

    void forward(const MatF& x, MatF& y, LNCache& c) const {
        const Eigen::Index n = x.rows(), d = x.cols();
        c.xhat.resize(n, d);
        c.rstd.resize(static_cast<std::size_t>(n));
        y.resize(n, d);
        for (Eigen::Index i = 0; i < n; ++i) {
            const float mean = x.row(i).mean();
            const float var = (x.row(i).array() - mean).square().mean();
            const float r = 1.0f / std::sqrt(var + 1e-5f);
            c.rstd[static_cast<std::size_t>(i)] = r;
            c.xhat.row(i) = (x.row(i).array() - mean) * r;
            y.row(i) = c.xhat.row(i).cwiseProduct(gamma->w.row(0)) + beta->w.row(0);
        }
    }
    void backward(const MatF& dy, const LNCache& c, MatF& dx) const {
        const Eigen::Index n = dy.rows(), d = dy.cols();
        gamma->g.row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
        beta->g.row(0) += dy.colwise().sum();
        dx.resize(n, d);
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::Array<float, 1, Eigen::Dynamic> dxh = dy.row(i).array() * gamma->w.row(0).array();
            const float m1 = dxh.mean();
            const float m2 = (dxh * c.xhat.row(i).array()).mean();
            dx.row(i) = (c.rstd[static_cast<std::size_t>(i)] * (dxh - m1 - c.xhat.row(i).array() * m2)).matrix();
        }
    }
};

struct FFNCache {
    MatF x, h;  // input and post-ReLU hidden
};

struct FeedForward {
    Linear l1, l2;

    void forward(const MatF& x, MatF& y, FFNCache& c) const {
        c.x = x;
        l1.forward(x, c.h);
        c.h = c.h.cwiseMax(0.0f);
        l2.forward(c.h, y);
    }
    void backward(const MatF& dy, const FFNCache& c, MatF& dx) const {
        MatF dh;
        l2.backward(c.h, dy, &dh);
        dh = (c.h.array() > 0.0f).select(dh, 0.0f);
        l1.backward(c.x, dh, &dx);
    }
};

// One attention problem inside a packed batch: query rows [q_off, q_off+q_len)
// attend to key rows [k_off, k_off+k_len).
struct AttnSeg {
    std::size_t q_off, q_len, k_off, k_len;
    const BitMatrix* mask;
    const BiasRelationMap* rel;
};

struct MHACache {
    MatF xq, xkv, q, k, v, ctx;
    std::vector<AttentionOutput<float>> outs;  // per seg x head
    std::vector<MatF> biases;                  // per seg x head, empty without bias
};

struct MultiHead {
    Linear q, k, v, o;
    Param* bias = nullptr;  // n_heads x kNumBiasClasses, encoder self-attention under B1
    std::size_t heads = 1;

    AttentionInput<float> input(const MHACache& c, const AttnSeg& s, std::size_t h, const MatF* bias_mat) const {
        const auto dh = static_cast<Eigen::Index>(c.q.cols() / static_cast<Eigen::Index>(heads));
        const auto col = static_cast<Eigen::Index>(h) * dh;
        return AttentionInput<float>{
            c.q.block(static_cast<Eigen::Index>(s.q_off), col, static_cast<Eigen::Index>(s.q_len), dh),
            c.k.block(static_cast<Eigen::Index>(s.k_off), col, static_cast<Eigen::Index>(s.k_len), dh),
            c.v.block(static_cast<Eigen::Index>(s.k_off), col, static_cast<Eigen::Index>(s.k_len), dh),
            s.mask, bias_mat, 1.0f / std::sqrt(static_cast<float>(dh))};
    }

    void forward(const MatF& xq, const MatF& xkv, const std::vector<AttnSeg>& segs, MatF& y, MHACache& c) const {
        c.xq = xq;
        c.xkv = xkv;
        q.forward(xq, c.q);
        k.forward(xkv, c.k);
        v.forward(xkv, c.v);
        c.ctx = MatF::Zero(xq.rows(), xq.cols());
        c.outs.clear();
        c.biases.clear();
        const auto dh = static_cast<Eigen::Index>(xq.cols() / static_cast<Eigen::Index>(heads));
        for (const auto& s : segs) {
            for (std::size_t h = 0; h < heads; ++h) {
                const MatF* bm = nullptr;
                if (bias && s.rel) {
                    const float* vals = bias->w.data() + h * kNumBiasClasses;
                    c.biases.push_back(materialize_bias<float>(*s.rel, std::span<const float>(vals, kNumBiasClasses)));
                    bm = &c.biases.back();
                }
                auto out = attn_dense<float>(input(c, s, h, bm));
                c.ctx.block(static_cast<Eigen::Index>(s.q_off), static_cast<Eigen::Index>(h) * dh,
                            static_cast<Eigen::Index>(s.q_len), dh) = out.out;
                c.outs.push_back(std::move(out));
            }
        }
        o.forward(c.ctx, y);
    }

    // Returns dxq; adds the key/value input gradient to dxkv (same matrix for self-attention callers).
    void backward(const MatF& dy, const std::vector<AttnSeg>& segs, const MHACache& c, MatF& dxq, MatF& dxkv) const {
        MatF dctx;
        o.backward(c.ctx, dy, &dctx);
        MatF dq = MatF::Zero(c.q.rows(), c.q.cols());
        MatF dk = MatF::Zero(c.k.rows(), c.k.cols());
        MatF dv = MatF::Zero(c.v.rows(), c.v.cols());
        const auto dh = static_cast<Eigen::Index>(c.q.cols() / static_cast<Eigen::Index>(heads));
        std::size_t idx = 0, bidx = 0;
        for (const auto& s : segs) {
            const auto qo = static_cast<Eigen::Index>(s.q_off), ql = static_cast<Eigen::Index>(s.q_len);
            const auto ko = static_cast<Eigen::Index>(s.k_off), kl = static_cast<Eigen::Index>(s.k_len);
            for (std::size_t h = 0; h < heads; ++h, ++idx) {
                const MatF* bm = (bias && s.rel) ? &c.biases[bidx++] : nullptr;
                const auto col = static_cast<Eigen::Index>(h) * dh;
                const MatF dout = dctx.block(qo, col, ql, dh);
                auto g = attn_backward<float>(input(c, s, h, bm), c.outs[idx], dout);
                dq.block(qo, col, ql, dh) = g.dq;
                dk.block(ko, col, kl, dh) += g.dk;
                dv.block(ko, col, kl, dh) += g.dv;
                if (bm) {
                    const auto cg = bias_class_gradient<float>(g.dbias, *s.rel);
                    for (std::size_t x = 0; x < kNumBiasClasses; ++x) bias->g.data()[h * kNumBiasClasses + x] += cg[x];
                }
            }
        }
        MatF tmp;
        q.backward(c.xq, dq, &dxq);
        k.backward(c.xkv, dk, &tmp);
        dxkv += tmp;
        v.backward(c.xkv, dv, &tmp);
        dxkv += tmp;
    }
};

struct EncLayerCache {
    LNCache ln1, ln2;
    MHACache att;
    FFNCache ffn;
};

struct DecLayerCache {
    LNCache ln1, ln2, ln3;
    MHACache self, cross;
    FFNCache ffn;
};

struct EncoderLayer {
    LayerNorm ln1, ln2;
    MultiHead att;
    FeedForward ffn;

    void forward(MatF& x, const std::vector<AttnSeg>& segs, EncLayerCache& c) const {
        MatF h, a;
        ln1.forward(x, h, c.ln1);
        att.forward(h, h, segs, a, c.att);
        x += a;
        ln2.forward(x, h, c.ln2);
        ffn.forward(h, a, c.ffn);
        x += a;
    }
    void backward(MatF& dx, const std::vector<AttnSeg>& segs, const EncLayerCache& c) const {
        MatF dh, dln;
        ffn.backward(dx, c.ffn, dh);
        ln2.backward(dh, c.ln2, dln);
        dx += dln;
        MatF dkv = MatF::Zero(dx.rows(), dx.cols());
        att.backward(dx, segs, c.att, dh, dkv);
        dh += dkv;
        ln1.backward(dh, c.ln1, dln);
        dx += dln;
    }
};

struct DecoderLayer {
    LayerNorm ln1, ln2, ln3;
    MultiHead self, cross;
    FeedForward ffn;

    void forward(MatF& y, const MatF& mem, const std::vector<AttnSeg>& self_segs,
                 const std::vector<AttnSeg>& cross_segs, DecLayerCache& c) const {
        MatF h, a;
        ln1.forward(y, h, c.ln1);
        self.forward(h, h, self_segs, a, c.self);
        y += a;
        ln2.forward(y, h, c.ln2);
        cross.forward(h, mem, cross_segs, a, c.cross);
        y += a;
        ln3.forward(y, h, c.ln3);
        ffn.forward(h, a, c.ffn);
        y += a;
    }
    void backward(MatF& dy, MatF& dmem, const std::vector<AttnSeg>& self_segs, const std::vector<AttnSeg>& cross_segs,
                  const DecLayerCache& c) const {
        MatF dh, dln;
        ffn.backward(dy, c.ffn, dh);
        ln3.backward(dh, c.ln3, dln);
        dy += dln;
        cross.backward(dy, cross_segs, c.cross, dh, dmem);
        ln2.backward(dh, c.ln2, dln);
        dy += dln;
        MatF dkv = MatF::Zero(dy.rows(), dy.cols());
        self.backward(dy, self_segs, c.self, dh, dkv);
        dh += dkv;
        ln1.backward(dh, c.ln1, dln);
        dy += dln;
    }
};

constexpr std::size_t kRowSlots = Vocabulary::kMaxIndexedRows + 2;  // 0 none, 1 header, r + 1 data row r
constexpr std::size_t kColSlots = Vocabulary::kMaxIndexedRows + 1;  // 0 none, c for column c

std::size_t row_slot(std::int32_t r) {
    if (r == kHeaderRow) return 1;
    if (r <= 0) return 0;
    if (static_cast<std::size_t>(r) + 1 >= kRowSlots)
        throw ConfigError("row index " + std::to_string(r) + " exceeds the row embedding table");
    return static_cast<std::size_t>(r) + 1;
}

std::size_t col_slot(std::int32_t c) {
    if (c <= 0) return 0;
    if (static_cast<std::size_t>(c) >= kColSlots)
        throw ConfigError("column index " + std::to_string(c) + " exceeds the column embedding table");
    return static_cast<std::size_t>(c);
}

}  // namespace

// ---------------------------------------------------------------- model

struct Seq2Seq::Impl {
    ModelConfig cfg;
    std::deque<Param> params;  // stable addresses, creation order = checkpoint order
    Param *tok = nullptr, *enc_pos = nullptr, *seg = nullptr, *row = nullptr, *col = nullptr, *dec_pos = nullptr;
    std::vector<EncoderLayer> enc;
    std::vector<DecoderLayer> dec;
    LayerNorm enc_ln, dec_ln;
    Linear out;
    std::size_t adam_t = 0;

    Param* add(const std::string& name, std::size_t r, std::size_t c) {
        Param& p = params.emplace_back();
        p.name = name;
        p.w = MatF::Zero(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        p.g = p.m = p.v = p.w;
        return &p;
    }
    Linear linear(const std::string& name, std::size_t in, std::size_t outd) {
        return Linear{add(name + ".w", in, outd), add(name + ".b", 1, outd)};
    }
    LayerNorm layer_norm(const std::string& name) {
        LayerNorm ln{add(name + ".g", 1, cfg.d_model), add(name + ".b", 1, cfg.d_model)};
        ln.gamma->w.setOnes();
        return ln;
    }
    MultiHead multi_head(const std::string& name, bool with_bias) {
        const std::size_t d = cfg.d_model;
        MultiHead m{linear(name + ".q", d, d), linear(name + ".k", d, d), linear(name + ".v", d, d),
                    linear(name + ".o", d, d), nullptr, cfg.n_heads};
        if (with_bias) m.bias = add(name + ".bias", cfg.n_heads, kNumBiasClasses);
        return m;
    }
    FeedForward feed_forward(const std::string& name) {
        return FeedForward{linear(name + ".fc1", cfg.d_model, cfg.ffn_dim), linear(name + ".fc2", cfg.ffn_dim, cfg.d_model)};
    }

    explicit Impl(ModelConfig c) : cfg(std::move(c)) {
        if (cfg.vocab_size == 0) cfg.vocab_size = Vocabulary::instance().size();
        cfg.validate();
        const std::size_t d = cfg.d_model;
        const bool e1 = cfg.factor.emb == EmbeddingScheme::E1;
        const bool b1 = cfg.factor.bias == BiasScheme::B1;
        tok = add("tok_emb", cfg.vocab_size, d);
        enc_pos = add("enc_pos", cfg.max_positions, d);
        seg = add("seg_emb", 2, d);
        if (e1) {
            row = add("row_emb", kRowSlots, d);
            col = add("col_emb", kColSlots, d);
        }
        dec_pos = add("dec_pos", cfg.max_positions, d);
        for (std::size_t l = 0; l < cfg.n_enc_layers; ++l) {
            const std::string n = "enc." + std::to_string(l);
            enc.push_back(EncoderLayer{layer_norm(n + ".ln1"), layer_norm(n + ".ln2"), multi_head(n + ".att", b1),
                                       feed_forward(n + ".ffn")});
        }
        for (std::size_t l = 0; l < cfg.n_dec_layers; ++l) {
            const std::string n = "dec." + std::to_string(l);
            dec.push_back(DecoderLayer{layer_norm(n + ".ln1"), layer_norm(n + ".ln2"), layer_norm(n + ".ln3"),
                                       multi_head(n + ".self", false), multi_head(n + ".cross", false),
                                       feed_forward(n + ".ffn")});
        }
        enc_ln = layer_norm("enc.ln");
        dec_ln = layer_norm("dec.ln");
        out = linear("out", d, cfg.vocab_size);

        Rng rng = derive_rng(Seed{cfg.seed}, "init", 0);
        const double resid = 0.02 / std::sqrt(2.0 * static_cast<double>(cfg.n_enc_layers + cfg.n_dec_layers));
        for (auto& p : params) {
            const bool is_matrix = p.name.size() > 2 && p.name.compare(p.name.size() - 2, 2, ".w") == 0;
            const bool is_emb = p.name.find("_emb") != std::string::npos || p.name.find("_pos") != std::string::npos;
            if (is_emb) {
                init_normal(p.w, rng, 0.02);
            } else if (is_matrix) {
                const bool residual_out = p.name.find(".o.w") != std::string::npos ||
                                          p.name.find(".fc2.w") != std::string::npos;
                init_normal(p.w, rng, residual_out ? resid : 0.02);
            }
        }
    }

    // Packs a batch of encoder inputs; returns per-example segments.
    MatF embed_encoder(const std::vector<const PreparedExample*>& batch, std::vector<AttnSeg>& segs) const {
        std::size_t n = 0;
        for (const auto* ex : batch) n += ex->enc.size();
        MatF x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cfg.d_model));
        std::size_t off = 0;
        segs.clear();
        for (const auto* ex : batch) {
            const auto& e = ex->enc;
            if (!e.has_positions()) throw ContractViolation("encoder input has no positions assigned");
            for (std::size_t i = 0; i < e.size(); ++i) {
                const auto pos = static_cast<std::size_t>(e.pos_idx[i]);
                if (pos >= cfg.max_positions)
                    throw ConfigError("position " + std::to_string(pos) + " >= max_positions " +
                                      std::to_string(cfg.max_positions));
                auto r = x.row(static_cast<Eigen::Index>(off + i));
                r = tok->w.row(e.token_ids[i]) + enc_pos->w.row(static_cast<Eigen::Index>(pos)) +
                    seg->w.row(e.segment[i]);
                if (row) {
                    r += row->w.row(static_cast<Eigen::Index>(row_slot(e.row_idx[i])));
                    r += col->w.row(static_cast<Eigen::Index>(col_slot(e.col_idx[i])));
                }
            }
            segs.push_back(AttnSeg{off, e.size(), off, e.size(), ex->mask.rows() ? &ex->mask : nullptr,
                                   ex->rel.length ? &ex->rel : nullptr});
            off += e.size();
        }
        return x;
    }

    void embed_encoder_backward(const std::vector<const PreparedExample*>& batch, const MatF& dx) {
        std::size_t off = 0;
        for (const auto* ex : batch) {
            const auto& e = ex->enc;
            for (std::size_t i = 0; i < e.size(); ++i) {
                const auto g = dx.row(static_cast<Eigen::Index>(off + i));
                tok->g.row(e.token_ids[i]) += g;
                enc_pos->g.row(e.pos_idx[i]) += g;
                seg->g.row(e.segment[i]) += g;
                if (row) {
                    row->g.row(static_cast<Eigen::Index>(row_slot(e.row_idx[i]))) += g;
                    col->g.row(static_cast<Eigen::Index>(col_slot(e.col_idx[i]))) += g;
                }
            }
            off += e.size();
        }
    }

    MatF run_encoder(MatF x, const std::vector<AttnSeg>& segs, std::vector<EncLayerCache>& caches, LNCache& fin) const {
        caches.resize(enc.size());
        for (std::size_t l = 0; l < enc.size(); ++l) enc[l].forward(x, segs, caches[l]);
        MatF y;
        enc_ln.forward(x, y, fin);
        return y;
    }

    struct DecBatch {
        std::vector<std::vector<TokenId>> inputs;
        std::vector<BitMatrix> causal;
        std::vector<AttnSeg> self_segs, cross_segs;
    };

    MatF embed_decoder(DecBatch& db, const std::vector<AttnSeg>& enc_segs) const {
        std::size_t n = 0;
        for (const auto& in : db.inputs) n += in.size();
        MatF y(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cfg.d_model));
        db.causal.clear();
        db.causal.reserve(db.inputs.size());
        db.self_segs.clear();
        db.cross_segs.clear();
        std::size_t off = 0;
        for (std::size_t b = 0; b < db.inputs.size(); ++b) {
            const auto& in = db.inputs[b];
            if (in.size() > cfg.max_positions) throw ConfigError("decoder sequence exceeds max_positions");
            for (std::size_t t = 0; t < in.size(); ++t)
                y.row(static_cast<Eigen::Index>(off + t)) =
                    tok->w.row(in[t]) + dec_pos->w.row(static_cast<Eigen::Index>(t));
            db.causal.push_back(causal_mask(in.size()));
            db.self_segs.push_back(AttnSeg{off, in.size(), off, in.size(), &db.causal.back(), nullptr});
            db.cross_segs.push_back(
                AttnSeg{off, in.size(), enc_segs[b].q_off, enc_segs[b].q_len, nullptr, nullptr});
            off += in.size();
        }
        return y;
    }

    MatF run_decoder(MatF y, const MatF& mem, const DecBatch& db, std::vector<DecLayerCache>& caches, LNCache& fin,
                     MatF& hidden) const {
        caches.resize(dec.size());
        for (std::size_t l = 0; l < dec.size(); ++l) dec[l].forward(y, mem, db.self_segs, db.cross_segs, caches[l]);
        dec_ln.forward(y, hidden, fin);
        MatF logits;
        out.forward(hidden, logits);
        return logits;
    }

    double loss(const std::vector<const PreparedExample*>& batch, bool backward) {
        std::vector<AttnSeg> segs;
        MatF x = embed_encoder(batch, segs);
        std::vector<EncLayerCache> enc_caches;
        LNCache enc_fin;
        const MatF mem = run_encoder(x, segs, enc_caches, enc_fin);

        DecBatch db;
        std::vector<TokenId> targets;
        for (const auto* ex : batch) {
            std::vector<TokenId> in{Vocabulary::instance().bos()};
            in.insert(in.end(), ex->target.begin(), ex->target.end() - 1);
            db.inputs.push_back(std::move(in));
            targets.insert(targets.end(), ex->target.begin(), ex->target.end());
        }
        MatF y = embed_decoder(db, segs);
        std::vector<DecLayerCache> dec_caches;
        LNCache dec_fin;
        MatF hidden;
        MatF logits = run_decoder(y, mem, db, dec_caches, dec_fin, hidden);

        // softmax cross-entropy, logits become dlogits in place
        const auto n = static_cast<double>(targets.size());
        double total = 0.0;
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            auto r = logits.row(i).array();
            const float m = r.maxCoeff();
            r = (r - m).exp();
            const float s = r.sum();
            r /= s;
            const auto t = targets[static_cast<std::size_t>(i)];
            total -= std::log(std::max(static_cast<double>(r(t)), 1e-30));
            r(t) -= 1.0f;
        }
        const double mean = total / n;
        if (!backward) return mean;
        logits /= static_cast<float>(n);

        MatF dh, dy;
        out.backward(hidden, logits, &dh);
        dec_ln.backward(dh, dec_fin, dy);
        MatF dmem = MatF::Zero(mem.rows(), mem.cols());
        for (std::size_t l = dec.size(); l-- > 0;) dec[l].backward(dy, dmem, db.self_segs, db.cross_segs, dec_caches[l]);
        {
            // decoder embeddings
            std::size_t off = 0;
            for (const auto& in : db.inputs) {
                for (std::size_t t = 0; t < in.size(); ++t) {
                    const auto g = dy.row(static_cast<Eigen::Index>(off + t));
                    tok->g.row(in[t]) += g;
                    dec_pos->g.row(static_cast<Eigen::Index>(t)) += g;
                }
                off += in.size();
            }
        }
        MatF dx;
        enc_ln.backward(dmem, enc_fin, dx);
        for (std::size_t l = enc.size(); l-- > 0;) enc[l].backward(dx, segs, enc_caches[l]);
        embed_encoder_backward(batch, dx);
        return mean;
    }

    std::vector<TokenId> greedy(const PreparedExample& ex) const {
        std::vector<const PreparedExample*> batch{&ex};
        std::vector<AttnSeg> segs;
        std::vector<EncLayerCache> enc_caches;
        LNCache enc_fin;
        const MatF mem = run_encoder(embed_encoder(batch, segs), segs, enc_caches, enc_fin);
        const auto& vocab = Vocabulary::instance();
        std::vector<TokenId> outp;
        DecBatch db;
        db.inputs.push_back({vocab.bos()});
        std::vector<DecLayerCache> dec_caches;
        LNCache dec_fin;
        MatF hidden;
        while (outp.size() < cfg.max_answer_tokens) {
            MatF y = embed_decoder(db, segs);
            const MatF logits = run_decoder(y, mem, db, dec_caches, dec_fin, hidden);
            Eigen::Index best = 0;
            logits.row(logits.rows() - 1).maxCoeff(&best);
            const auto id = static_cast<TokenId>(best);
            outp.push_back(id);
            if (id == vocab.eos()) break;
            db.inputs[0].push_back(id);
        }
        return outp;
    }
};

Seq2Seq::Seq2Seq(ModelConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}
Seq2Seq::~Seq2Seq() = default;
Seq2Seq::Seq2Seq(Seq2Seq&&) noexcept = default;
Seq2Seq& Seq2Seq::operator=(Seq2Seq&&) noexcept = default;

const ModelConfig& Seq2Seq::config() const { return impl_->cfg; }

Mat<float> Seq2Seq::encode(const PreparedExample& ex) const {
    std::vector<const PreparedExample*> batch{&ex};
    std::vector<AttnSeg> segs;
    std::vector<EncLayerCache> caches;
    LNCache fin;
    return impl_->run_encoder(impl_->embed_encoder(batch, segs), segs, caches, fin);
}

Mat<float> Seq2Seq::encode(const EncodedInput& enc) const {
    const auto& f = impl_->cfg.factor;
    if (enc.scheme != f.tokens) throw ConfigError("encoded input uses " + to_string(enc.scheme) + ", model expects " +
                                                  to_string(f.tokens));
    PreparedExample p;
    p.enc = enc.has_positions() ? enc : assign_positions(enc, f.pe);
    if (f.mask != MaskScheme::M0) p.mask = build_mask(p.enc, f.mask).dense;
    if (f.bias == BiasScheme::B1) p.rel = build_bias_map(p.enc);
    return encode(p);
}

double Seq2Seq::loss(const std::vector<const PreparedExample*>& batch, bool backward) {
    if (batch.empty()) throw InputError("empty batch");
    return impl_->loss(batch, backward);
}

void Seq2Seq::zero_grad() {
    for (auto& p : impl_->params) p.g.setZero();
}

double Seq2Seq::clip_gradients(double max_norm) {
    double sq = 0.0;
    for (const auto& p : impl_->params) sq += static_cast<double>(p.g.squaredNorm());
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const auto s = static_cast<float>(max_norm / norm);
        for (auto& p : impl_->params) p.g *= s;
    }
    return norm;
}

void Seq2Seq::adam_step(double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const std::size_t t = ++impl_->adam_t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    const auto step = static_cast<float>(lr / c1);
    const auto rc2 = static_cast<float>(1.0 / std::sqrt(c2));
    for (auto& p : impl_->params) {
        p.m = static_cast<float>(b1) * p.m + static_cast<float>(1.0 - b1) * p.g;
        p.v = static_cast<float>(b2) * p.v + static_cast<float>(1.0 - b2) * p.g.cwiseAbs2();
        if (lr == 0.0) continue;
        p.w.array() -= step * p.m.array() / (p.v.array().sqrt() * rc2 + static_cast<float>(eps));
    }
}

std::vector<TokenId> Seq2Seq::greedy_decode(const PreparedExample& ex) const { return impl_->greedy(ex); }

std::vector<std::string> Seq2Seq::predict(const QAExample& ex) const {
    PreparedExample p = prepare_example(QAExample{ex.table, ex.query, {}}, impl_->cfg);
    return decode_answer(greedy_decode(p));
}

std::vector<Tensor> Seq2Seq::tensors() const {
    std::vector<Tensor> out;
    for (const auto& p : impl_->params) out.push_back(Tensor{p.name, p.w});
    return out;
}

std::vector<Tensor> Seq2Seq::gradients() const {
    std::vector<Tensor> out;
    for (const auto& p : impl_->params) out.push_back(Tensor{p.name, p.g});
    return out;
}

void Seq2Seq::load_tensors(const std::vector<Tensor>& ts) {
    if (ts.size() != impl_->params.size())
        throw InputError("checkpoint has " + std::to_string(ts.size()) + " tensors, model expects " +
                         std::to_string(impl_->params.size()));
    for (std::size_t i = 0; i < ts.size(); ++i) {
        auto& p = impl_->params[i];
        if (ts[i].name != p.name) throw InputError("checkpoint tensor '" + ts[i].name + "' where '" + p.name + "' expected");
        if (ts[i].w.rows() != p.w.rows() || ts[i].w.cols() != p.w.cols())
            throw InputError("checkpoint tensor '" + p.name + "' has the wrong shape");
        p.w = ts[i].w;
    }
}

std::size_t Seq2Seq::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : impl_->params) n += static_cast<std::size_t>(p.w.size());
    return n;
}

// ---------------------------------------------------------------- training

std::vector<std::vector<std::string>> predict_all(const Seq2Seq& model, const std::vector<QAExample>& data) {
    std::vector<std::vector<std::string>> out;
    out.reserve(data.size());
    for (const auto& ex : data) out.push_back(model.predict(ex));
    return out;
}

namespace {

double eval_da(const Seq2Seq& model, const std::vector<PreparedExample>& prepared, const std::vector<std::size_t>& idx,
               const std::vector<QAExample>& data) {
    if (idx.empty()) return 0.0;
    std::size_t ok = 0;
    for (auto i : idx)
        ok += sql::denotation_match(decode_answer(model.greedy_decode(prepared[i])), data[i].answer);
    return static_cast<double>(ok) / static_cast<double>(idx.size());
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

}  // namespace

TrainResult train(Seq2Seq& model, const std::vector<QAExample>& data, bool verbose) {
    const ModelConfig& cfg = model.config();
    if (data.empty()) throw InputError("training data is empty");
    std::vector<PreparedExample> prepared;
    prepared.reserve(data.size());
    for (const auto& ex : data) prepared.push_back(prepare_example(ex, cfg));

    // held-out split
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng = derive_rng(Seed{cfg.seed}, "split", 0);
    split_rng.shuffle(std::span<std::size_t>(order));
    std::size_t n_eval = std::min(cfg.eval_max, static_cast<std::size_t>(cfg.eval_fraction * static_cast<double>(data.size())));
    if (n_eval >= data.size()) n_eval = data.size() - 1;
    std::vector<std::size_t> eval_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_eval));
    std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_eval), order.end());
    std::sort(eval_idx.begin(), eval_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    if (eval_idx.empty()) eval_idx = train_idx;

    TrainResult res;
    res.trace_csv = "step,train_loss,eval_da\n";
    Rng batch_rng = derive_rng(Seed{cfg.seed}, "batches", 0);
    std::vector<std::size_t> epoch = train_idx;
    std::size_t cursor = epoch.size();

    std::vector<Tensor> best = model.tensors();
    res.best_da = -1.0;
    std::size_t since_best = 0;
    double window_loss = 0.0;
    std::size_t window_n = 0;
    double last_finite = 0.0;

    auto evaluate = [&](std::size_t step) {
        const double da = eval_da(model, prepared, eval_idx, data);
        res.trace_csv += std::to_string(step) + "," + fmt("%.6f", window_n ? window_loss / window_n : 0.0) + "," +
                         fmt("%.6f", da) + "\n";
        if (verbose)
            std::cerr << "step " << step << " loss " << (window_n ? window_loss / window_n : 0.0) << " eval_da " << da
                      << "\n";
        window_loss = 0.0;
        window_n = 0;
        if (da > res.best_da) {
            res.best_da = da;
            res.best_step = step;
            best = model.tensors();
            since_best = 0;
        } else {
            ++since_best;
        }
        return da;
    };

    evaluate(0);
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        std::vector<const PreparedExample*> batch;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            if (cursor == epoch.size()) {
                batch_rng.shuffle(std::span<std::size_t>(epoch));
                cursor = 0;
            }
            batch.push_back(&prepared[epoch[cursor++]]);
        }
        model.zero_grad();
        const double l = model.loss(batch, true);
        if (!std::isfinite(l))
            throw RuntimeFailure("training diverged at step " + std::to_string(step) + ": loss is " + fmt("%g", l) +
                                 " (last finite loss " + fmt("%.6f", last_finite) + ")");
        last_finite = l;
        res.step_losses.push_back(l);
        window_loss += l;
        ++window_n;
        model.clip_gradients(cfg.clip_norm);
        const double warm = cfg.warmup_steps ? std::min(1.0, static_cast<double>(step) / static_cast<double>(cfg.warmup_steps)) : 1.0;
        model.adam_step(cfg.learning_rate * warm);
        res.steps_run = step;

        if (step % cfg.eval_every == 0 || step == cfg.steps) {
            const double da = evaluate(step);
            if (cfg.target_da > 0.0 && da >= cfg.target_da) break;
            if (since_best >= cfg.patience) {
                res.early_stopped = true;
                break;
            }
        }
    }
    model.load_tensors(best);
    return res;
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[8] = {'T', 'A', 'B', 'E', 'N', 'C', 'K', '\0'};

void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
    const std::string& s;
    std::size_t pos = 0;
    void need(std::size_t n) const {
        if (pos + n > s.size()) throw InputError("checkpoint is truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string r = s.substr(pos, n);
        pos += n;
        return r;
    }
};

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const Seq2Seq& model, const std::string& trace_csv) {
    std::filesystem::create_directories(dir);
    std::string blob(kMagic, sizeof kMagic);
    put_u32(blob, kCheckpointVersion);
    const std::string cfg = model_config_to_json(model.config());
    put_u32(blob, static_cast<std::uint32_t>(cfg.size()));
    blob += cfg;
    const auto ts = model.tensors();
    put_u32(blob, static_cast<std::uint32_t>(ts.size()));
    for (const auto& t : ts) {
        put_u32(blob, static_cast<std::uint32_t>(t.name.size()));
        blob += t.name;
        put_u32(blob, static_cast<std::uint32_t>(t.w.rows()));
        put_u32(blob, static_cast<std::uint32_t>(t.w.cols()));
        for (Eigen::Index i = 0; i < t.w.size(); ++i) {
            std::uint32_t bits;
            const float f = t.w.data()[i];
            std::memcpy(&bits, &f, 4);
            put_u32(blob, bits);
        }
    }
    write_file_atomic(dir / "model.bin", blob);
    write_file_atomic(dir / "config.json", cfg);
    write_file_atomic(dir / "trace.csv", trace_csv);
}

Seq2Seq load_checkpoint(const std::filesystem::path& dir) {
    const std::string blob = read_text_file(dir / "model.bin");
    Reader r{blob};
    if (r.bytes(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) throw InputError("not a tabenc checkpoint");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw InputError("checkpoint version " + std::to_string(version) + " is not supported");
    Seq2Seq model(model_config_from_json(r.bytes(r.u32())));
    const std::uint32_t n = r.u32();
    std::vector<Tensor> ts;
    for (std::uint32_t k = 0; k < n; ++k) {
        Tensor t;
        t.name = r.bytes(r.u32());
        const std::uint32_t rows = r.u32(), cols = r.u32();
        t.w.resize(rows, cols);
        for (Eigen::Index i = 0; i < t.w.size(); ++i) {
            const std::uint32_t bits = r.u32();
            std::memcpy(t.w.data() + i, &bits, 4);
        }
        ts.push_back(std::move(t));
    }
    if (r.pos != blob.size()) throw InputError("checkpoint has trailing bytes");
    model.load_tensors(ts);
    return model;
}

}  // namespace tabenc
