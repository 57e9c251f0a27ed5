#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "tabenc/attention.hpp"
#include "tabenc/core.hpp"
#include "tabenc/linearize.hpp"
#include "tabenc/mask.hpp"

namespace tabenc {

struct ModelConfig {
    std::size_t d_model = 128;
    std::size_t n_heads = 4;
    std::size_t n_enc_layers = 2;
    std::size_t n_dec_layers = 2;
    std::size_t ffn_dim = 512;
    std::size_t max_positions = 512;
    std::size_t context_length = 512;
    std::size_t vocab_size = 0;  // filled from Vocabulary
    FactorConfig factor{};

    // training
    std::size_t steps = 20000;
    std::size_t batch_size = 8;
    double learning_rate = 3e-4;
    std::size_t patience = 15;  // evaluations without improvement
    std::size_t eval_every = 500;
    double eval_fraction = 0.1;     // held-out share of the training file; 0 scores the training data itself
    std::size_t eval_max = 500;     // cap on held-out examples
    std::size_t warmup_steps = 200;
    double clip_norm = 1.0;
    double target_da = 0.0;  // stop once held-out DA reaches this (0 = off)
    std::size_t max_answer_tokens = 64;
    std::uint64_t seed = 1;

    /// Throws ConfigError.
    void validate() const;
};

ModelConfig model_config_from_json(const std::string& text);
std::string model_config_to_json(const ModelConfig& cfg);

/// Everything derived from one example that the network consumes.
struct PreparedExample {
    EncodedInput enc;
    BitMatrix mask;  // empty under M0
    BiasRelationMap rel;  // empty under B0
    std::vector<TokenId> target;  // answer ids ending in EOS
};

PreparedExample prepare_example(const QAExample& ex, const ModelConfig& cfg);

struct Tensor {
    std::string name;
    Mat<float> w;
};

/// Pre-LayerNorm transformer encoder-decoder with hand-written backward.
class Seq2Seq {
public:
    /// Weights drawn from cfg.seed.
    explicit Seq2Seq(ModelConfig cfg);
    ~Seq2Seq();
    Seq2Seq(Seq2Seq&&) noexcept;
    Seq2Seq& operator=(Seq2Seq&&) noexcept;

    const ModelConfig& config() const;

    /// Final encoder states, L x d_model.
    Mat<float> encode(const PreparedExample& ex) const;
    Mat<float> encode(const EncodedInput& enc) const;

    /// Mean token cross-entropy of a batch; accumulates gradients when `backward`.
    double loss(const std::vector<const PreparedExample*>& batch, bool backward);
    void zero_grad();
    /// Global gradient norm before clipping.
    double clip_gradients(double max_norm);
    void adam_step(double lr);

    /// Greedy decoding up to max_answer_tokens.
    std::vector<TokenId> greedy_decode(const PreparedExample& ex) const;
    std::vector<std::string> predict(const QAExample& ex) const;

    std::vector<Tensor> tensors() const;
    /// Accumulated gradients, same order and names as tensors().
    std::vector<Tensor> gradients() const;
    /// Replaces weights by name; throws InputError on missing or mis-shaped tensors.
    void load_tensors(const std::vector<Tensor>& ts);
    std::size_t parameter_count() const;

    struct Impl;

private:
    std::unique_ptr<Impl> impl_;
};

struct TrainResult {
    std::size_t steps_run = 0;
    std::size_t best_step = 0;
    double best_da = 0.0;
    bool early_stopped = false;
    std::string trace_csv;  // step,train_loss,eval_da
    std::vector<double> step_losses;
};

/// Trains in place and leaves the best evaluated weights in the model.
/// Deterministic given cfg.seed at a fixed thread count. Throws RuntimeFailure on NaN loss.
TrainResult train(Seq2Seq& model, const std::vector<QAExample>& data, bool verbose = false);

std::vector<std::vector<std::string>> predict_all(const Seq2Seq& model, const std::vector<QAExample>& data);

// Checkpoint file "model.bin":
//   8 bytes "TABENCK\0", u32 version, u32 config length, config JSON,
//   u32 tensor count, then per tensor u32 name length, name, u32 rows, u32 cols, rows*cols f32 (little endian).
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const std::filesystem::path& dir, const Seq2Seq& model, const std::string& trace_csv);
Seq2Seq load_checkpoint(const std::filesystem::path& dir);

}  // namespace tabenc
