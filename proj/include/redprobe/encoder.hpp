#pragma once

#include <cstdint>
#include <vector>

#include "redprobe/autograd.hpp"

namespace redprobe {

// Reserved vocabulary ids. Content tokens start at kFirstContentId.
constexpr int kPadId = 0;
constexpr int kClsId = 1;
constexpr int kSepId = 2;
constexpr int kMaskId = 3;
constexpr int kFirstContentId = 4;

constexpr double kLayerNormEps = 1e-5;

struct EncoderConfig {
    int vocab_size = 64;
    int max_len = 24;
    int d_model = 32;
    int n_layers = 4;
    int n_heads = 4;
    int d_ff = 64;
    double dropout_rate = 0.1;
    uint64_t seed = 0;

    int head_dim() const { return d_model / n_heads; }
    void validate() const;  // throws ConfigError
};

struct LayerWeights {
    Parameter wq, bq, wk, bk, wv, bv, wo, bo;
    Parameter w1, b1, w2, b2;
    Parameter ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

// All trainable state of the encoder. Parameter order is canonical: token,
// position, segment embeddings, then per layer q/k/v/out, ffn, layer norms,
// and the MLM projection last. Serialization and init both follow it.
struct EncoderWeights {
    EncoderConfig config;
    Parameter token_emb;  // vocab_size x d_model
    Parameter pos_emb;    // max_len x d_model
    Parameter seg_emb;    // 2 x d_model
    std::vector<LayerWeights> layers;
    Parameter mlm_proj;   // d_model x vocab_size

    std::vector<Parameter*> all_params();
    std::vector<const Parameter*> all_params() const;
    // Everything a downstream fine-tune updates (excludes the MLM projection).
    std::vector<Parameter*> finetune_params();
};

// Truncated-normal(0, 0.02) weights, zero biases, unit layer-norm gains.
// Bit-reproducible from (config, config.seed).
EncoderWeights init_weights(const EncoderConfig& config);

bool weights_equal(const EncoderWeights& a, const EncoderWeights& b);

struct ActivationTrace {
    std::vector<Matrix> levels;  // n_layers+1 matrices, each seq_len x d_model
    std::vector<uint8_t> mask;   // 1 = real token, 0 = padding
    int n_levels() const { return static_cast<int>(levels.size()); }
};

struct EncodedInput {
    std::vector<int> tokens;
    std::vector<int> segments;
};

// [CLS] content..., all segment 0.
EncodedInput encode_single(const std::vector<int>& content);
// [CLS] a... [SEP] b..., segment 1 starts after the separator.
EncodedInput encode_pair(const std::vector<int>& a, const std::vector<int>& b);

// Tape handles to every encoder parameter, bound once per recording so a
// whole batch shares them.
struct BoundEncoder {
    const EncoderConfig* config;
    Var token_emb, pos_emb, seg_emb;
    struct BoundLayer {
        Var wq, bq, wk, bk, wv, bv, wo, bo;
        Var w1, b1, w2, b2;
        Var ln1_gain, ln1_bias, ln2_gain, ln2_bias;
    };
    std::vector<BoundLayer> layers;
    Var mlm_proj;
};

BoundEncoder bind_encoder(Tape& tape, EncoderWeights& w);               // trainable
BoundEncoder bind_encoder_frozen(Tape& tape, const EncoderWeights& w);  // constants

// Records one sequence through the encoder; returns one Var per level
// (level 0 = embedding output). Validates ids and length.
std::vector<Var> encoder_graph(Tape& tape, const BoundEncoder& enc, const std::vector<int>& tokens,
                               const std::vector<int>& segments, bool train_mode, double dropout_rate,
                               Rng& dropout_rng);

std::vector<uint8_t> padding_mask(const std::vector<int>& tokens);

// Full trace for one input. train_mode=false is a pure function of
// (weights, tokens, segments).
ActivationTrace forward(const EncoderWeights& w, const std::vector<int>& tokens,
                        const std::vector<int>& segments, bool train_mode = false,
                        uint64_t dropout_seed = 0);

// Masked-token pretraining: per step, one corpus sequence has a fraction of
// its content positions replaced with the mask token and the encoder is
// trained by gradient descent (norm clip 1.0) on the masked cross-entropy.
// Returns the per-step loss history; weights update in place.
std::vector<double> pretrain_mlm(EncoderWeights& w, const std::vector<std::vector<int>>& corpus,
                                 int steps, double mask_fraction, double lr, uint64_t seed);

// Synthetic pretraining corpus: random walks over a seeded bigram transition
// table (each content token gets a few preferred successors). Sequences come
// back CLS-prefixed.
std::vector<std::vector<int>> make_bigram_corpus(const EncoderConfig& config, int n_sequences,
                                                 int content_len, uint64_t seed);

}  // namespace redprobe
