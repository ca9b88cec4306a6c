#include "redprobe/encoder.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>

#include "redprobe/errors.hpp"

namespace redprobe {

void EncoderConfig::validate() const {
    if (vocab_size <= kFirstContentId) {
        throw ConfigError("encoder: vocab_size must exceed " + std::to_string(kFirstContentId) +
                          " (reserved ids + at least one content token)");
    }
    if (max_len < 3) {
        throw ConfigError("encoder: max_len must be at least 3");
    }
    if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0) {
        throw ConfigError("encoder: sizes must be positive");
    }
    if (d_model % n_heads != 0) {
        throw ConfigError("encoder: d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                          std::to_string(n_heads));
    }
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
        throw ConfigError("encoder: dropout_rate must be in [0, 1)");
    }
}

std::vector<Parameter*> EncoderWeights::all_params() {
    std::vector<Parameter*> ps{&token_emb, &pos_emb, &seg_emb};
    for (auto& l : layers) {
        for (Parameter* p : {&l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo, &l.w1, &l.b1, &l.w2,
                             &l.b2, &l.ln1_gain, &l.ln1_bias, &l.ln2_gain, &l.ln2_bias}) {
            ps.push_back(p);
        }
    }
    ps.push_back(&mlm_proj);
    return ps;
}

std::vector<const Parameter*> EncoderWeights::all_params() const {
    auto ps = const_cast<EncoderWeights*>(this)->all_params();
    return std::vector<const Parameter*>(ps.begin(), ps.end());
}

std::vector<Parameter*> EncoderWeights::finetune_params() {
    auto ps = all_params();
    ps.pop_back();  // mlm_proj
    return ps;
}

namespace {

Matrix init_trunc_normal(int rows, int cols, double stddev, Rng& rng) {
    Matrix m(rows, cols);
    for (auto& v : m.values()) {
        v = rng.truncated_normal(stddev);
    }
    return m;
}

}  // namespace

EncoderWeights init_weights(const EncoderConfig& config) {
    config.validate();
    Rng rng(config.seed);
    const int d = config.d_model;

    // Truncated-normal init with fan-in scaling. The reference 0.02 of the
    // full-size model starves a desk-scale encoder trained by plain gradient
    // descent: signal through 0.02-scale projections at d_model=32 decays so
    // fast that encoder gradients vanish. 1/sqrt(fan_in) keeps activation
    // scale comparable across widths.
    const double emb_std = 1.0 / std::sqrt(static_cast<double>(d));
    const double proj_std = 1.0 / std::sqrt(static_cast<double>(d));
    const double ffn_out_std = 1.0 / std::sqrt(static_cast<double>(config.d_ff));

    EncoderWeights w;
    w.config = config;
    w.token_emb = Parameter("token_emb", init_trunc_normal(config.vocab_size, d, emb_std, rng));
    w.pos_emb = Parameter("pos_emb", init_trunc_normal(config.max_len, d, emb_std, rng));
    w.seg_emb = Parameter("seg_emb", init_trunc_normal(2, d, emb_std, rng));
    w.layers.resize(config.n_layers);
    for (int i = 0; i < config.n_layers; ++i) {
        auto& l = w.layers[i];
        const std::string pre = "layer" + std::to_string(i) + ".";
        l.wq = Parameter(pre + "wq", init_trunc_normal(d, d, proj_std, rng));
        l.bq = Parameter(pre + "bq", Matrix(1, d));
        l.wk = Parameter(pre + "wk", init_trunc_normal(d, d, proj_std, rng));
        l.bk = Parameter(pre + "bk", Matrix(1, d));
        l.wv = Parameter(pre + "wv", init_trunc_normal(d, d, proj_std, rng));
        l.bv = Parameter(pre + "bv", Matrix(1, d));
        l.wo = Parameter(pre + "wo", init_trunc_normal(d, d, proj_std, rng));
        l.bo = Parameter(pre + "bo", Matrix(1, d));
        l.w1 = Parameter(pre + "w1", init_trunc_normal(d, config.d_ff, proj_std, rng));
        l.b1 = Parameter(pre + "b1", Matrix(1, config.d_ff));
        l.w2 = Parameter(pre + "w2", init_trunc_normal(config.d_ff, d, ffn_out_std, rng));
        l.b2 = Parameter(pre + "b2", Matrix(1, d));
        l.ln1_gain = Parameter(pre + "ln1_gain", Matrix::filled(1, d, 1.0));
        l.ln1_bias = Parameter(pre + "ln1_bias", Matrix(1, d));
        l.ln2_gain = Parameter(pre + "ln2_gain", Matrix::filled(1, d, 1.0));
        l.ln2_bias = Parameter(pre + "ln2_bias", Matrix(1, d));
    }
    w.mlm_proj = Parameter("mlm_proj", init_trunc_normal(d, config.vocab_size, proj_std, rng));
    return w;
}

bool weights_equal(const EncoderWeights& a, const EncoderWeights& b) {
    auto pa = a.all_params();
    auto pb = b.all_params();
    if (pa.size() != pb.size()) {
        return false;
    }
    for (size_t i = 0; i < pa.size(); ++i) {
        if (!pa[i]->value.same_shape(pb[i]->value)) {
            return false;
        }
        if (std::memcmp(pa[i]->value.data(), pb[i]->value.data(),
                        pa[i]->value.size() * sizeof(double)) != 0) {
            return false;
        }
    }
    return true;
}

EncodedInput encode_single(const std::vector<int>& content) {
    EncodedInput e;
    e.tokens.reserve(content.size() + 1);
    e.tokens.push_back(kClsId);
    e.tokens.insert(e.tokens.end(), content.begin(), content.end());
    e.segments.assign(e.tokens.size(), 0);
    return e;
}

EncodedInput encode_pair(const std::vector<int>& a, const std::vector<int>& b) {
    EncodedInput e;
    e.tokens.reserve(a.size() + b.size() + 2);
    e.tokens.push_back(kClsId);
    e.tokens.insert(e.tokens.end(), a.begin(), a.end());
    e.tokens.push_back(kSepId);
    e.segments.assign(e.tokens.size(), 0);
    e.tokens.insert(e.tokens.end(), b.begin(), b.end());
    e.segments.resize(e.tokens.size(), 1);
    return e;
}

BoundEncoder bind_encoder(Tape& tape, EncoderWeights& w) {
    BoundEncoder b;
    b.config = &w.config;
    b.token_emb = tape.param(w.token_emb);
    b.pos_emb = tape.param(w.pos_emb);
    b.seg_emb = tape.param(w.seg_emb);
    b.layers.reserve(w.layers.size());
    for (auto& l : w.layers) {
        b.layers.push_back({tape.param(l.wq), tape.param(l.bq), tape.param(l.wk), tape.param(l.bk),
                            tape.param(l.wv), tape.param(l.bv), tape.param(l.wo), tape.param(l.bo),
                            tape.param(l.w1), tape.param(l.b1), tape.param(l.w2), tape.param(l.b2),
                            tape.param(l.ln1_gain), tape.param(l.ln1_bias), tape.param(l.ln2_gain),
                            tape.param(l.ln2_bias)});
    }
    b.mlm_proj = tape.param(w.mlm_proj);
    return b;
}

BoundEncoder bind_encoder_frozen(Tape& tape, const EncoderWeights& w) {
    BoundEncoder b;
    b.config = &w.config;
    b.token_emb = tape.leaf(w.token_emb.value);
    b.pos_emb = tape.leaf(w.pos_emb.value);
    b.seg_emb = tape.leaf(w.seg_emb.value);
    b.layers.reserve(w.layers.size());
    for (const auto& l : w.layers) {
        b.layers.push_back({tape.leaf(l.wq.value), tape.leaf(l.bq.value), tape.leaf(l.wk.value),
                            tape.leaf(l.bk.value), tape.leaf(l.wv.value), tape.leaf(l.bv.value),
                            tape.leaf(l.wo.value), tape.leaf(l.bo.value), tape.leaf(l.w1.value),
                            tape.leaf(l.b1.value), tape.leaf(l.w2.value), tape.leaf(l.b2.value),
                            tape.leaf(l.ln1_gain.value), tape.leaf(l.ln1_bias.value),
                            tape.leaf(l.ln2_gain.value), tape.leaf(l.ln2_bias.value)});
    }
    b.mlm_proj = tape.leaf(w.mlm_proj.value);
    return b;
}

std::vector<uint8_t> padding_mask(const std::vector<int>& tokens) {
    std::vector<uint8_t> mask(tokens.size());
    for (size_t i = 0; i < tokens.size(); ++i) {
        mask[i] = tokens[i] == kPadId ? 0 : 1;
    }
    return mask;
}

std::vector<Var> encoder_graph(Tape& tape, const BoundEncoder& enc, const std::vector<int>& tokens,
                               const std::vector<int>& segments, bool train_mode, double dropout_rate,
                               Rng& dropout_rng) {
    const EncoderConfig& cfg = *enc.config;
    const int len = static_cast<int>(tokens.size());
    if (len == 0) {
        throw DataError("encoder: empty input");
    }
    if (len > cfg.max_len) {
        throw TruncationError("encoder: sequence of " + std::to_string(len) + " tokens exceeds max_len " +
                              std::to_string(cfg.max_len));
    }
    if (segments.size() != tokens.size()) {
        throw DimensionError("encoder: " + std::to_string(segments.size()) + " segment ids for " +
                             std::to_string(tokens.size()) + " tokens");
    }
    for (int t : tokens) {
        if (t < 0 || t >= cfg.vocab_size) {
            throw VocabularyError("encoder: token id " + std::to_string(t) + " outside vocabulary of " +
                                  std::to_string(cfg.vocab_size));
        }
    }
    for (int s : segments) {
        if (s != 0 && s != 1) {
            throw DataError("encoder: segment id must be 0 or 1");
        }
    }

    const auto mask = padding_mask(tokens);
    std::vector<int> positions(len);
    for (int i = 0; i < len; ++i) {
        positions[i] = i;
    }

    // Additive attention mask: padding keys get -1e9 before the softmax.
    Matrix attn_mask(len, len);
    for (int j = 0; j < len; ++j) {
        if (!mask[j]) {
            for (int i = 0; i < len; ++i) {
                attn_mask(i, j) = -1e9;
            }
        }
    }

    const bool drop = train_mode && dropout_rate > 0.0;

    Var x = tape.add(tape.add(tape.embedding_rows(enc.token_emb, tokens),
                              tape.embedding_rows(enc.pos_emb, positions)),
                     tape.embedding_rows(enc.seg_emb, segments));
    if (drop) {
        x = tape.dropout(x, dropout_rate, dropout_rng);
    }

    std::vector<Var> levels;
    levels.reserve(cfg.n_layers + 1);
    levels.push_back(x);

    const int dh = cfg.head_dim();
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    for (const auto& l : enc.layers) {
        const Var q = tape.add_row(tape.matmul(x, l.wq), l.bq);
        const Var k = tape.add_row(tape.matmul(x, l.wk), l.bk);
        const Var v = tape.add_row(tape.matmul(x, l.wv), l.bv);

        std::vector<Var> heads;
        heads.reserve(cfg.n_heads);
        for (int h = 0; h < cfg.n_heads; ++h) {
            const int c0 = h * dh, c1 = (h + 1) * dh;
            const Var qh = tape.col_slice(q, c0, c1);
            const Var kh = tape.col_slice(k, c0, c1);
            const Var vh = tape.col_slice(v, c0, c1);
            Var scores = tape.scale(tape.matmul_nt(qh, kh), inv_sqrt_dh);
            scores = tape.add_const(scores, attn_mask);
            const Var attn = tape.softmax_rows(scores);
            heads.push_back(tape.matmul(attn, vh));
        }
        Var attn_out = tape.add_row(tape.matmul(tape.col_concat(heads), l.wo), l.bo);
        if (drop) {
            attn_out = tape.dropout(attn_out, dropout_rate, dropout_rng);
        }
        x = tape.layer_norm_rows(tape.add(x, attn_out), l.ln1_gain, l.ln1_bias, kLayerNormEps);

        Var ffn = tape.add_row(tape.matmul(tape.gelu(tape.add_row(tape.matmul(x, l.w1), l.b1)), l.w2),
                               l.b2);
        if (drop) {
            ffn = tape.dropout(ffn, dropout_rate, dropout_rng);
        }
        x = tape.layer_norm_rows(tape.add(x, ffn), l.ln2_gain, l.ln2_bias, kLayerNormEps);
        levels.push_back(x);
    }
    return levels;
}

ActivationTrace forward(const EncoderWeights& w, const std::vector<int>& tokens,
                        const std::vector<int>& segments, bool train_mode, uint64_t dropout_seed) {
    Tape tape;
    Rng rng(dropout_seed);
    const BoundEncoder enc = bind_encoder_frozen(tape, w);
    const auto levels = encoder_graph(tape, enc, tokens, segments, train_mode, w.config.dropout_rate, rng);
    ActivationTrace trace;
    trace.levels.reserve(levels.size());
    for (Var v : levels) {
        trace.levels.push_back(tape.value(v));
    }
    trace.mask = padding_mask(tokens);
    return trace;
}

std::vector<double> pretrain_mlm(EncoderWeights& w, const std::vector<std::vector<int>>& corpus,
                                 int steps, double mask_fraction, double lr, uint64_t seed) {
    if (corpus.empty()) {
        throw DataError("pretrain_mlm: empty corpus");
    }
    if (mask_fraction <= 0.0 || mask_fraction >= 1.0) {
        throw ConfigError("pretrain_mlm: mask_fraction must be in (0, 1)");
    }
    for (const auto& seq : corpus) {
        bool has_content = false;
        for (int t : seq) {
            has_content = has_content || t >= kFirstContentId;
        }
        if (!has_content) {
            throw DataError("pretrain_mlm: corpus sequence without content tokens");
        }
    }

    Rng rng(seed);
    auto params = w.all_params();
    std::vector<double> history;
    history.reserve(steps);
    Tape tape;

    for (int step = 0; step < steps; ++step) {
        const auto& seq = corpus[rng.uniform_u64(corpus.size())];
        std::vector<int> candidates;
        for (size_t i = 0; i < seq.size(); ++i) {
            if (seq[i] >= kFirstContentId) {
                candidates.push_back(static_cast<int>(i));
            }
        }
        const int n_mask =
            std::max(1, static_cast<int>(std::llround(mask_fraction * candidates.size())));
        rng.shuffle(candidates);
        candidates.resize(std::min<size_t>(n_mask, candidates.size()));
        std::sort(candidates.begin(), candidates.end());

        std::vector<int> masked = seq;
        for (int pos : candidates) {
            masked[pos] = kMaskId;
        }
        const std::vector<int> segments(seq.size(), 0);

        double step_loss = 0.0;
        try {
            tape.reset();
            zero_grads(params);
            const BoundEncoder enc = bind_encoder(tape, w);
            const auto levels =
                encoder_graph(tape, enc, masked, segments, true, w.config.dropout_rate, rng);
            const Var logits = tape.matmul(levels.back(), enc.mlm_proj);
            std::vector<Var> losses;
            losses.reserve(candidates.size());
            for (int pos : candidates) {
                losses.push_back(tape.softmax_cross_entropy(tape.row_select(logits, pos), seq[pos]));
            }
            const Var loss = tape.mean_scalars(losses);
            tape.backward(loss);
            step_loss = tape.scalar(loss);
        } catch (const NumericError& e) {
            throw TrainingError("pretrain_mlm: " + std::string(e.what()) + " at step " +
                                std::to_string(step));
        }
        clip_global_norm(params, 1.0);
        sgd_step(params, lr);
        history.push_back(step_loss);
    }
    return history;
}

std::vector<std::vector<int>> make_bigram_corpus(const EncoderConfig& config, int n_sequences,
                                                 int content_len, uint64_t seed) {
    config.validate();
    if (n_sequences <= 0 || content_len <= 0) {
        throw ConfigError("make_bigram_corpus: sizes must be positive");
    }
    if (content_len + 1 > config.max_len) {
        throw ConfigError("make_bigram_corpus: content_len + CLS exceeds max_len");
    }
    const int n_content = config.vocab_size - kFirstContentId;
    Rng rng(seed);

    // Each content token gets two preferred successors; walks follow them
    // 80% of the time, which gives the corpus learnable bigram structure.
    std::vector<std::array<int, 2>> successors(n_content);
    for (int t = 0; t < n_content; ++t) {
        successors[t][0] = static_cast<int>(rng.uniform_u64(n_content));
        successors[t][1] = static_cast<int>(rng.uniform_u64(n_content));
    }

    std::vector<std::vector<int>> corpus;
    corpus.reserve(n_sequences);
    for (int s = 0; s < n_sequences; ++s) {
        std::vector<int> content(content_len);
        int cur = static_cast<int>(rng.uniform_u64(n_content));
        content[0] = kFirstContentId + cur;
        for (int i = 1; i < content_len; ++i) {
            if (rng.bernoulli(0.8)) {
                cur = successors[cur][rng.bernoulli(0.5) ? 1 : 0];
            } else {
                cur = static_cast<int>(rng.uniform_u64(n_content));
            }
            content[i] = kFirstContentId + cur;
        }
        corpus.push_back(encode_single(content).tokens);
    }
    return corpus;
}

}  // namespace redprobe
