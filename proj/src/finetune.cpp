#include "redprobe/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "redprobe/errors.hpp"

namespace redprobe {

std::vector<Parameter*> Head::params() {
    if (depth == 1) {
        return {&w1, &b1};
    }
    return {&w1, &b1, &w2, &b2};
}

std::vector<const Parameter*> Head::params() const {
    auto ps = const_cast<Head*>(this)->params();
    return std::vector<const Parameter*>(ps.begin(), ps.end());
}

size_t Head::n_scalars() const {
    size_t n = 0;
    for (const Parameter* p : params()) {
        n += p->value.size();
    }
    return n;
}

Head init_head(int d_model, int n_out, int head_depth, uint64_t seed) {
    if (d_model <= 0 || n_out <= 0) {
        throw ConfigError("init_head: dimensions must be positive");
    }
    if (head_depth != 1 && head_depth != 2) {
        throw ConfigError("init_head: head_depth must be 1 or 2");
    }
    Rng rng(seed);
    // Fan-in scaled, matching the encoder init.
    auto trunc = [&rng](int r, int c) {
        Matrix m(r, c);
        const double stddev = 1.0 / std::sqrt(static_cast<double>(r));
        for (auto& v : m.values()) {
            v = rng.truncated_normal(stddev);
        }
        return m;
    };
    Head h;
    h.depth = head_depth;
    h.d_in = d_model;
    h.n_out = n_out;
    if (head_depth == 1) {
        h.d_hidden = 0;
        h.w1 = Parameter("head.w1", trunc(d_model, n_out));
        h.b1 = Parameter("head.b1", Matrix(1, n_out));
    } else {
        h.d_hidden = d_model;
        h.w1 = Parameter("head.w1", trunc(d_model, h.d_hidden));
        h.b1 = Parameter("head.b1", Matrix(1, h.d_hidden));
        h.w2 = Parameter("head.w2", trunc(h.d_hidden, n_out));
        h.b2 = Parameter("head.b2", Matrix(1, n_out));
    }
    return h;
}

bool heads_equal(const Head& a, const Head& b) {
    if (a.depth != b.depth || a.d_in != b.d_in || a.d_hidden != b.d_hidden || a.n_out != b.n_out) {
        return false;
    }
    auto pa = a.params();
    auto pb = b.params();
    for (size_t i = 0; i < pa.size(); ++i) {
        if (!pa[i]->value.same_shape(pb[i]->value) ||
            std::memcmp(pa[i]->value.data(), pb[i]->value.data(),
                        pa[i]->value.size() * sizeof(double)) != 0) {
            return false;
        }
    }
    return true;
}

std::vector<double> mask_vector(const std::vector<double>& vec, const std::vector<int>* subset) {
    if (subset == nullptr) {
        return vec;
    }
    std::vector<double> out(vec.size(), 0.0);
    for (int d : *subset) {
        if (d < 0 || d >= static_cast<int>(vec.size())) {
            throw IndexError("mask_vector: dimension " + std::to_string(d) + " outside vector of " +
                             std::to_string(vec.size()));
        }
        out[d] = vec[d];
    }
    return out;
}

namespace {

std::vector<double> affine(const std::vector<double>& x, const Parameter& w, const Parameter& b) {
    std::vector<double> out(w.value.cols());
    for (int j = 0; j < w.value.cols(); ++j) {
        out[j] = b.value(0, j);
    }
    for (int i = 0; i < w.value.rows(); ++i) {
        const double xi = x[i];
        const double* wrow = w.value.row(i);
        for (int j = 0; j < w.value.cols(); ++j) {
            out[j] += xi * wrow[j];
        }
    }
    return out;
}

}  // namespace

std::vector<double> head_logits(const Head& head, const std::vector<double>& vec) {
    if (static_cast<int>(vec.size()) != head.d_in) {
        throw DimensionError("head_logits: input of " + std::to_string(vec.size()) + " vs d_in " +
                             std::to_string(head.d_in));
    }
    std::vector<double> x = affine(vec, head.w1, head.b1);
    if (head.depth == 2) {
        for (auto& v : x) {
            v = gelu_scalar(v);
        }
        x = affine(x, head.w2, head.b2);
    }
    return x;
}

double predict_masked(const Head& head, const std::vector<double>& vec, const std::vector<int>* subset) {
    const std::vector<double> logits = head_logits(head, mask_vector(vec, subset));
    if (head.n_out == 1) {
        return logits[0];
    }
    int best = 0;
    for (int j = 1; j < head.n_out; ++j) {
        if (logits[j] > logits[best]) {
            best = j;
        }
    }
    return static_cast<double>(best);
}

void FineTuneConfig::validate() const {
    if (learning_rate <= 0.0) {
        throw ConfigError("finetune: learning_rate must be positive");
    }
    if (batch_size < 1 || max_epochs < 1) {
        throw ConfigError("finetune: batch_size and max_epochs must be at least 1");
    }
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
        throw ConfigError("finetune: dropout_rate must be in [0, 1)");
    }
    if (head_depth != 1 && head_depth != 2) {
        throw ConfigError("finetune: head_depth must be 1 or 2");
    }
    if (head_depth == 2 && !freeze_encoder) {
        throw ConfigError("finetune: a two-layer head requires a frozen encoder");
    }
}

uint64_t cross_head_seed(const FineTuneConfig& cfg) {
    return cfg.seed + 1;
}

namespace {

struct BoundHead {
    int depth;
    Var w1, b1, w2, b2;
};

BoundHead bind_head(Tape& tape, Head& head) {
    BoundHead b{head.depth, tape.param(head.w1), tape.param(head.b1), -1, -1};
    if (head.depth == 2) {
        b.w2 = tape.param(head.w2);
        b.b2 = tape.param(head.b2);
    }
    return b;
}

Var head_graph(Tape& tape, const BoundHead& head, Var input_row) {
    Var x = tape.add(tape.matmul(input_row, head.w1), head.b1);
    if (head.depth == 2) {
        x = tape.add(tape.matmul(tape.gelu(x), head.w2), head.b2);
    }
    return x;
}

Var example_loss(Tape& tape, Var logits, TaskKind kind, double label) {
    if (kind == TaskKind::regression) {
        return tape.squared_error(logits, label);
    }
    return tape.softmax_cross_entropy(logits, static_cast<int>(std::llround(label)));
}

Var pooled_var(Tape& tape, const std::vector<Var>& levels, const std::vector<uint8_t>& mask,
               Pooling pooling) {
    if (pooling == Pooling::cls) {
        return tape.row_select(levels.back(), 0);
    }
    const Matrix& final = tape.value(levels.back());
    int best = -1;
    double best_norm = -1.0;
    for (int i = 0; i < final.rows(); ++i) {
        if (!mask[i]) {
            continue;
        }
        double norm = 0.0;
        for (int j = 0; j < final.cols(); ++j) {
            norm += final(i, j) * final(i, j);
        }
        if (norm > best_norm) {
            best_norm = norm;
            best = i;
        }
    }
    return tape.row_select(levels.back(), best);
}

std::vector<std::vector<int>> batches_of(std::vector<int> order, int batch_size) {
    std::vector<std::vector<int>> out;
    for (size_t i = 0; i < order.size(); i += batch_size) {
        const size_t end = std::min(order.size(), i + static_cast<size_t>(batch_size));
        out.emplace_back(order.begin() + i, order.begin() + end);
    }
    return out;
}

// Inference-mode score of the current weights + head on a split, through the
// same quantized vector path the probes use.
Score eval_current(const EncoderWeights& w, const Head& head, const TaskDataset& data, Split split,
                   Pooling pooling) {
    const auto& ids = data.split(split);
    if (ids.empty()) {
        throw DataError("evaluate: empty split");
    }
    std::vector<double> preds, golds;
    preds.reserve(ids.size());
    golds.reserve(ids.size());
    for (int i : ids) {
        const Example& ex = data.examples[i];
        const ActivationTrace trace = forward(w, ex.tokens, ex.segments);
        std::vector<double> vec = pooling == Pooling::cls ? cls_vector(trace, trace.n_levels() - 1)
                                                          : maxpool_token_vector(trace);
        quantize_f32(vec);
        preds.push_back(predict_masked(head, vec, nullptr));
        golds.push_back(ex.label);
    }
    return score_predictions(data.spec.metric, preds, golds);
}

// End-to-end fine-tuning loop; the head seed is separate so cross-fine-tuning
// can reset the head without touching the training streams.
FineTunedModel finetune_unfrozen(const EncoderWeights& start, const TaskDataset& data,
                                 const FineTuneConfig& cfg, uint64_t head_seed) {
    FineTunedModel model;
    model.task = data.spec;
    model.metric = data.spec.metric;
    model.config = cfg;

    EncoderWeights w = start;
    Head head = init_head(w.config.d_model, data.n_outputs(), cfg.head_depth, head_seed);
    std::vector<Parameter*> params = w.finetune_params();
    for (Parameter* p : head.params()) {
        params.push_back(p);
    }

    Rng shuffle_rng(mix_seed(cfg.seed, 101));
    Rng dropout_rng(mix_seed(cfg.seed, 202));
    Tape tape;

    Score best_score = std::nullopt;
    int best_epoch = 0;
    EncoderWeights best_w = w;
    Head best_head = head;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::vector<int> order = data.train_idx;
        shuffle_rng.shuffle(order);
        for (const auto& batch : batches_of(std::move(order), cfg.batch_size)) {
            try {
                tape.reset();
                zero_grads(params);
                const BoundEncoder enc = bind_encoder(tape, w);
                const BoundHead bh = bind_head(tape, head);
                std::vector<Var> losses;
                losses.reserve(batch.size());
                for (int i : batch) {
                    const Example& ex = data.examples[i];
                    const auto levels = encoder_graph(tape, enc, ex.tokens, ex.segments, true,
                                                      cfg.dropout_rate, dropout_rng);
                    Var pooled = pooled_var(tape, levels, padding_mask(ex.tokens), cfg.pooling);
                    pooled = tape.dropout(pooled, cfg.dropout_rate, dropout_rng);
                    losses.push_back(
                        example_loss(tape, head_graph(tape, bh, pooled), data.spec.kind, ex.label));
                }
                tape.backward(tape.mean_scalars(losses));
            } catch (const NumericError& e) {
                throw TrainingError("finetune: " + std::string(e.what()) + " in epoch " +
                                    std::to_string(epoch));
            }
            clip_global_norm(params, 1.0);
            sgd_step(params, cfg.learning_rate);
        }
        const Score score = eval_current(w, head, data, Split::valid, cfg.pooling);
        model.valid_history.push_back(score);
        if (best_epoch == 0 || score_greater(score, best_score)) {
            best_score = score;
            best_epoch = epoch;
            best_w = w;
            best_head = head;
        }
    }

    model.weights = std::move(best_w);
    model.head = std::move(best_head);
    model.best_epoch = best_epoch;
    return model;
}

}  // namespace

Score score_on_activations(const ActivationSet& acts, const Head& head, MetricKind metric,
                           Pooling pooling, Split split, int level, const std::vector<int>* subset) {
    const auto ids = acts.split_ids(split);
    if (ids.empty()) {
        throw DataError("evaluate: empty split");
    }
    std::vector<double> preds, golds;
    preds.reserve(ids.size());
    golds.reserve(ids.size());
    for (int i : ids) {
        const ActivationExample& ex = acts.examples[i];
        preds.push_back(predict_masked(head, acts.vector_of(ex, level, pooling), subset));
        golds.push_back(ex.label);
    }
    return score_predictions(metric, preds, golds);
}

HeadTrainResult train_head(const ActivationSet& acts, MetricKind metric, const FineTuneConfig& cfg,
                           uint64_t head_seed) {
    cfg.validate();
    const int n_out = acts.label_kind == 1 ? 1 : static_cast<int>(acts.n_classes);
    const TaskKind kind = acts.label_kind == 1 ? TaskKind::regression : TaskKind::single_cls;
    const auto train_ids = acts.split_ids(Split::train);
    if (train_ids.empty()) {
        throw DataError("train_head: empty train split");
    }

    Head head = init_head(acts.d_model, n_out, cfg.head_depth, head_seed);
    auto params = head.params();

    Rng shuffle_rng(mix_seed(cfg.seed, 101));
    Rng dropout_rng(mix_seed(cfg.seed, 202));
    Tape tape;

    HeadTrainResult result;
    Score best_score = std::nullopt;
    Head best_head = head;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::vector<int> order = train_ids;
        shuffle_rng.shuffle(order);
        for (const auto& batch : batches_of(std::move(order), cfg.batch_size)) {
            try {
                tape.reset();
                zero_grads(params);
                const BoundHead bh = bind_head(tape, head);
                std::vector<Var> losses;
                losses.reserve(batch.size());
                for (int i : batch) {
                    const ActivationExample& ex = acts.examples[i];
                    Var input = tape.leaf(Matrix(
                        1, acts.d_model,
                        std::vector<double>(acts.vector_of(ex, acts.final_level(), cfg.pooling))));
                    input = tape.dropout(input, cfg.dropout_rate, dropout_rng);
                    losses.push_back(example_loss(tape, head_graph(tape, bh, input), kind, ex.label));
                }
                tape.backward(tape.mean_scalars(losses));
            } catch (const NumericError& e) {
                throw TrainingError("train_head: " + std::string(e.what()) + " in epoch " +
                                    std::to_string(epoch));
            }
            clip_global_norm(params, 1.0);
            sgd_step(params, cfg.learning_rate);
        }
        const Score score = score_on_activations(acts, head, metric, cfg.pooling, Split::valid,
                                                 acts.final_level(), nullptr);
        result.valid_history.push_back(score);
        if (result.best_epoch == 0 || score_greater(score, best_score)) {
            best_score = score;
            best_head = head;
            result.best_epoch = epoch;
        }
    }
    result.head = std::move(best_head);
    return result;
}

FineTunedModel finetune(const EncoderWeights& pretrained, const TaskDataset& data,
                        const FineTuneConfig& cfg) {
    cfg.validate();
    data.spec.validate(pretrained.config);

    if (cfg.freeze_encoder) {
        FineTunedModel model;
        model.task = data.spec;
        model.metric = data.spec.metric;
        model.config = cfg;
        const ActivationSet acts = build_activation_set(pretrained, data);
        HeadTrainResult res = train_head(acts, data.spec.metric, cfg, cfg.seed);
        model.weights = pretrained;
        model.head = std::move(res.head);
        model.valid_history = std::move(res.valid_history);
        model.best_epoch = res.best_epoch;
        return model;
    }
    return finetune_unfrozen(pretrained, data, cfg, cfg.seed);
}

Score evaluate(const FineTunedModel& model, const TaskDataset& data, Split split, int level,
               const std::vector<int>* subset) {
    const int n_levels = model.weights.config.n_layers + 1;
    if (level < 0 || level >= n_levels) {
        throw IndexError("evaluate: level " + std::to_string(level) + " outside [0, " +
                         std::to_string(n_levels - 1) + "]");
    }
    if (subset != nullptr) {
        for (int d : *subset) {
            if (d < 0 || d >= model.weights.config.d_model) {
                throw IndexError("evaluate: dimension " + std::to_string(d) + " outside d_model " +
                                 std::to_string(model.weights.config.d_model));
            }
        }
    }
    const ActivationSet acts = build_activation_set(model.weights, data);
    return score_on_activations(acts, model.head, model.metric, model.config.pooling, split, level,
                                subset);
}

CrossFinetuneResult cross_finetune(const EncoderWeights& pretrained, const TaskDataset& source,
                                   const TaskDataset& target, const FineTuneConfig& cfg) {
    cfg.validate();
    if (cfg.freeze_encoder) {
        throw ConfigError("cross_finetune: both stages train the encoder; freeze_encoder must be off");
    }
    CrossFinetuneResult result;
    const FineTunedModel source_model = finetune(pretrained, source, cfg);
    result.cross_model = finetune_unfrozen(source_model.weights, target, cfg, cross_head_seed(cfg));
    result.direct_model = finetune(pretrained, target, cfg);

    const int final = pretrained.config.n_layers;
    result.cross_test = evaluate(result.cross_model, target, Split::test, final, nullptr);
    result.direct_test = evaluate(result.direct_model, target, Split::test, final, nullptr);
    return result;
}

FreezeCompareResult freeze_compare(const EncoderWeights& pretrained, const TaskDataset& data,
                                   const FineTuneConfig& cfg) {
    FineTuneConfig unfrozen_cfg = cfg;
    unfrozen_cfg.freeze_encoder = false;
    unfrozen_cfg.head_depth = 1;
    FineTuneConfig frozen_cfg = cfg;
    frozen_cfg.freeze_encoder = true;
    frozen_cfg.head_depth = 2;

    FreezeCompareResult result;
    result.unfrozen = finetune(pretrained, data, unfrozen_cfg);
    result.frozen = finetune(pretrained, data, frozen_cfg);
    const int final = pretrained.config.n_layers;
    result.unfrozen_test = evaluate(result.unfrozen, data, Split::test, final, nullptr);
    result.frozen_test = evaluate(result.frozen, data, Split::test, final, nullptr);
    return result;
}

}  // namespace redprobe
