#pragma once

#include <cstdint>
#include <vector>

#include "redprobe/activations.hpp"

namespace redprobe {

// Classifier/regressor head. depth 1 is a single affine map d_in -> n_out;
// depth 2 inserts a GELU stage of width d_hidden (= d_in) and is only used
// on top of a frozen encoder.
struct Head {
    int depth = 1;
    int d_in = 0;
    int d_hidden = 0;
    int n_out = 0;
    Parameter w1, b1;
    Parameter w2, b2;  // depth 2 only

    std::vector<Parameter*> params();
    std::vector<const Parameter*> params() const;
    size_t n_scalars() const;
};

Head init_head(int d_model, int n_out, int head_depth, uint64_t seed);
bool heads_equal(const Head& a, const Head& b);

// Zeroes every coordinate outside subset; nullptr keeps the vector as is.
std::vector<double> mask_vector(const std::vector<double>& vec, const std::vector<int>* subset);

std::vector<double> head_logits(const Head& head, const std::vector<double>& vec);

// Argmax class (ties to the lowest id) for classifiers, raw scalar for
// regression heads, after zeroing coordinates outside subset.
double predict_masked(const Head& head, const std::vector<double>& vec, const std::vector<int>* subset);

struct FineTuneConfig {
    double learning_rate = 0.1;
    int batch_size = 32;
    int max_epochs = 5;
    double dropout_rate = 0.1;
    uint64_t seed = 42;
    Pooling pooling = Pooling::cls;
    bool freeze_encoder = false;
    int head_depth = 1;

    void validate() const;
};

struct FineTunedModel {
    EncoderWeights weights;  // best-epoch encoder
    Head head;               // best-epoch head
    TaskSpec task;
    MetricKind metric = MetricKind::accuracy;
    FineTuneConfig config;
    std::vector<Score> valid_history;  // per-epoch validation score
    int best_epoch = 0;                // 1-based
};

// Trains encoder + head on the train split (head only when freeze_encoder),
// gradient descent with norm clip 1.0, and keeps the epoch with the best
// validation score (ties to the earliest). Deterministic from cfg.seed.
// With freeze_encoder the returned weights are bit-identical to the input.
FineTunedModel finetune(const EncoderWeights& pretrained, const TaskDataset& data,
                        const FineTuneConfig& cfg);

// Head seed used for the second stage of cross-fine-tuning.
uint64_t cross_head_seed(const FineTuneConfig& cfg);

// Metric score of the model on a split, probing the given level with a
// dimension subset (nullptr = all dimensions). At the final level the
// model's pooling mode selects the vector; lower levels always use CLS.
Score evaluate(const FineTunedModel& model, const TaskDataset& data, Split split, int level,
               const std::vector<int>* subset);

// Bulk form shared with the probe sweeps.
Score score_on_activations(const ActivationSet& acts, const Head& head, MetricKind metric,
                           Pooling pooling, Split split, int level, const std::vector<int>* subset);

// Head training over cached activation vectors; shared by frozen-encoder
// fine-tuning and dump-backed training, so both produce identical heads on
// identical vectors.
struct HeadTrainResult {
    Head head;
    std::vector<Score> valid_history;
    int best_epoch = 0;
};
HeadTrainResult train_head(const ActivationSet& acts, MetricKind metric, const FineTuneConfig& cfg,
                           uint64_t head_seed);

struct CrossFinetuneResult {
    FineTunedModel cross_model;   // source then target, fresh head in between
    FineTunedModel direct_model;  // target only
    Score cross_test;
    Score direct_test;
};

// Fine-tunes on source, discards the head, re-initializes it from
// cross_head_seed(cfg), then fine-tunes on target; reports the target test
// score next to the direct fine-tune score under the same config.
CrossFinetuneResult cross_finetune(const EncoderWeights& pretrained, const TaskDataset& source,
                                   const TaskDataset& target, const FineTuneConfig& cfg);

struct FreezeCompareResult {
    FineTunedModel unfrozen;  // one-layer head, encoder trained
    FineTunedModel frozen;    // two-layer head, encoder fixed
    Score unfrozen_test;
    Score frozen_test;
};

// Runs (freeze=false, depth=1) against (freeze=true, depth=2) with matched
// seeds and reports both test scores.
FreezeCompareResult freeze_compare(const EncoderWeights& pretrained, const TaskDataset& data,
                                   const FineTuneConfig& cfg);

}  // namespace redprobe
