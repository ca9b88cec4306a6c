#pragma once

#include <optional>
#include <string>
#include <vector>

#include "redprobe/encoder.hpp"

namespace redprobe {

enum class TaskKind { single_cls, pair_cls, regression };
enum class MetricKind { accuracy, pearson, matthews };
enum class Split { train, valid, test };

// Metric value, or empty when the metric is undefined (constant input to
// Pearson). Undefined sorts below every defined value.
using Score = std::optional<double>;

bool score_less(const Score& a, const Score& b);
bool score_greater(const Score& a, const Score& b);
double metric_floor(MetricKind kind);

// Generative label rules. The planted signal is low-dimensional on purpose:
// labels depend on at most two token-pattern features. A conjunction needs
// both features, so any single dimension caps near 5/6 accuracy while two
// good dimensions recover the label exactly.
//   presence       label = [trigger_a in content]
//   presence_and   label = [trigger_a present] and [trigger_b present]
//   presence_xor   label = [trigger_a present] xor [trigger_b present]
//   pair_and       label = [trigger_a in segment A] and [trigger_b in segment B]
//   count_fraction label = (# trigger_a) / content length, in [0,1]
enum class RuleId { presence, presence_and, presence_xor, pair_and, count_fraction };

struct TaskSpec {
    std::string name = "task";
    TaskKind kind = TaskKind::single_cls;
    MetricKind metric = MetricKind::accuracy;
    int n_classes = 2;
    RuleId rule = RuleId::presence_and;
    int trigger_a = 9;
    int trigger_b = 17;
    double noise_rate = 0.0;
    int n_examples = 1000;
    uint64_t seed = 1;
    int min_content = 6;
    int max_content = 10;

    void validate(const EncoderConfig& enc) const;
};

struct Example {
    std::vector<int> tokens;
    std::vector<int> segments;
    double label;  // class id or regression target (single precision exact)
};

struct TaskDataset {
    TaskSpec spec;
    std::vector<Example> examples;
    std::vector<int> train_idx, valid_idx, test_idx;

    const std::vector<int>& split(Split s) const;
    int n_outputs() const;  // n_classes, or 1 for regression
};

// Deterministic from spec.seed. Classification labels are exactly balanced
// before noise; splits are a seeded shuffle with |valid| = |test| = n/10.
// Labels are stored at single precision so activation dumps are lossless.
TaskDataset generate_task(const TaskSpec& spec, const EncoderConfig& enc);

// Clean label the planted rule assigns to an example's tokens, ignoring any
// label noise. Used to verify recoverability.
double rule_label(const TaskSpec& spec, const Example& ex);

double accuracy(const std::vector<int>& predictions, const std::vector<int>& gold);

// Sample Pearson correlation; empty when either vector is constant.
Score pearson(const std::vector<double>& predictions, const std::vector<double>& gold);

// Matthews correlation for binary labels; 0.0 when the denominator is 0.
double matthews(const std::vector<int>& predictions, const std::vector<int>& gold);

// Dispatch on metric kind. Classification predictions/gold hold class ids.
Score score_predictions(MetricKind kind, const std::vector<double>& predictions,
                        const std::vector<double>& gold);

std::string metric_name(MetricKind kind);
std::string task_kind_name(TaskKind kind);

}  // namespace redprobe
