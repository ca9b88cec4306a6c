#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "redprobe/finetune.hpp"

namespace redprobe {

// Strictly increasing hidden-dimension indices. May be empty (degenerate
// probe through the head bias alone).
struct DimensionSubset {
    std::vector<int> dims;

    void validate(int d_model) const;  // strictly increasing, in range
    std::string to_string() const;     // dash-joined ids, "" when empty
};

bool lex_less(const DimensionSubset& a, const DimensionSubset& b);
bool subsets_equal(const DimensionSubset& a, const DimensionSubset& b);

struct SamplingInfo {
    int k = 0;
    uint64_t population = 0;
    uint64_t count = 0;
    double rate = 0.0;  // 0 when not rate-driven
    uint64_t seed = 0;
    std::string mode = "exhaustive";
};

struct SubsetList {
    std::vector<DimensionSubset> subsets;
    SamplingInfo info;
};

// C(n, k); throws SamplingError if the value overflows 64 bits.
uint64_t subset_population(int d_model, int k);

// All C(d_model, k) subsets in lexicographic order.
SubsetList enumerate_subsets(int d_model, int k);

// `count` distinct subsets drawn uniformly without replacement (Floyd's
// algorithm over lexicographic ranks), returned in lexicographic order and
// deterministic from seed.
SubsetList sample_subsets_count(int d_model, int k, uint64_t count, uint64_t seed);

// count = round(rate * population).
SubsetList sample_subsets_rate(int d_model, int k, double rate, uint64_t seed);

// rank-th k-subset of [0, d_model) in lexicographic order.
DimensionSubset unrank_subset(int d_model, int k, uint64_t rank);

struct SubsetScore {
    DimensionSubset subset;
    int layer = 0;
    Score valid;
    Score test;
};

struct ProbeReport {
    std::string experiment;
    std::string task;
    MetricKind metric = MetricKind::accuracy;
    int layer = 0;           // probed level
    int baseline_layer = 0;  // level of the all-dimensions baseline (final)
    Score baseline_valid;
    Score baseline_test;
    std::vector<SubsetScore> entries;  // ranked by valid desc, ties lexicographic
    SamplingInfo sampling;
};

// Shared evaluation state: quantized activation vectors plus the trained
// head. Built once, probed many times; probing never mutates it.
struct ProbeContext {
    ActivationSet acts;
    Head head;
    MetricKind metric = MetricKind::accuracy;
    Pooling pooling = Pooling::cls;
    std::string task_name;

    int d_model() const { return acts.d_model; }
    int final_level() const { return acts.final_level(); }
};

ProbeContext make_probe_context(const FineTunedModel& model, const TaskDataset& data);

// Head prediction on a vector with all coordinates outside the subset set to
// zero (nullptr = all dimensions kept).
double masked_head_inference(const ProbeContext& ctx, const std::vector<double>& vec,
                             const std::vector<int>* subset);

// Same prediction computed by zeroing the head's first-stage weight rows for
// unselected dimensions. Kept as the independent route for the masking
// equivalence check; not used by the sweeps.
double masked_head_inference_weight_zeroed(const Head& head, const std::vector<double>& vec,
                                           const std::vector<int>* subset);

Score subset_score(const ProbeContext& ctx, Split split, int level, const DimensionSubset* subset);

// Scores every subset on valid and test at `layer`, ranks by valid score
// (undefined last, ties lexicographic) and attaches the all-dimensions
// baseline. Subsets must be distinct.
ProbeReport sweep_subsets(const ProbeContext& ctx, const SubsetList& subsets, int layer,
                          const std::string& experiment = "probe-dims");

struct LeaveOneOutRow {
    int removed_dim = 0;
    DimensionSubset pair;
    Score valid;
    Score test;
};

// For a 3-dimension set, evaluates the three 2-subsets at the final level,
// in removed-dimension order.
std::vector<LeaveOneOutRow> leave_one_out(const ProbeContext& ctx, const DimensionSubset& triple);

struct TripleLoo {
    SubsetScore triple;
    std::vector<LeaveOneOutRow> rows;
};

// Ranks dimensions by their largest validation drop (triple score minus
// pair-without-dim score, undefined scores floored to the metric minimum)
// across the given triples; returns the top_dims ids, ties to the lower id.
std::vector<int> effective_dims(const std::vector<TripleLoo>& triples, MetricKind metric, int top_dims);

// sweep_subsets over all C(5,2) pairs of the given dimensions, final level.
ProbeReport pair_combinations(const ProbeContext& ctx, const std::vector<int>& dims);

struct EffectiveDimsResult {
    ProbeReport triples_report;   // full ranked sweep of the input triples
    std::vector<TripleLoo> loo;   // leave-one-out over the top triples
    std::vector<int> dims;        // effective dimension ids
    ProbeReport pairs_report;     // pair combinations of the effective dims
};

// The full identification pipeline: sweep triples, take the top top_triples
// by valid score, leave-one-out each, pick top_dims effective dimensions,
// then evaluate their pair combinations.
EffectiveDimsResult effective_dims_pipeline(const ProbeContext& ctx, const SubsetList& triples,
                                            int top_triples = 10, int top_dims = 5);

// Evaluates the same subset list against the CLS vector of every level with
// the final-level head; keeps the top_k rows per level.
std::vector<ProbeReport> layer_sweep(const ProbeContext& ctx, const SubsetList& subsets, int top_k = 5);

// Fixed-width score histogram: bin b counts scores in [b/100, (b+1)/100).
struct Histogram {
    int min_bin = 0;
    std::vector<uint64_t> counts;
    uint64_t undefined = 0;
    uint64_t total = 0;
};

Histogram score_histogram(const std::vector<SubsetScore>& entries, MetricKind metric, bool use_test);

struct DropoutAblationResult {
    ProbeReport with_dropout;
    ProbeReport without_dropout;
    Histogram hist_with;
    Histogram hist_without;
    uint64_t above_with = 0;  // test scores >= threshold
    uint64_t above_without = 0;
    double threshold = 0.0;
};

// Fine-tunes twice with matched seeds (cfg.dropout_rate vs 0.0), sweeps the
// identical subsets at the final level, and bins the test scores.
DropoutAblationResult dropout_ablation(const EncoderWeights& pretrained, const TaskDataset& data,
                                       const FineTuneConfig& cfg, const SubsetList& subsets,
                                       double threshold);

// Test-split example ids predicted correctly with all dimensions but wrongly
// by every one of the five subsets. Classification only.
std::vector<uint32_t> consistent_error_set(const ProbeContext& ctx,
                                           const std::vector<DimensionSubset>& top5);

// Head training over an activation dump; the result supports every probe
// operation through make_probe_context.
struct DumpModel {
    ActivationSet acts;
    Head head;
    MetricKind metric = MetricKind::accuracy;
    FineTuneConfig config;
    std::vector<Score> valid_history;
    int best_epoch = 0;
};

DumpModel train_head_on_dump(const ActivationSet& dump, MetricKind metric, const FineTuneConfig& cfg);
ProbeContext make_probe_context(const DumpModel& model, const std::string& task_name);

}  // namespace redprobe
