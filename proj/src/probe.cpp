#include "redprobe/probe.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "redprobe/errors.hpp"

namespace redprobe {

void DimensionSubset::validate(int d_model) const {
    for (size_t i = 0; i < dims.size(); ++i) {
        if (dims[i] < 0 || dims[i] >= d_model) {
            throw IndexError("subset: dimension " + std::to_string(dims[i]) + " outside d_model " +
                             std::to_string(d_model));
        }
        if (i > 0 && dims[i] <= dims[i - 1]) {
            throw ValidationError("subset: indices must be strictly increasing");
        }
    }
}

std::string DimensionSubset::to_string() const {
    std::string s;
    for (size_t i = 0; i < dims.size(); ++i) {
        if (i > 0) {
            s += '-';
        }
        s += std::to_string(dims[i]);
    }
    return s;
}

bool lex_less(const DimensionSubset& a, const DimensionSubset& b) {
    return std::lexicographical_compare(a.dims.begin(), a.dims.end(), b.dims.begin(), b.dims.end());
}

bool subsets_equal(const DimensionSubset& a, const DimensionSubset& b) {
    return a.dims == b.dims;
}

uint64_t subset_population(int d_model, int k) {
    if (k < 0 || d_model < 0 || k > d_model) {
        throw SamplingError("subset_population: need 0 <= k <= d_model");
    }
    unsigned __int128 c = 1;
    for (int i = 1; i <= k; ++i) {
        c = c * static_cast<unsigned>(d_model - k + i) / static_cast<unsigned>(i);
        if (c > static_cast<unsigned __int128>(UINT64_MAX)) {
            throw SamplingError("subset_population: C(" + std::to_string(d_model) + ", " +
                                std::to_string(k) + ") overflows 64 bits");
        }
    }
    return static_cast<uint64_t>(c);
}

DimensionSubset unrank_subset(int d_model, int k, uint64_t rank) {
    DimensionSubset s;
    s.dims.reserve(k);
    uint64_t r = rank;
    int v = 0;
    for (int i = 0; i < k; ++i) {
        while (true) {
            const uint64_t block = subset_population(d_model - 1 - v, k - 1 - i);
            if (r < block) {
                s.dims.push_back(v);
                ++v;
                break;
            }
            r -= block;
            ++v;
        }
    }
    return s;
}

SubsetList enumerate_subsets(int d_model, int k) {
    const uint64_t population = subset_population(d_model, k);
    SubsetList list;
    list.info = {k, population, population, 0.0, 0, "exhaustive"};
    list.subsets.reserve(population);

    std::vector<int> cur(k);
    for (int i = 0; i < k; ++i) {
        cur[i] = i;
    }
    while (true) {
        list.subsets.push_back(DimensionSubset{cur});
        int i = k - 1;
        while (i >= 0 && cur[i] == d_model - k + i) {
            --i;
        }
        if (i < 0) {
            break;
        }
        ++cur[i];
        for (int j = i + 1; j < k; ++j) {
            cur[j] = cur[j - 1] + 1;
        }
    }
    return list;
}

SubsetList sample_subsets_count(int d_model, int k, uint64_t count, uint64_t seed) {
    const uint64_t population = subset_population(d_model, k);
    if (count > population) {
        throw SamplingError("sample_subsets: requested " + std::to_string(count) + " of only " +
                            std::to_string(population) + " subsets");
    }
    Rng rng(seed);
    // Floyd's algorithm: exactly `count` draws, no rejection loop.
    std::unordered_set<uint64_t> ranks;
    ranks.reserve(count * 2);
    for (uint64_t j = population - count; j < population; ++j) {
        const uint64_t r = rng.uniform_u64(j + 1);
        if (!ranks.insert(r).second) {
            ranks.insert(j);
        }
    }
    std::vector<uint64_t> sorted(ranks.begin(), ranks.end());
    std::sort(sorted.begin(), sorted.end());

    SubsetList list;
    list.info = {k, population, count, 0.0, seed, "count"};
    list.subsets.reserve(count);
    for (uint64_t r : sorted) {
        list.subsets.push_back(unrank_subset(d_model, k, r));
    }
    return list;
}

SubsetList sample_subsets_rate(int d_model, int k, double rate, uint64_t seed) {
    if (rate <= 0.0 || rate > 1.0) {
        throw ConfigError("sample_subsets: rate must be in (0, 1]");
    }
    const uint64_t population = subset_population(d_model, k);
    const uint64_t count = static_cast<uint64_t>(std::llround(rate * static_cast<double>(population)));
    SubsetList list = sample_subsets_count(d_model, k, count, seed);
    list.info.rate = rate;
    list.info.mode = "rate";
    return list;
}

ProbeContext make_probe_context(const FineTunedModel& model, const TaskDataset& data) {
    ProbeContext ctx;
    ctx.acts = build_activation_set(model.weights, data);
    ctx.head = model.head;
    ctx.metric = model.metric;
    ctx.pooling = model.config.pooling;
    ctx.task_name = data.spec.name;
    return ctx;
}

double masked_head_inference(const ProbeContext& ctx, const std::vector<double>& vec,
                             const std::vector<int>* subset) {
    return predict_masked(ctx.head, vec, subset);
}

double masked_head_inference_weight_zeroed(const Head& head, const std::vector<double>& vec,
                                           const std::vector<int>* subset) {
    if (subset == nullptr) {
        return predict_masked(head, vec, nullptr);
    }
    Head zeroed = head;
    std::vector<uint8_t> keep(head.d_in, 0);
    for (int d : *subset) {
        keep[d] = 1;
    }
    for (int i = 0; i < head.d_in; ++i) {
        if (!keep[i]) {
            for (int j = 0; j < zeroed.w1.value.cols(); ++j) {
                zeroed.w1.value(i, j) = 0.0;
            }
        }
    }
    return predict_masked(zeroed, vec, nullptr);
}

Score subset_score(const ProbeContext& ctx, Split split, int level, const DimensionSubset* subset) {
    return score_on_activations(ctx.acts, ctx.head, ctx.metric, ctx.pooling, split, level,
                                subset == nullptr ? nullptr : &subset->dims);
}

namespace {

bool entry_before(const SubsetScore& a, const SubsetScore& b) {
    if (score_greater(a.valid, b.valid)) {
        return true;
    }
    if (score_greater(b.valid, a.valid)) {
        return false;
    }
    return lex_less(a.subset, b.subset);
}

void require_distinct(const std::vector<DimensionSubset>& subsets) {
    std::vector<const DimensionSubset*> ptrs;
    ptrs.reserve(subsets.size());
    for (const auto& s : subsets) {
        ptrs.push_back(&s);
    }
    std::sort(ptrs.begin(), ptrs.end(),
              [](const DimensionSubset* a, const DimensionSubset* b) { return lex_less(*a, *b); });
    for (size_t i = 1; i < ptrs.size(); ++i) {
        if (subsets_equal(*ptrs[i - 1], *ptrs[i])) {
            throw ValidationError("sweep: duplicate subset " + ptrs[i]->to_string());
        }
    }
}

ProbeReport sweep_at_level(const ProbeContext& ctx, const SubsetList& subsets, int layer,
                           const std::string& experiment) {
    ProbeReport report;
    report.experiment = experiment;
    report.task = ctx.task_name;
    report.metric = ctx.metric;
    report.layer = layer;
    report.baseline_layer = ctx.final_level();
    report.sampling = subsets.info;
    report.baseline_valid = subset_score(ctx, Split::valid, ctx.final_level(), nullptr);
    report.baseline_test = subset_score(ctx, Split::test, ctx.final_level(), nullptr);
    report.entries.reserve(subsets.subsets.size());
    for (const auto& s : subsets.subsets) {
        SubsetScore row;
        row.subset = s;
        row.layer = layer;
        row.valid = subset_score(ctx, Split::valid, layer, &s);
        row.test = subset_score(ctx, Split::test, layer, &s);
        report.entries.push_back(std::move(row));
    }
    std::sort(report.entries.begin(), report.entries.end(), entry_before);
    return report;
}

}  // namespace

ProbeReport sweep_subsets(const ProbeContext& ctx, const SubsetList& subsets, int layer,
                          const std::string& experiment) {
    if (subsets.subsets.empty()) {
        throw ValidationError("sweep: subset list is empty");
    }
    for (const auto& s : subsets.subsets) {
        s.validate(ctx.d_model());
    }
    require_distinct(subsets.subsets);
    if (layer < 0 || layer >= ctx.acts.n_levels) {
        throw IndexError("sweep: layer " + std::to_string(layer) + " outside [0, " +
                         std::to_string(ctx.acts.n_levels - 1) + "]");
    }
    return sweep_at_level(ctx, subsets, layer, experiment);
}

std::vector<LeaveOneOutRow> leave_one_out(const ProbeContext& ctx, const DimensionSubset& triple) {
    if (triple.dims.size() != 3) {
        throw ValidationError("leave_one_out: need exactly 3 dimensions, got " +
                              std::to_string(triple.dims.size()));
    }
    triple.validate(ctx.d_model());
    std::vector<LeaveOneOutRow> rows;
    rows.reserve(3);
    for (int removed : triple.dims) {
        LeaveOneOutRow row;
        row.removed_dim = removed;
        for (int d : triple.dims) {
            if (d != removed) {
                row.pair.dims.push_back(d);
            }
        }
        row.valid = subset_score(ctx, Split::valid, ctx.final_level(), &row.pair);
        row.test = subset_score(ctx, Split::test, ctx.final_level(), &row.pair);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<int> effective_dims(const std::vector<TripleLoo>& triples, MetricKind metric, int top_dims) {
    if (triples.empty()) {
        throw InsufficientDataError("effective_dims: no triples");
    }
    const double floor = metric_floor(metric);
    // dim -> max drop across the triples it appears in
    std::vector<std::pair<int, double>> drops;
    auto value_or_floor = [floor](const Score& s) { return s.has_value() ? *s : floor; };
    for (const auto& t : triples) {
        const double triple_valid = value_or_floor(t.triple.valid);
        for (const auto& row : t.rows) {
            const double drop = triple_valid - value_or_floor(row.valid);
            auto it = std::find_if(drops.begin(), drops.end(),
                                   [&](const auto& p) { return p.first == row.removed_dim; });
            if (it == drops.end()) {
                drops.emplace_back(row.removed_dim, drop);
            } else {
                it->second = std::max(it->second, drop);
            }
        }
    }
    std::sort(drops.begin(), drops.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) {
            return a.second > b.second;
        }
        return a.first < b.first;
    });
    std::vector<int> dims;
    for (const auto& [dim, drop] : drops) {
        if (static_cast<int>(dims.size()) == top_dims) {
            break;
        }
        dims.push_back(dim);
    }
    return dims;
}

ProbeReport pair_combinations(const ProbeContext& ctx, const std::vector<int>& dims) {
    if (dims.size() != 5) {
        throw ValidationError("pair_combinations: need exactly 5 dimensions, got " +
                              std::to_string(dims.size()));
    }
    std::vector<int> sorted = dims;
    std::sort(sorted.begin(), sorted.end());
    for (size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i] == sorted[i - 1]) {
            throw ValidationError("pair_combinations: duplicate dimension " + std::to_string(sorted[i]));
        }
    }
    SubsetList pairs;
    pairs.info = {2, subset_population(5, 2), 10, 0.0, 0, "pairs-of-effective"};
    for (size_t i = 0; i < sorted.size(); ++i) {
        for (size_t j = i + 1; j < sorted.size(); ++j) {
            pairs.subsets.push_back(DimensionSubset{{sorted[i], sorted[j]}});
        }
    }
    std::sort(pairs.subsets.begin(), pairs.subsets.end(), lex_less);
    return sweep_subsets(ctx, pairs, ctx.final_level(), "probe-effective-pairs");
}

EffectiveDimsResult effective_dims_pipeline(const ProbeContext& ctx, const SubsetList& triples,
                                            int top_triples, int top_dims) {
    EffectiveDimsResult result;
    result.triples_report = sweep_subsets(ctx, triples, ctx.final_level(), "probe-effective-triples");
    if (static_cast<int>(result.triples_report.entries.size()) < top_triples) {
        throw InsufficientDataError("effective_dims: " +
                                    std::to_string(result.triples_report.entries.size()) +
                                    " ranked triples, need " + std::to_string(top_triples));
    }
    for (int i = 0; i < top_triples; ++i) {
        TripleLoo t;
        t.triple = result.triples_report.entries[i];
        t.rows = leave_one_out(ctx, t.triple.subset);
        result.loo.push_back(std::move(t));
    }
    result.dims = effective_dims(result.loo, ctx.metric, top_dims);
    result.pairs_report = pair_combinations(ctx, result.dims);
    return result;
}

std::vector<ProbeReport> layer_sweep(const ProbeContext& ctx, const SubsetList& subsets, int top_k) {
    std::vector<ProbeReport> reports;
    reports.reserve(ctx.acts.n_levels);
    for (int level = 0; level < ctx.acts.n_levels; ++level) {
        ProbeReport report = sweep_subsets(ctx, subsets, level, "probe-layers");
        if (static_cast<int>(report.entries.size()) > top_k) {
            report.entries.resize(top_k);
        }
        reports.push_back(std::move(report));
    }
    return reports;
}

Histogram score_histogram(const std::vector<SubsetScore>& entries, MetricKind metric, bool use_test) {
    Histogram h;
    if (metric == MetricKind::accuracy) {
        h.min_bin = 0;
        h.counts.assign(101, 0);
    } else {
        h.min_bin = -100;
        h.counts.assign(201, 0);
    }
    for (const auto& e : entries) {
        const Score& s = use_test ? e.test : e.valid;
        h.total += 1;
        if (!s.has_value()) {
            h.undefined += 1;
            continue;
        }
        int bin = static_cast<int>(std::floor(*s * 100.0));
        bin = std::clamp(bin, h.min_bin, h.min_bin + static_cast<int>(h.counts.size()) - 1);
        h.counts[bin - h.min_bin] += 1;
    }
    return h;
}

DropoutAblationResult dropout_ablation(const EncoderWeights& pretrained, const TaskDataset& data,
                                       const FineTuneConfig& cfg, const SubsetList& subsets,
                                       double threshold) {
    FineTuneConfig without = cfg;
    without.dropout_rate = 0.0;

    DropoutAblationResult result;
    result.threshold = threshold;

    const FineTunedModel model_with = finetune(pretrained, data, cfg);
    const FineTunedModel model_without = finetune(pretrained, data, without);

    const ProbeContext ctx_with = make_probe_context(model_with, data);
    const ProbeContext ctx_without = make_probe_context(model_without, data);

    result.with_dropout = sweep_subsets(ctx_with, subsets, ctx_with.final_level(), "dropout-on");
    result.without_dropout =
        sweep_subsets(ctx_without, subsets, ctx_without.final_level(), "dropout-off");

    result.hist_with = score_histogram(result.with_dropout.entries, ctx_with.metric, true);
    result.hist_without = score_histogram(result.without_dropout.entries, ctx_without.metric, true);

    for (const auto& e : result.with_dropout.entries) {
        result.above_with += e.test.has_value() && *e.test >= threshold ? 1 : 0;
    }
    for (const auto& e : result.without_dropout.entries) {
        result.above_without += e.test.has_value() && *e.test >= threshold ? 1 : 0;
    }
    return result;
}

std::vector<uint32_t> consistent_error_set(const ProbeContext& ctx,
                                           const std::vector<DimensionSubset>& top5) {
    if (ctx.acts.label_kind != 0) {
        throw UnsupportedTaskError("consistent_error_set: defined for classification tasks only");
    }
    if (top5.size() != 5) {
        throw ValidationError("consistent_error_set: need exactly 5 subsets, got " +
                              std::to_string(top5.size()));
    }
    for (const auto& s : top5) {
        s.validate(ctx.d_model());
    }
    std::vector<uint32_t> ids;
    const int final = ctx.final_level();
    for (const auto& ex : ctx.acts.examples) {
        if (ex.split != split_code(Split::test)) {
            continue;
        }
        const auto& vec = ctx.acts.vector_of(ex, final, ctx.pooling);
        const int gold = static_cast<int>(std::llround(ex.label));
        const int all_pred = static_cast<int>(std::llround(predict_masked(ctx.head, vec, nullptr)));
        if (all_pred != gold) {
            continue;
        }
        bool all_wrong = true;
        for (const auto& s : top5) {
            const int pred = static_cast<int>(std::llround(predict_masked(ctx.head, vec, &s.dims)));
            if (pred == gold) {
                all_wrong = false;
                break;
            }
        }
        if (all_wrong) {
            ids.push_back(ex.id);
        }
    }
    return ids;
}

DumpModel train_head_on_dump(const ActivationSet& dump, MetricKind metric, const FineTuneConfig& cfg) {
    if (dump.examples.empty()) {
        throw DataError("train_head_on_dump: dump has no examples");
    }
    if (dump.label_kind == 1) {
        if (metric != MetricKind::pearson) {
            throw DataError("train_head_on_dump: scalar-labeled dump pairs only with pearson");
        }
    } else {
        if (metric == MetricKind::pearson) {
            throw DataError("train_head_on_dump: class-labeled dump needs accuracy or matthews");
        }
        if (metric == MetricKind::matthews && dump.n_classes != 2) {
            throw DataError("train_head_on_dump: matthews requires a binary dump");
        }
        if (dump.n_classes < 2) {
            throw DataError("train_head_on_dump: dump must declare at least 2 classes");
        }
    }
    DumpModel model;
    model.acts = dump;
    model.metric = metric;
    model.config = cfg;
    HeadTrainResult res = train_head(dump, metric, cfg, cfg.seed);
    model.head = std::move(res.head);
    model.valid_history = std::move(res.valid_history);
    model.best_epoch = res.best_epoch;
    return model;
}

ProbeContext make_probe_context(const DumpModel& model, const std::string& task_name) {
    ProbeContext ctx;
    ctx.acts = model.acts;
    ctx.head = model.head;
    ctx.metric = model.metric;
    ctx.pooling = model.config.pooling;
    ctx.task_name = task_name;
    return ctx;
}

}  // namespace redprobe
