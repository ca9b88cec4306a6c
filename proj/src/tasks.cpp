#include "redprobe/tasks.hpp"

#include <algorithm>
#include <cmath>

#include "redprobe/errors.hpp"

namespace redprobe {

bool score_less(const Score& a, const Score& b) {
    if (!a.has_value()) {
        return b.has_value();
    }
    if (!b.has_value()) {
        return false;
    }
    return *a < *b;
}

bool score_greater(const Score& a, const Score& b) {
    return score_less(b, a);
}

double metric_floor(MetricKind kind) {
    return kind == MetricKind::accuracy ? 0.0 : -1.0;
}

std::string metric_name(MetricKind kind) {
    switch (kind) {
        case MetricKind::accuracy: return "accuracy";
        case MetricKind::pearson: return "pearson";
        case MetricKind::matthews: return "matthews";
    }
    return "?";
}

std::string task_kind_name(TaskKind kind) {
    switch (kind) {
        case TaskKind::single_cls: return "single_cls";
        case TaskKind::pair_cls: return "pair_cls";
        case TaskKind::regression: return "regression";
    }
    return "?";
}

void TaskSpec::validate(const EncoderConfig& enc) const {
    enc.validate();
    if (noise_rate < 0.0 || noise_rate >= 0.5) {
        throw ConfigError("task: noise_rate must be in [0, 0.5)");
    }
    if (n_examples < 30) {
        throw DataError("task: n_examples " + std::to_string(n_examples) +
                        " too small; a 10% split would be empty below 30");
    }
    if (kind == TaskKind::regression) {
        if (metric != MetricKind::pearson) {
            throw ConfigError("task: regression pairs only with the pearson metric");
        }
    } else {
        if (n_classes < 2) {
            throw ConfigError("task: classification needs at least 2 classes");
        }
        if (metric == MetricKind::pearson) {
            throw ConfigError("task: pearson is reserved for regression tasks");
        }
        if (metric == MetricKind::matthews && n_classes != 2) {
            throw ConfigError("task: matthews requires binary classification");
        }
        if (n_classes != 2) {
            throw ConfigError("task: planted rules are binary; n_classes must be 2");
        }
    }
    const bool pair = kind == TaskKind::pair_cls;
    if (rule == RuleId::pair_and && !pair) {
        throw ConfigError("task: pair_and rule requires a pair task");
    }
    if (rule != RuleId::pair_and && pair) {
        throw ConfigError("task: pair tasks use the pair_and rule");
    }
    if ((rule == RuleId::count_fraction) != (kind == TaskKind::regression)) {
        throw ConfigError("task: count_fraction rule pairs exactly with regression");
    }
    const int min_needed = (rule == RuleId::presence_and || rule == RuleId::presence_xor) ? 4 : 2;
    if (min_content < min_needed || max_content < min_content) {
        throw ConfigError("task: content length range invalid (rule needs at least " +
                          std::to_string(min_needed) + " content positions)");
    }
    const int needed = pair ? 2 + 2 * max_content : 1 + max_content;
    if (needed > enc.max_len) {
        throw ConfigError("task: max content length needs " + std::to_string(needed) +
                          " positions but max_len is " + std::to_string(enc.max_len));
    }
    for (int t : {trigger_a, trigger_b}) {
        if (t < kFirstContentId || t >= enc.vocab_size) {
            throw ConfigError("task: trigger token " + std::to_string(t) + " outside content range");
        }
    }
    if (trigger_a == trigger_b) {
        throw ConfigError("task: trigger tokens must be distinct");
    }
}

const std::vector<int>& TaskDataset::split(Split s) const {
    switch (s) {
        case Split::train: return train_idx;
        case Split::valid: return valid_idx;
        case Split::test: return test_idx;
    }
    return train_idx;
}

int TaskDataset::n_outputs() const {
    return spec.kind == TaskKind::regression ? 1 : spec.n_classes;
}

namespace {

double quantize_label(double x) {
    return static_cast<double>(static_cast<float>(x));
}

// Content tokens that are neither trigger, so presence is controlled exactly.
int draw_distractor(const TaskSpec& spec, const EncoderConfig& enc, Rng& rng) {
    const int n_content = enc.vocab_size - kFirstContentId;
    while (true) {
        const int t = kFirstContentId + static_cast<int>(rng.uniform_u64(n_content));
        if (t != spec.trigger_a && t != spec.trigger_b) {
            return t;
        }
    }
}

// Fills `content` with distractors, then plants `count` copies of `trigger`
// at distinct random positions.
void plant(std::vector<int>& content, int trigger, int count, Rng& rng) {
    std::vector<int> positions(content.size());
    for (size_t i = 0; i < positions.size(); ++i) {
        positions[i] = static_cast<int>(i);
    }
    rng.shuffle(positions);
    for (int i = 0; i < count; ++i) {
        content[positions[i]] = trigger;
    }
}

std::vector<int> make_segment(const TaskSpec& spec, const EncoderConfig& enc, Rng& rng, int trigger,
                              bool present) {
    const int len = static_cast<int>(rng.uniform_int(spec.min_content, spec.max_content));
    std::vector<int> content(len);
    for (auto& t : content) {
        t = draw_distractor(spec, enc, rng);
    }
    if (present) {
        const int copies = static_cast<int>(rng.uniform_int(1, std::min(3, len)));
        plant(content, trigger, copies, rng);
    }
    return content;
}

bool contains(const std::vector<int>& v, int t) {
    return std::find(v.begin(), v.end(), t) != v.end();
}

}  // namespace

double rule_label(const TaskSpec& spec, const Example& ex) {
    // Split tokens back into content segments (drop CLS, split at SEP).
    std::vector<int> seg_a, seg_b;
    bool after_sep = false;
    for (size_t i = 1; i < ex.tokens.size(); ++i) {
        const int t = ex.tokens[i];
        if (t == kSepId) {
            after_sep = true;
            continue;
        }
        if (t == kPadId) {
            continue;
        }
        (after_sep ? seg_b : seg_a).push_back(t);
    }
    switch (spec.rule) {
        case RuleId::presence:
            return contains(seg_a, spec.trigger_a) ? 1.0 : 0.0;
        case RuleId::presence_and:
            return (contains(seg_a, spec.trigger_a) && contains(seg_a, spec.trigger_b)) ? 1.0 : 0.0;
        case RuleId::presence_xor:
            return (contains(seg_a, spec.trigger_a) != contains(seg_a, spec.trigger_b)) ? 1.0 : 0.0;
        case RuleId::pair_and:
            return (contains(seg_a, spec.trigger_a) && contains(seg_b, spec.trigger_b)) ? 1.0 : 0.0;
        case RuleId::count_fraction: {
            const int count = static_cast<int>(std::count(seg_a.begin(), seg_a.end(), spec.trigger_a));
            return quantize_label(static_cast<double>(count) / static_cast<double>(seg_a.size()));
        }
    }
    return 0.0;
}

TaskDataset generate_task(const TaskSpec& spec, const EncoderConfig& enc) {
    spec.validate(enc);
    Rng rng(spec.seed);
    const int n = spec.n_examples;

    TaskDataset ds;
    ds.spec = spec;
    ds.examples.reserve(n);

    // Exactly balanced class labels before noise.
    std::vector<int> planted_labels;
    if (spec.kind != TaskKind::regression) {
        planted_labels.assign(n, 0);
        for (int i = n / 2; i < n; ++i) {
            planted_labels[i] = 1;
        }
        rng.shuffle(planted_labels);
    }

    for (int i = 0; i < n; ++i) {
        Example ex;
        double label = 0.0;
        switch (spec.rule) {
            case RuleId::presence: {
                label = planted_labels[i];
                const auto content = make_segment(spec, enc, rng, spec.trigger_a, label > 0.5);
                const auto e = encode_single(content);
                ex.tokens = e.tokens;
                ex.segments = e.segments;
                break;
            }
            case RuleId::presence_and:
            case RuleId::presence_xor: {
                label = planted_labels[i];
                bool a_present, b_present;
                if (spec.rule == RuleId::presence_and) {
                    if (label > 0.5) {
                        a_present = true;
                        b_present = true;
                    } else {
                        switch (rng.uniform_u64(3)) {
                            case 0: a_present = true, b_present = false; break;
                            case 1: a_present = false, b_present = true; break;
                            default: a_present = false, b_present = false; break;
                        }
                    }
                } else if (label > 0.5) {
                    a_present = rng.bernoulli(0.5);
                    b_present = !a_present;
                } else {
                    a_present = rng.bernoulli(0.5);
                    b_present = a_present;
                }
                const int len = static_cast<int>(rng.uniform_int(spec.min_content, spec.max_content));
                std::vector<int> content(len);
                for (auto& t : content) {
                    t = draw_distractor(spec, enc, rng);
                }
                // Plant into disjoint position pools so both fit.
                std::vector<int> positions(len);
                for (int p = 0; p < len; ++p) {
                    positions[p] = p;
                }
                rng.shuffle(positions);
                int cursor = 0;
                if (a_present) {
                    const int copies = static_cast<int>(rng.uniform_int(1, 2));
                    for (int c = 0; c < copies; ++c) {
                        content[positions[cursor++]] = spec.trigger_a;
                    }
                }
                if (b_present) {
                    const int copies = static_cast<int>(rng.uniform_int(1, 2));
                    for (int c = 0; c < copies; ++c) {
                        content[positions[cursor++]] = spec.trigger_b;
                    }
                }
                const auto e = encode_single(content);
                ex.tokens = e.tokens;
                ex.segments = e.segments;
                break;
            }
            case RuleId::pair_and: {
                label = planted_labels[i];
                bool a_present, b_present;
                if (label > 0.5) {
                    a_present = true;
                    b_present = true;
                } else {
                    switch (rng.uniform_u64(3)) {
                        case 0: a_present = true, b_present = false; break;
                        case 1: a_present = false, b_present = true; break;
                        default: a_present = false, b_present = false; break;
                    }
                }
                const auto seg_a = make_segment(spec, enc, rng, spec.trigger_a, a_present);
                const auto seg_b = make_segment(spec, enc, rng, spec.trigger_b, b_present);
                const auto e = encode_pair(seg_a, seg_b);
                ex.tokens = e.tokens;
                ex.segments = e.segments;
                break;
            }
            case RuleId::count_fraction: {
                const int len = static_cast<int>(rng.uniform_int(spec.min_content, spec.max_content));
                std::vector<int> content(len);
                for (auto& t : content) {
                    t = draw_distractor(spec, enc, rng);
                }
                const int count = static_cast<int>(rng.uniform_int(0, len));
                plant(content, spec.trigger_a, count, rng);
                label = static_cast<double>(count) / static_cast<double>(len);
                const auto e = encode_single(content);
                ex.tokens = e.tokens;
                ex.segments = e.segments;
                break;
            }
        }

        if (spec.noise_rate > 0.0 && rng.bernoulli(spec.noise_rate)) {
            if (spec.kind == TaskKind::regression) {
                label = std::clamp(label + rng.uniform_real(-0.25, 0.25), 0.0, 1.0);
            } else {
                label = 1.0 - label;
            }
        }
        ex.label = quantize_label(label);
        ds.examples.push_back(std::move(ex));
    }

    // Seeded shuffle, then train | valid | test contiguously.
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) {
        order[i] = i;
    }
    rng.shuffle(order);
    const int n_valid = n / 10;
    const int n_test = n / 10;
    const int n_train = n - n_valid - n_test;
    ds.train_idx.assign(order.begin(), order.begin() + n_train);
    ds.valid_idx.assign(order.begin() + n_train, order.begin() + n_train + n_valid);
    ds.test_idx.assign(order.begin() + n_train + n_valid, order.end());
    return ds;
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& gold) {
    if (predictions.size() != gold.size()) {
        throw DimensionError("accuracy: " + std::to_string(predictions.size()) + " predictions vs " +
                             std::to_string(gold.size()) + " gold labels");
    }
    if (predictions.empty()) {
        throw DataError("accuracy: empty input");
    }
    size_t correct = 0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        correct += predictions[i] == gold[i] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

Score pearson(const std::vector<double>& predictions, const std::vector<double>& gold) {
    if (predictions.size() != gold.size()) {
        throw DimensionError("pearson: " + std::to_string(predictions.size()) + " predictions vs " +
                             std::to_string(gold.size()) + " gold values");
    }
    if (predictions.size() < 2) {
        throw DataError("pearson: need at least 2 points");
    }
    const size_t n = predictions.size();
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += predictions[i];
        my += gold[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    bool x_const = true, y_const = true;
    for (size_t i = 0; i < n; ++i) {
        const double dx = predictions[i] - mx;
        const double dy = gold[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
        x_const = x_const && predictions[i] == predictions[0];
        y_const = y_const && gold[i] == gold[0];
    }
    if (x_const || y_const || sxx == 0.0 || syy == 0.0) {
        return std::nullopt;
    }
    return sxy / std::sqrt(sxx * syy);
}

double matthews(const std::vector<int>& predictions, const std::vector<int>& gold) {
    if (predictions.size() != gold.size()) {
        throw DimensionError("matthews: " + std::to_string(predictions.size()) + " predictions vs " +
                             std::to_string(gold.size()) + " gold labels");
    }
    if (predictions.empty()) {
        throw DataError("matthews: empty input");
    }
    double tp = 0, tn = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        const int p = predictions[i], g = gold[i];
        if ((p != 0 && p != 1) || (g != 0 && g != 1)) {
            throw DataError("matthews: labels must be 0 or 1");
        }
        if (p == 1 && g == 1) {
            tp += 1;
        } else if (p == 0 && g == 0) {
            tn += 1;
        } else if (p == 1 && g == 0) {
            fp += 1;
        } else {
            fn += 1;
        }
    }
    const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    if (denom == 0.0) {
        return 0.0;
    }
    return (tp * tn - fp * fn) / std::sqrt(denom);
}

Score score_predictions(MetricKind kind, const std::vector<double>& predictions,
                        const std::vector<double>& gold) {
    if (kind == MetricKind::pearson) {
        return pearson(predictions, gold);
    }
    std::vector<int> p(predictions.size()), g(gold.size());
    for (size_t i = 0; i < predictions.size(); ++i) {
        p[i] = static_cast<int>(std::llround(predictions[i]));
    }
    for (size_t i = 0; i < gold.size(); ++i) {
        g[i] = static_cast<int>(std::llround(gold[i]));
    }
    if (kind == MetricKind::accuracy) {
        return accuracy(p, g);
    }
    return matthews(p, g);
}

}  // namespace redprobe
