#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "redprobe/errors.hpp"
#include "redprobe/tasks.hpp"

using namespace redprobe;

namespace {

EncoderConfig desk_config() {
    EncoderConfig enc;
    enc.seed = 7;
    return enc;
}

// Test-only oracles on independent code paths.

double oracle_accuracy(const std::vector<int>& p, const std::vector<int>& g) {
    size_t mismatches = 0;
    for (size_t i = 0; i < p.size(); ++i) {
        if (p[i] != g[i]) {
            ++mismatches;
        }
    }
    return 1.0 - static_cast<double>(mismatches) / static_cast<double>(p.size());
}

// Pearson via the raw-sum formula rather than centered moments.
double oracle_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

double oracle_matthews(const std::vector<int>& p, const std::vector<int>& g) {
    double table[2][2] = {{0, 0}, {0, 0}};
    for (size_t i = 0; i < p.size(); ++i) {
        table[p[i]][g[i]] += 1.0;
    }
    const double tp = table[1][1], tn = table[0][0], fp = table[1][0], fn = table[0][1];
    const double denom = std::sqrt(tp + fp) * std::sqrt(tp + fn) * std::sqrt(tn + fp) * std::sqrt(tn + fn);
    if (denom == 0.0) {
        return 0.0;
    }
    return (tp * tn - fp * fn) / denom;
}

}  // namespace

TEST_CASE("task generation is deterministic and splits are exact") {
    const EncoderConfig enc = desk_config();
    TaskSpec spec;
    spec.n_examples = 1000;
    spec.seed = 3;
    const TaskDataset a = generate_task(spec, enc);
    const TaskDataset b = generate_task(spec, enc);

    CHECK(a.train_idx.size() == 800);
    CHECK(a.valid_idx.size() == 100);
    CHECK(a.test_idx.size() == 100);
    CHECK(a.examples.size() == 1000);
    REQUIRE(a.examples.size() == b.examples.size());
    for (size_t i = 0; i < a.examples.size(); ++i) {
        CHECK(a.examples[i].tokens == b.examples[i].tokens);
        CHECK(a.examples[i].label == b.examples[i].label);
    }
    CHECK(a.train_idx == b.train_idx);

    // disjoint and exhaustive
    std::set<int> all;
    for (const auto* split : {&a.train_idx, &a.valid_idx, &a.test_idx}) {
        for (int i : *split) {
            CHECK(all.insert(i).second);
        }
    }
    CHECK(all.size() == 1000);
    CHECK(*all.begin() == 0);
    CHECK(*all.rbegin() == 999);
}

TEST_CASE("planted rules are recoverable at zero noise") {
    const EncoderConfig enc = desk_config();
    for (RuleId rule : {RuleId::presence, RuleId::presence_and, RuleId::presence_xor}) {
        TaskSpec spec;
        spec.rule = rule;
        spec.n_examples = 400;
        spec.seed = 11;
        const TaskDataset ds = generate_task(spec, enc);
        for (const auto& ex : ds.examples) {
            CHECK(rule_label(spec, ex) == ex.label);
        }
    }
    TaskSpec pair;
    pair.kind = TaskKind::pair_cls;
    pair.rule = RuleId::pair_and;
    pair.n_examples = 400;
    pair.seed = 12;
    for (const auto& ex : generate_task(pair, desk_config()).examples) {
        CHECK(rule_label(pair, ex) == ex.label);
    }
    TaskSpec reg;
    reg.kind = TaskKind::regression;
    reg.rule = RuleId::count_fraction;
    reg.metric = MetricKind::pearson;
    reg.n_examples = 400;
    reg.seed = 13;
    for (const auto& ex : generate_task(reg, desk_config()).examples) {
        CHECK(rule_label(reg, ex) == ex.label);
        CHECK(ex.label >= 0.0);
        CHECK(ex.label <= 1.0);
    }
}

TEST_CASE("classification labels are balanced and noise flips the stated fraction") {
    const EncoderConfig enc = desk_config();
    TaskSpec spec;
    spec.n_examples = 2000;
    spec.seed = 4;
    const TaskDataset clean = generate_task(spec, enc);
    int ones = 0;
    for (const auto& ex : clean.examples) {
        ones += ex.label > 0.5 ? 1 : 0;
    }
    CHECK(std::fabs(ones / 2000.0 - 0.5) <= 0.05);

    spec.noise_rate = 0.2;
    const TaskDataset noisy = generate_task(spec, enc);
    int flipped = 0;
    for (const auto& ex : noisy.examples) {
        flipped += rule_label(spec, ex) != ex.label ? 1 : 0;
    }
    CHECK(std::fabs(flipped / 2000.0 - 0.2) <= 0.05);
}

TEST_CASE("task validation rejects bad specs") {
    const EncoderConfig enc = desk_config();
    TaskSpec spec;
    spec.n_examples = 29;
    CHECK_THROWS_AS(generate_task(spec, enc), DataError);

    spec.n_examples = 100;
    spec.noise_rate = 0.5;
    CHECK_THROWS_AS(generate_task(spec, enc), ConfigError);

    spec.noise_rate = 0.0;
    spec.trigger_b = spec.trigger_a;
    CHECK_THROWS_AS(generate_task(spec, enc), ConfigError);

    TaskSpec reg;
    reg.kind = TaskKind::regression;
    reg.rule = RuleId::count_fraction;
    reg.metric = MetricKind::accuracy;  // regression pairs only with pearson
    reg.n_examples = 100;
    CHECK_THROWS_AS(generate_task(reg, enc), ConfigError);

    TaskSpec mcc3;
    mcc3.metric = MetricKind::matthews;
    mcc3.n_classes = 3;
    mcc3.n_examples = 100;
    CHECK_THROWS_AS(generate_task(mcc3, enc), ConfigError);
}

TEST_CASE("accuracy examples") {
    CHECK(accuracy({1, 0, 1}, {1, 0, 1}) == 1.0);
    CHECK(accuracy({1, 0, 1}, {0, 1, 0}) == 0.0);
    CHECK(accuracy({1, 1, 0, 0}, {1, 1, 0, 1}) == 0.75);
    CHECK_THROWS_AS(accuracy({1}, {1, 0}), DimensionError);
}

TEST_CASE("pearson examples and affine invariance") {
    const std::vector<double> x{0.1, 0.9, 0.4, 0.7, 0.2};
    std::vector<double> neg(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        neg[i] = -x[i];
    }
    CHECK(*pearson(x, x) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*pearson(x, neg) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK_FALSE(pearson({0.5, 0.5, 0.5}, {0.1, 0.2, 0.3}).has_value());
    CHECK_THROWS_AS(pearson({1.0}, {1.0}), DataError);

    Rng rng(9);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> a(20), b(20);
        for (int i = 0; i < 20; ++i) {
            a[i] = rng.uniform_real(-1.0, 1.0);
            b[i] = rng.uniform_real(-1.0, 1.0);
        }
        const double scale = rng.uniform_real(0.1, 5.0);
        const double shift = rng.uniform_real(-3.0, 3.0);
        std::vector<double> a2(20);
        for (int i = 0; i < 20; ++i) {
            a2[i] = scale * a[i] + shift;
        }
        CHECK(std::fabs(*pearson(a, b) - *pearson(a2, b)) <= 1e-9);
    }
}

TEST_CASE("matthews examples, conventions and symmetry") {
    CHECK(matthews({1, 0, 1, 0}, {1, 0, 1, 0}) == 1.0);
    CHECK(matthews({1, 1, 1, 1}, {1, 0, 1, 0}) == 0.0);  // one-class predictions
    // TP=2 TN=2 FP=1 FN=1
    CHECK(matthews({1, 1, 1, 0, 0, 0}, {1, 1, 0, 1, 0, 0}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK_THROWS_AS(matthews({2, 0}, {1, 0}), DataError);

    Rng rng(13);
    for (int t = 0; t < 300; ++t) {
        std::vector<int> p(30), g(30);
        for (int i = 0; i < 30; ++i) {
            p[i] = rng.bernoulli(0.5) ? 1 : 0;
            g[i] = rng.bernoulli(0.5) ? 1 : 0;
        }
        CHECK(matthews(p, g) == matthews(g, p));
    }
}

TEST_CASE("metrics agree with independent brute-force oracles") {
    Rng rng(17);
    for (int t = 0; t < 1000; ++t) {
        const int n = 5 + static_cast<int>(rng.uniform_u64(60));
        std::vector<int> p(n), g(n);
        std::vector<double> x(n), y(n);
        for (int i = 0; i < n; ++i) {
            p[i] = rng.bernoulli(0.5) ? 1 : 0;
            g[i] = rng.bernoulli(0.5) ? 1 : 0;
            x[i] = rng.uniform_real(-1.0, 1.0);
            y[i] = rng.uniform_real(-1.0, 1.0);
        }
        CHECK(std::fabs(accuracy(p, g) - oracle_accuracy(p, g)) <= 1e-12);
        CHECK(std::fabs(matthews(p, g) - oracle_matthews(p, g)) <= 1e-12);
        const Score r = pearson(x, y);
        REQUIRE(r.has_value());
        CHECK(std::fabs(*r - oracle_pearson(x, y)) <= 1e-12);
    }
}

TEST_CASE("undefined scores sort below every defined value") {
    const Score undef = std::nullopt;
    CHECK(score_less(undef, Score(-1.0)));
    CHECK(score_less(undef, Score(0.0)));
    CHECK_FALSE(score_less(Score(-1.0), undef));
    CHECK_FALSE(score_less(undef, undef));
    CHECK(score_greater(Score(-0.999), undef));
}
