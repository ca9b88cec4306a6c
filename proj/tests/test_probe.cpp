#include <cmath>
#include <set>

#include "doctest.h"
#include "redprobe/errors.hpp"
#include "redprobe/probe.hpp"

using namespace redprobe;

namespace {

// Synthetic probe context: hand-built activation vectors and a seeded head,
// no training involved.
ProbeContext synthetic_context(int d_model = 8, int n_levels = 3, int n = 90, uint64_t seed = 5,
                               bool regression = false) {
    ProbeContext ctx;
    ctx.acts.n_levels = n_levels;
    ctx.acts.d_model = d_model;
    ctx.acts.label_kind = regression ? 1 : 0;
    ctx.acts.n_classes = regression ? 0 : 2;
    ctx.metric = regression ? MetricKind::pearson : MetricKind::accuracy;
    ctx.pooling = Pooling::cls;
    ctx.task_name = "synthetic";
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        ActivationExample ex;
        ex.id = static_cast<uint32_t>(i);
        ex.label = regression ? rng.uniform_real(0.0, 1.0) : (rng.bernoulli(0.5) ? 1.0 : 0.0);
        ex.split = static_cast<uint8_t>(i % 3);  // train/valid/test round-robin
        ex.levels.resize(n_levels, std::vector<double>(d_model));
        for (auto& level : ex.levels) {
            for (auto& v : level) {
                v = rng.uniform_real(-1.0, 1.0);
            }
        }
        ex.maxpool = ex.levels.back();
        ctx.acts.examples.push_back(std::move(ex));
    }
    ctx.head = init_head(d_model, regression ? 1 : 2, 1, seed + 1);
    return ctx;
}

ActivationTrace trace_with_rows(const std::vector<std::vector<double>>& rows,
                                const std::vector<uint8_t>& mask) {
    ActivationTrace t;
    Matrix m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (size_t i = 0; i < rows.size(); ++i) {
        for (size_t j = 0; j < rows[i].size(); ++j) {
            m(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
        }
    }
    t.levels.push_back(m);
    t.mask = mask;
    return t;
}

}  // namespace

TEST_CASE("subset population matches the reference counts") {
    CHECK(subset_population(768, 2) == 294528);
    CHECK(subset_population(768, 3) == 75202816);
    CHECK(subset_population(32, 2) == 496);
    CHECK(subset_population(5, 2) == 10);
    CHECK(subset_population(4, 0) == 1);
    CHECK(subset_population(4, 4) == 1);
    CHECK_THROWS_AS(subset_population(768, 384), SamplingError);  // overflows 64 bits
    CHECK_THROWS_AS(subset_population(3, 4), SamplingError);
}

TEST_CASE("one percent sample of 768 choose 2 has exactly 2945 distinct subsets") {
    const SubsetList list = sample_subsets_rate(768, 2, 0.01, 9);
    CHECK(list.subsets.size() == 2945);
    CHECK(list.info.population == 294528);
    CHECK(list.info.count == 2945);
    std::set<std::string> seen;
    for (const auto& s : list.subsets) {
        CHECK(s.dims.size() == 2);
        CHECK(s.dims[0] < s.dims[1]);
        CHECK(seen.insert(s.to_string()).second);
    }
}

TEST_CASE("exhaustive enumeration is lexicographic and matches unranking") {
    const SubsetList list = enumerate_subsets(32, 2);
    REQUIRE(list.subsets.size() == 496);
    CHECK(list.subsets.front().dims == std::vector<int>{0, 1});
    CHECK(list.subsets.back().dims == std::vector<int>{30, 31});
    for (size_t r = 0; r < list.subsets.size(); ++r) {
        CHECK(unrank_subset(32, 2, r).dims == list.subsets[r].dims);
        if (r > 0) {
            CHECK(lex_less(list.subsets[r - 1], list.subsets[r]));
        }
    }
}

TEST_CASE("sampling is deterministic, errors on overdraw, and full-count equals exhaustive") {
    const SubsetList a = sample_subsets_count(32, 3, 100, 4);
    const SubsetList b = sample_subsets_count(32, 3, 100, 4);
    REQUIRE(a.subsets.size() == b.subsets.size());
    for (size_t i = 0; i < a.subsets.size(); ++i) {
        CHECK(a.subsets[i].dims == b.subsets[i].dims);
    }

    const SubsetList c = sample_subsets_count(32, 3, 100, 5);
    bool any_diff = false;
    for (size_t i = 0; i < c.subsets.size(); ++i) {
        any_diff = any_diff || c.subsets[i].dims != a.subsets[i].dims;
    }
    CHECK(any_diff);

    CHECK_THROWS_AS(sample_subsets_count(5, 2, 11, 1), SamplingError);
    CHECK_THROWS_AS(sample_subsets_rate(5, 2, 1.5, 1), ConfigError);

    const SubsetList full = sample_subsets_count(6, 2, 15, 3);
    const SubsetList ex = enumerate_subsets(6, 2);
    REQUIRE(full.subsets.size() == ex.subsets.size());
    for (size_t i = 0; i < full.subsets.size(); ++i) {
        CHECK(full.subsets[i].dims == ex.subsets[i].dims);
    }
}

TEST_CASE("masked inference equals weight-column zeroing") {
    const ProbeContext ctx = synthetic_context();
    Rng rng(8);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> vec(8);
        for (auto& v : vec) {
            v = rng.uniform_real(-2.0, 2.0);
        }
        std::vector<int> subset;
        for (int d = 0; d < 8; ++d) {
            if (rng.bernoulli(0.5)) {
                subset.push_back(d);
            }
        }
        const double a = masked_head_inference(ctx, vec, &subset);
        const double b = masked_head_inference_weight_zeroed(ctx.head, vec, &subset);
        CHECK(std::fabs(a - b) <= 1e-12);
    }

    // full subset bit-identical to unmasked
    std::vector<double> vec(8, 0.37);
    std::vector<int> full{0, 1, 2, 3, 4, 5, 6, 7};
    CHECK(masked_head_inference(ctx, vec, &full) == masked_head_inference(ctx, vec, nullptr));
}

TEST_CASE("maxpool token selection") {
    // three positions with norms 1, 3, 2
    const ActivationTrace t = trace_with_rows({{1.0, 0.0}, {0.0, 3.0}, {2.0, 0.0}}, {1, 1, 1});
    CHECK(maxpool_position(t) == 1);
    CHECK(maxpool_token_vector(t) == std::vector<double>{0.0, 3.0});

    // scaling all vectors by a positive factor keeps the choice
    const ActivationTrace t2 = trace_with_rows({{2.0, 0.0}, {0.0, 6.0}, {4.0, 0.0}}, {1, 1, 1});
    CHECK(maxpool_position(t2) == maxpool_position(t));

    // padding positions are excluded
    const ActivationTrace t3 = trace_with_rows({{1.0, 0.0}, {0.0, 3.0}, {2.0, 0.0}}, {1, 0, 1});
    CHECK(maxpool_position(t3) == 2);

    // single non-padding token wins by default
    const ActivationTrace t4 = trace_with_rows({{0.5, 0.5}, {9.0, 9.0}}, {1, 0});
    CHECK(maxpool_position(t4) == 0);

    // ties go to the lowest position
    const ActivationTrace t5 = trace_with_rows({{1.0, 0.0}, {0.0, 1.0}}, {1, 1});
    CHECK(maxpool_position(t5) == 0);

    const ActivationTrace t6 = trace_with_rows({{1.0, 0.0}}, {0});
    CHECK_THROWS_AS(maxpool_position(t6), DataError);
}

TEST_CASE("cls vector extraction and level bounds") {
    const ActivationTrace t = trace_with_rows({{1.5, -2.0}, {0.0, 3.0}}, {1, 1});
    CHECK(cls_vector(t, 0) == std::vector<double>{1.5, -2.0});
    CHECK_THROWS_AS(cls_vector(t, 1), IndexError);
    CHECK_THROWS_AS(cls_vector(t, -1), IndexError);
}

TEST_CASE("sweep validates input and ranks by validation score") {
    ProbeContext ctx = synthetic_context();

    SubsetList subsets;
    subsets.info = {2, 28, 3, 0.0, 0, "count"};
    subsets.subsets = {DimensionSubset{{0, 1}}, DimensionSubset{{2, 5}}, DimensionSubset{{1, 7}}};
    const ProbeReport report = sweep_subsets(ctx, subsets, ctx.final_level());
    REQUIRE(report.entries.size() == 3);
    for (size_t i = 1; i < report.entries.size(); ++i) {
        CHECK_FALSE(score_greater(report.entries[i].valid, report.entries[i - 1].valid));
    }

    SubsetList dup = subsets;
    dup.subsets.push_back(DimensionSubset{{0, 1}});
    CHECK_THROWS_AS(sweep_subsets(ctx, dup, ctx.final_level()), ValidationError);

    SubsetList empty;
    CHECK_THROWS_AS(sweep_subsets(ctx, empty, ctx.final_level()), ValidationError);

    SubsetList bad;
    bad.subsets = {DimensionSubset{{3, 1}}};  // not increasing
    CHECK_THROWS_AS(sweep_subsets(ctx, bad, ctx.final_level()), ValidationError);

    // the full set reproduces the baseline exactly
    SubsetList full;
    full.subsets = {DimensionSubset{{0, 1, 2, 3, 4, 5, 6, 7}}};
    const ProbeReport fr = sweep_subsets(ctx, full, ctx.final_level());
    CHECK(fr.entries[0].valid == fr.baseline_valid);
    CHECK(fr.entries[0].test == fr.baseline_test);
}

TEST_CASE("ranking ignores test labels entirely") {
    ProbeContext ctx = synthetic_context(8, 3, 120, 17);
    SubsetList subsets = enumerate_subsets(8, 2);
    const ProbeReport before = sweep_subsets(ctx, subsets, ctx.final_level());

    for (auto& ex : ctx.acts.examples) {
        if (ex.split == 2) {
            ex.label = 1.0 - ex.label;
        }
    }
    const ProbeReport after = sweep_subsets(ctx, subsets, ctx.final_level());
    REQUIRE(before.entries.size() == after.entries.size());
    for (size_t i = 0; i < before.entries.size(); ++i) {
        CHECK(before.entries[i].subset.dims == after.entries[i].subset.dims);
        CHECK(before.entries[i].valid == after.entries[i].valid);
    }
}

TEST_CASE("leave one out enumerates pairs in removed order") {
    const ProbeContext ctx = synthetic_context();
    const DimensionSubset triple{{1, 4, 6}};
    const auto rows = leave_one_out(ctx, triple);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].removed_dim == 1);
    CHECK(rows[0].pair.dims == std::vector<int>{4, 6});
    CHECK(rows[1].removed_dim == 4);
    CHECK(rows[1].pair.dims == std::vector<int>{1, 6});
    CHECK(rows[2].removed_dim == 6);
    CHECK(rows[2].pair.dims == std::vector<int>{1, 4});

    CHECK_THROWS_AS(leave_one_out(ctx, DimensionSubset{{1, 2}}), ValidationError);
}

TEST_CASE("effective dimension ranking: drops, ties and domain restriction") {
    auto make = [](std::vector<int> dims, double triple_valid,
                   std::vector<double> pair_valids) {
        TripleLoo t;
        t.triple.subset = DimensionSubset{dims};
        t.triple.valid = triple_valid;
        for (size_t i = 0; i < dims.size(); ++i) {
            LeaveOneOutRow row;
            row.removed_dim = dims[i];
            row.valid = pair_valids[i];
            t.rows.push_back(row);
        }
        return t;
    };

    // dim 7 causes the largest drop; dim 2 the second largest
    std::vector<TripleLoo> triples;
    triples.push_back(make({2, 5, 7}, 0.9, {0.7, 0.85, 0.3}));
    triples.push_back(make({1, 2, 3}, 0.8, {0.75, 0.65, 0.78}));
    const auto dims = effective_dims(triples, MetricKind::accuracy, 3);
    REQUIRE(dims.size() == 3);
    CHECK(dims[0] == 7);  // drop 0.60
    CHECK(dims[1] == 2);  // max drop 0.20
    CHECK(dims[2] == 1);  // 0.05, tied with dim 5: lower id wins
    // dims outside the triples can never be selected
    for (int d : dims) {
        CHECK((d == 1 || d == 2 || d == 3 || d == 5 || d == 7));
    }

    // all drops equal: lowest ids win
    std::vector<TripleLoo> flat;
    flat.push_back(make({4, 6, 9}, 0.5, {0.5, 0.5, 0.5}));
    const auto tied = effective_dims(flat, MetricKind::accuracy, 2);
    CHECK(tied == std::vector<int>{4, 6});

    CHECK_THROWS_AS(effective_dims(std::vector<TripleLoo>{}, MetricKind::accuracy, 5),
                    InsufficientDataError);
}

TEST_CASE("pair combinations covers exactly the ten pairs of five dimensions") {
    const ProbeContext ctx = synthetic_context();
    const ProbeReport report = pair_combinations(ctx, {7, 0, 3, 5, 1});
    CHECK(report.entries.size() == 10);
    std::set<std::string> seen;
    for (const auto& e : report.entries) {
        CHECK(e.subset.dims.size() == 2);
        CHECK(seen.insert(e.subset.to_string()).second);
        for (int d : e.subset.dims) {
            CHECK((d == 0 || d == 1 || d == 3 || d == 5 || d == 7));
        }
    }
    CHECK_THROWS_AS(pair_combinations(ctx, {0, 1, 2, 3}), ValidationError);
    CHECK_THROWS_AS(pair_combinations(ctx, {0, 1, 2, 3, 3}), ValidationError);
}

TEST_CASE("effective-dims pipeline needs enough triples") {
    const ProbeContext ctx = synthetic_context();
    SubsetList few;
    few.subsets = {DimensionSubset{{0, 1, 2}}, DimensionSubset{{3, 4, 5}}};
    CHECK_THROWS_AS(effective_dims_pipeline(ctx, few, 10, 5), InsufficientDataError);
}

TEST_CASE("layer sweep reuses the subsets and matches the final-level sweep") {
    const ProbeContext ctx = synthetic_context(8, 3, 150, 23);
    const SubsetList subsets = enumerate_subsets(8, 2);
    const auto levels = layer_sweep(ctx, subsets, 5);
    REQUIRE(levels.size() == 3);
    for (const auto& rep : levels) {
        CHECK(rep.entries.size() == 5);
    }
    const ProbeReport direct = sweep_subsets(ctx, subsets, ctx.final_level());
    for (size_t i = 0; i < levels.back().entries.size(); ++i) {
        CHECK(levels.back().entries[i].subset.dims == direct.entries[i].subset.dims);
        CHECK(levels.back().entries[i].valid == direct.entries[i].valid);
        CHECK(levels.back().entries[i].test == direct.entries[i].test);
    }
}

TEST_CASE("regression probing renders undefined scores last") {
    // constant level-0 vectors force constant predictions -> undefined pearson
    ProbeContext ctx = synthetic_context(8, 2, 90, 29, true);
    for (auto& ex : ctx.acts.examples) {
        ex.levels[0] = std::vector<double>(8, 0.5);
    }
    SubsetList subsets;
    subsets.subsets = {DimensionSubset{{0, 1}}, DimensionSubset{{2, 3}}};
    const ProbeReport level0 = sweep_subsets(ctx, subsets, 0);
    for (const auto& e : level0.entries) {
        CHECK_FALSE(e.valid.has_value());
    }
    const ProbeReport level1 = sweep_subsets(ctx, subsets, 1);
    CHECK(level1.entries[0].valid.has_value());
}

TEST_CASE("a 50% sample finds a top-1 inside the exhaustive top 5%, 3 of 3 seeds") {
    const ProbeContext ctx = synthetic_context(32, 2, 240, 53);
    const SubsetList exhaustive = enumerate_subsets(32, 2);
    const ProbeReport full = sweep_subsets(ctx, exhaustive, ctx.final_level());
    std::set<std::string> top_5pct;
    for (size_t i = 0; i < full.entries.size() / 20; ++i) {
        top_5pct.insert(full.entries[i].subset.to_string());
    }
    for (uint64_t seed : {1, 2, 3}) {
        const SubsetList half = sample_subsets_count(32, 2, 248, seed);
        const ProbeReport sampled = sweep_subsets(ctx, half, ctx.final_level());
        CHECK(top_5pct.count(sampled.entries[0].subset.to_string()) == 1);
    }
}

TEST_CASE("growing subsets converge exactly to the unmasked prediction") {
    const ProbeContext ctx = synthetic_context();
    Rng rng(59);
    std::vector<double> vec(8);
    for (auto& v : vec) {
        v = rng.uniform_real(-2.0, 2.0);
    }
    const double unmasked = masked_head_inference(ctx, vec, nullptr);
    std::vector<int> growing;
    for (int d = 0; d < 8; ++d) {
        growing.push_back(d);
        const double pred = masked_head_inference(ctx, vec, &growing);
        if (d == 7) {
            CHECK(pred == unmasked);  // bit-exact at the full set
        }
    }
}

TEST_CASE("histogram counts are conserved") {
    const ProbeContext ctx = synthetic_context(8, 3, 120, 31);
    const SubsetList subsets = enumerate_subsets(8, 2);
    const ProbeReport report = sweep_subsets(ctx, subsets, ctx.final_level());
    const Histogram h = score_histogram(report.entries, ctx.metric, true);
    uint64_t total = h.undefined;
    for (uint64_t c : h.counts) {
        total += c;
    }
    CHECK(total == report.entries.size());
    CHECK(h.total == report.entries.size());
}

TEST_CASE("consistent error set definition") {
    ProbeContext ctx = synthetic_context(8, 2, 120, 37);

    // with all five subsets equal to the full set nothing can qualify
    std::vector<DimensionSubset> full5(5, DimensionSubset{{0, 1, 2, 3, 4, 5, 6, 7}});
    CHECK(consistent_error_set(ctx, full5).empty());

    // with five empty subsets: exactly the ids correct under ALL but not
    // matching the bias class
    std::vector<DimensionSubset> empty5(5, DimensionSubset{});
    const auto ids = consistent_error_set(ctx, empty5);
    const std::vector<double> zeros(8, 0.0);
    const int bias_class = static_cast<int>(predict_masked(ctx.head, zeros, nullptr));
    std::vector<uint32_t> expected;
    for (const auto& ex : ctx.acts.examples) {
        if (ex.split != 2) {
            continue;
        }
        const int gold = static_cast<int>(ex.label);
        const int all = static_cast<int>(predict_masked(ctx.head, ex.levels.back(), nullptr));
        if (all == gold && bias_class != gold) {
            expected.push_back(ex.id);
        }
    }
    CHECK(ids == expected);

    // results always lie within the test split
    const auto test_ids = ctx.acts.split_ids(Split::test);
    std::set<uint32_t> test_set;
    for (int i : test_ids) {
        test_set.insert(ctx.acts.examples[i].id);
    }
    for (uint32_t id : ids) {
        CHECK(test_set.count(id) == 1);
    }

    CHECK_THROWS_AS(consistent_error_set(ctx, {full5[0]}), ValidationError);

    ProbeContext reg = synthetic_context(8, 2, 60, 41, true);
    CHECK_THROWS_AS(consistent_error_set(reg, full5), UnsupportedTaskError);
}

TEST_CASE("dump-backed training validates metric against label kind") {
    const ProbeContext cls = synthetic_context(8, 2, 90, 43);
    FineTuneConfig cfg;
    cfg.max_epochs = 1;
    CHECK_THROWS_AS(train_head_on_dump(cls.acts, MetricKind::pearson, cfg), DataError);

    const ProbeContext reg = synthetic_context(8, 2, 90, 47, true);
    CHECK_THROWS_AS(train_head_on_dump(reg.acts, MetricKind::matthews, cfg), DataError);
    CHECK_THROWS_AS(train_head_on_dump(reg.acts, MetricKind::accuracy, cfg), DataError);

    const DumpModel model = train_head_on_dump(reg.acts, MetricKind::pearson, cfg);
    CHECK(model.head.n_out == 1);
    CHECK(model.valid_history.size() == 1);
}
