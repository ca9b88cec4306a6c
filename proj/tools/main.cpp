// redprobe: fine-tune a desk-scale transformer encoder on synthetic tasks and
// measure token-, dimension-, and layer-wise redundancy of its
// representations. Every run is reproducible from its config and seeds; all
// outputs land under --out next to a provenance file that replays the run.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "redprobe/container.hpp"
#include "redprobe/errors.hpp"
#include "redprobe/reportio.hpp"

namespace fs = std::filesystem;
using namespace redprobe;

namespace {

// Seed derivation streams per component, all off the master seed.
enum : uint64_t {
    kStreamEncoder = 1,
    kStreamTask = 2,
    kStreamTask2 = 3,
    kStreamSampling = 4,
    kStreamPretrain = 5,
};

const std::vector<std::string> kKnownKeys = {
    "command", "seed", "weights", "model", "dump", "results",
    "encoder.vocab_size", "encoder.max_len", "encoder.d_model", "encoder.n_layers",
    "encoder.n_heads", "encoder.d_ff", "encoder.dropout", "encoder.seed",
    "pretrain.steps", "pretrain.mask_fraction", "pretrain.lr", "pretrain.corpus_sequences",
    "pretrain.corpus_length", "pretrain.seed",
    "task.name", "task.kind", "task.rule", "task.metric", "task.n_classes", "task.trigger_a",
    "task.trigger_b", "task.noise", "task.n", "task.seed", "task.min_content", "task.max_content",
    "task2.name", "task2.kind", "task2.rule", "task2.metric", "task2.n_classes", "task2.trigger_a",
    "task2.trigger_b", "task2.noise", "task2.n", "task2.seed", "task2.min_content",
    "task2.max_content",
    "finetune.lr", "finetune.batch", "finetune.epochs", "finetune.dropout", "finetune.seed",
    "finetune.pooling", "finetune.freeze", "finetune.head_depth",
    "probe.k", "probe.mode", "probe.rate", "probe.count", "probe.sample_seed", "probe.layer",
    "probe.top_triples", "probe.top_dims", "probe.top_k", "probe.threshold", "probe.metric",
};

// Holds the parsed config plus the resolved echo that becomes provenance.
struct Run {
    RunConfig cfg;
    RunConfig resolved;
    uint64_t master = 42;
    fs::path out;

    std::string gets(const std::string& key, const std::string& def) {
        const std::string v = cfg.get_string(key, def);
        resolved.set(key, v);
        return v;
    }
    int64_t geti(const std::string& key, int64_t def) {
        const int64_t v = cfg.get_int(key, def);
        resolved.set(key, std::to_string(v));
        return v;
    }
    uint64_t getu(const std::string& key, uint64_t def) {
        const uint64_t v = cfg.get_u64(key, def);
        resolved.set(key, std::to_string(v));
        return v;
    }
    double getr(const std::string& key, double def) {
        const double v = cfg.get_real(key, def);
        char buf[40];
        auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
        resolved.set(key, std::string(buf, end));
        return v;
    }
    bool getb(const std::string& key, bool def) {
        const bool v = cfg.get_bool(key, def);
        resolved.set(key, v ? "true" : "false");
        return v;
    }
    std::string require(const std::string& key) {
        const std::string v = cfg.require_string(key);
        resolved.set(key, v);
        return v;
    }
};

// Exclusive per-directory lock, removed on scope exit.
class OutputLock {
public:
    explicit OutputLock(const fs::path& dir) : path_(dir / ".redprobe.lock") {
        std::FILE* f = std::fopen(path_.string().c_str(), "wx");
        if (f == nullptr) {
            throw IoError("output directory " + dir.string() + " is locked by another run (remove " +
                          path_.string() + " if that run is gone)");
        }
        std::fclose(f);
    }
    ~OutputLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    fs::path path_;
};

EncoderConfig parse_encoder(Run& run) {
    EncoderConfig enc;
    enc.vocab_size = static_cast<int>(run.geti("encoder.vocab_size", 64));
    enc.max_len = static_cast<int>(run.geti("encoder.max_len", 24));
    enc.d_model = static_cast<int>(run.geti("encoder.d_model", 32));
    enc.n_layers = static_cast<int>(run.geti("encoder.n_layers", 4));
    enc.n_heads = static_cast<int>(run.geti("encoder.n_heads", 4));
    enc.d_ff = static_cast<int>(run.geti("encoder.d_ff", 64));
    enc.dropout_rate = run.getr("encoder.dropout", 0.1);
    enc.seed = run.getu("encoder.seed", mix_seed(run.master, kStreamEncoder));
    enc.validate();
    return enc;
}

TaskKind parse_task_kind(const std::string& s) {
    if (s == "single_cls") return TaskKind::single_cls;
    if (s == "pair_cls") return TaskKind::pair_cls;
    if (s == "regression") return TaskKind::regression;
    throw ConfigError("config: unknown task kind '" + s + "'");
}

RuleId parse_rule(const std::string& s) {
    if (s == "presence") return RuleId::presence;
    if (s == "presence_and") return RuleId::presence_and;
    if (s == "presence_xor") return RuleId::presence_xor;
    if (s == "pair_and") return RuleId::pair_and;
    if (s == "count_fraction") return RuleId::count_fraction;
    throw ConfigError("config: unknown task rule '" + s + "'");
}

MetricKind parse_metric(const std::string& s) {
    if (s == "accuracy") return MetricKind::accuracy;
    if (s == "pearson") return MetricKind::pearson;
    if (s == "matthews") return MetricKind::matthews;
    throw ConfigError("config: unknown metric '" + s + "'");
}

std::string rule_name(RuleId r) {
    switch (r) {
        case RuleId::presence: return "presence";
        case RuleId::presence_and: return "presence_and";
        case RuleId::presence_xor: return "presence_xor";
        case RuleId::pair_and: return "pair_and";
        case RuleId::count_fraction: return "count_fraction";
    }
    return "?";
}

TaskSpec parse_task(Run& run, const std::string& prefix, uint64_t seed_stream) {
    TaskSpec spec;
    spec.kind = parse_task_kind(run.gets(prefix + ".kind", "single_cls"));
    const std::string default_rule = spec.kind == TaskKind::pair_cls     ? "pair_and"
                                     : spec.kind == TaskKind::regression ? "count_fraction"
                                                                         : "presence_and";
    spec.rule = parse_rule(run.gets(prefix + ".rule", default_rule));
    spec.metric = parse_metric(
        run.gets(prefix + ".metric", spec.kind == TaskKind::regression ? "pearson" : "accuracy"));
    spec.name = run.gets(prefix + ".name", rule_name(spec.rule));
    spec.n_classes = static_cast<int>(run.geti(prefix + ".n_classes", 2));
    spec.trigger_a = static_cast<int>(run.geti(prefix + ".trigger_a", 9));
    spec.trigger_b = static_cast<int>(run.geti(prefix + ".trigger_b", 17));
    spec.noise_rate = run.getr(prefix + ".noise", 0.0);
    spec.n_examples = static_cast<int>(run.geti(prefix + ".n", 2000));
    spec.seed = run.getu(prefix + ".seed", mix_seed(run.master, seed_stream));
    spec.min_content = static_cast<int>(run.geti(prefix + ".min_content", 6));
    spec.max_content = static_cast<int>(run.geti(prefix + ".max_content", 10));
    return spec;
}

Pooling parse_pooling(const std::string& s) {
    if (s == "cls") return Pooling::cls;
    if (s == "maxpool") return Pooling::maxpool;
    throw ConfigError("config: unknown pooling '" + s + "'");
}

FineTuneConfig parse_finetune(Run& run) {
    FineTuneConfig cfg;
    cfg.learning_rate = run.getr("finetune.lr", cfg.learning_rate);
    cfg.batch_size = static_cast<int>(run.geti("finetune.batch", cfg.batch_size));
    cfg.max_epochs = static_cast<int>(run.geti("finetune.epochs", cfg.max_epochs));
    cfg.dropout_rate = run.getr("finetune.dropout", cfg.dropout_rate);
    cfg.seed = run.getu("finetune.seed", run.master);
    cfg.pooling = parse_pooling(run.gets("finetune.pooling", "cls"));
    cfg.freeze_encoder = run.getb("finetune.freeze", false);
    cfg.head_depth = static_cast<int>(run.geti("finetune.head_depth", 1));
    cfg.validate();
    return cfg;
}

SubsetList parse_subsets(Run& run, int d_model, int default_k) {
    const int k = static_cast<int>(run.geti("probe.k", default_k));
    const std::string mode = run.gets("probe.mode", "exhaustive");
    if (mode == "exhaustive") {
        return enumerate_subsets(d_model, k);
    }
    const uint64_t seed = run.getu("probe.sample_seed", mix_seed(run.master, kStreamSampling));
    if (mode == "rate") {
        return sample_subsets_rate(d_model, k, run.getr("probe.rate", 0.05), seed);
    }
    if (mode == "count") {
        return sample_subsets_count(d_model, k, run.getu("probe.count", 100), seed);
    }
    throw ConfigError("config: unknown probe.mode '" + mode + "' (exhaustive|rate|count)");
}

EncoderWeights weights_or_init(Run& run) {
    if (run.cfg.has("weights")) {
        return load_weights(run.require("weights"));
    }
    return init_weights(parse_encoder(run));
}

int probe_layer(Run& run, int n_levels) {
    const int layer = static_cast<int>(run.geti("probe.layer", n_levels - 1));
    if (layer < 0 || layer >= n_levels) {
        throw ConfigError("config: probe.layer " + std::to_string(layer) + " outside [0, " +
                          std::to_string(n_levels - 1) + "]");
    }
    return layer;
}

void write_provenance(const Run& run, const std::string& command) {
    RunConfig prov = run.resolved;
    prov.set("command", command);
    prov.set("seed", std::to_string(run.master));
    std::ofstream out(run.out / "provenance.cfg", std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write provenance under " + run.out.string());
    }
    const std::string text = prov.serialize();
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

// ----------------------------- commands -----------------------------

void cmd_pretrain(Run& run) {
    const EncoderConfig enc = parse_encoder(run);
    EncoderWeights w = init_weights(enc);
    const int sequences = static_cast<int>(run.geti("pretrain.corpus_sequences", 512));
    const int length = static_cast<int>(run.geti("pretrain.corpus_length", 12));
    const int steps = static_cast<int>(run.geti("pretrain.steps", 3000));
    const double mask = run.getr("pretrain.mask_fraction", 0.15);
    const double lr = run.getr("pretrain.lr", 0.1);
    const uint64_t seed = run.getu("pretrain.seed", mix_seed(run.master, kStreamPretrain));

    const auto corpus = make_bigram_corpus(enc, sequences, length, mix_seed(seed, 1));
    const auto history = pretrain_mlm(w, corpus, steps, mask, lr, seed);
    save_weights((run.out / "weights.rpb").string(), w);

    std::string csv = "step,loss\n";
    for (size_t i = 0; i < history.size(); ++i) {
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%zu,%.6f\n", i, history[i]);
        csv += buf;
    }
    write_text(run.out / "pretrain_loss.csv", csv);
}

void cmd_finetune(Run& run) {
    const EncoderWeights w = weights_or_init(run);
    const TaskDataset data = generate_task(parse_task(run, "task", kStreamTask), w.config);
    const FineTuneConfig cfg = parse_finetune(run);
    const FineTunedModel model = finetune(w, data, cfg);
    save_model((run.out / "model.rpb").string(), model);

    const int final = w.config.n_layers;
    ProbeReport report;
    report.experiment = "finetune";
    report.task = data.spec.name;
    report.metric = model.metric;
    report.layer = final;
    report.baseline_layer = final;
    report.baseline_valid = evaluate(model, data, Split::valid, final, nullptr);
    report.baseline_test = evaluate(model, data, Split::test, final, nullptr);
    write_results_csv((run.out / "results.csv").string(), rows_from_report(report));
}

// Rebuilds the dataset a stored model was trained on.
TaskDataset model_task(const FineTunedModel& model) {
    return generate_task(model.task, model.weights.config);
}

void cmd_probe_dims(Run& run) {
    const FineTunedModel model = load_model(run.require("model"));
    const TaskDataset data = model_task(model);
    const ProbeContext ctx = make_probe_context(model, data);
    const SubsetList subsets = parse_subsets(run, ctx.d_model(), 2);
    const int layer = probe_layer(run, ctx.acts.n_levels);
    const ProbeReport report = sweep_subsets(ctx, subsets, layer);
    write_results_csv((run.out / "results.csv").string(), rows_from_report(report));
}

void cmd_probe_effective(Run& run) {
    const FineTunedModel model = load_model(run.require("model"));
    const TaskDataset data = model_task(model);
    const ProbeContext ctx = make_probe_context(model, data);
    const SubsetList triples = parse_subsets(run, ctx.d_model(), 3);
    const int top_triples = static_cast<int>(run.geti("probe.top_triples", 10));
    const int top_dims = static_cast<int>(run.geti("probe.top_dims", 5));
    const EffectiveDimsResult res = effective_dims_pipeline(ctx, triples, top_triples, top_dims);

    std::vector<ResultRow> rows;
    const auto triple_rows = rows_from_report(res.triples_report);
    rows.insert(rows.end(), triple_rows.begin(),
                triple_rows.begin() +
                    std::min<size_t>(triple_rows.size(), static_cast<size_t>(top_triples) + 1));
    for (const auto& t : res.loo) {
        int rank = 1;
        for (const auto& row : t.rows) {
            rows.push_back({"probe-effective-loo",
                            res.triples_report.task + ":" + t.triple.subset.to_string(),
                            ctx.final_level(), row.pair.to_string(), rank++, row.valid, row.test,
                            metric_name(ctx.metric)});
        }
    }
    DimensionSubset dims{res.dims};
    std::sort(dims.dims.begin(), dims.dims.end());
    rows.push_back({"probe-effective-dims", res.triples_report.task, ctx.final_level(),
                    dims.to_string(), 1, std::nullopt, std::nullopt, metric_name(ctx.metric)});
    const auto pair_rows = rows_from_report(res.pairs_report);
    rows.insert(rows.end(), pair_rows.begin(), pair_rows.end());
    write_results_csv((run.out / "results.csv").string(), rows);
}

void cmd_probe_layers(Run& run) {
    const FineTunedModel model = load_model(run.require("model"));
    const TaskDataset data = model_task(model);
    const ProbeContext ctx = make_probe_context(model, data);
    const SubsetList subsets = parse_subsets(run, ctx.d_model(), 2);
    const int top_k = static_cast<int>(run.geti("probe.top_k", 5));
    const auto reports = layer_sweep(ctx, subsets, top_k);

    std::vector<ResultRow> rows;
    bool baseline_done = false;
    for (const auto& rep : reports) {
        auto level_rows = rows_from_report(rep);
        // One baseline row for the whole table; it is level-independent.
        rows.insert(rows.end(), level_rows.begin() + (baseline_done ? 1 : 0), level_rows.end());
        baseline_done = true;
    }
    write_results_csv((run.out / "results.csv").string(), rows);
}

void cmd_probe_token(Run& run) {
    const EncoderWeights w = weights_or_init(run);
    const TaskDataset data = generate_task(parse_task(run, "task", kStreamTask), w.config);
    const FineTuneConfig cfg = parse_finetune(run);
    const int final = w.config.n_layers;

    std::vector<ResultRow> rows;
    for (Pooling pooling : {Pooling::cls, Pooling::maxpool}) {
        FineTuneConfig arm = cfg;
        arm.pooling = pooling;
        const FineTunedModel model = finetune(w, data, arm);
        rows.push_back({"probe-token-" + pooling_name(pooling), data.spec.name, final, "ALL", 0,
                        evaluate(model, data, Split::valid, final, nullptr),
                        evaluate(model, data, Split::test, final, nullptr),
                        metric_name(model.metric)});
    }
    write_results_csv((run.out / "results.csv").string(), rows);
}

void cmd_cross(Run& run) {
    const EncoderWeights w = weights_or_init(run);
    const TaskDataset source = generate_task(parse_task(run, "task", kStreamTask), w.config);
    const TaskDataset target = generate_task(parse_task(run, "task2", kStreamTask2), w.config);
    const FineTuneConfig cfg = parse_finetune(run);
    const CrossFinetuneResult res = cross_finetune(w, source, target, cfg);
    save_model((run.out / "model.rpb").string(), res.cross_model);

    const int final = w.config.n_layers;
    const std::string pair = source.spec.name + ">" + target.spec.name;
    std::vector<ResultRow> rows;
    rows.push_back({"cross-transfer", pair, final, "ALL", 0, std::nullopt, res.cross_test,
                    metric_name(res.cross_model.metric)});
    rows.push_back({"cross-direct", target.spec.name, final, "ALL", 0, std::nullopt, res.direct_test,
                    metric_name(res.direct_model.metric)});
    write_results_csv((run.out / "results.csv").string(), rows);
}

void cmd_freeze(Run& run) {
    const EncoderWeights w = weights_or_init(run);
    const TaskDataset data = generate_task(parse_task(run, "task", kStreamTask), w.config);
    const FineTuneConfig cfg = parse_finetune(run);
    const FreezeCompareResult res = freeze_compare(w, data, cfg);

    const int final = w.config.n_layers;
    std::vector<ResultRow> rows;
    rows.push_back({"freeze-unfrozen", data.spec.name, final, "ALL", 0,
                    evaluate(res.unfrozen, data, Split::valid, final, nullptr), res.unfrozen_test,
                    metric_name(res.unfrozen.metric)});
    rows.push_back({"freeze-frozen", data.spec.name, final, "ALL", 0,
                    evaluate(res.frozen, data, Split::valid, final, nullptr), res.frozen_test,
                    metric_name(res.frozen.metric)});
    write_results_csv((run.out / "results.csv").string(), rows);
}

void cmd_dropout_ablate(Run& run) {
    const EncoderWeights w = weights_or_init(run);
    const TaskDataset data = generate_task(parse_task(run, "task", kStreamTask), w.config);
    const FineTuneConfig cfg = parse_finetune(run);
    const SubsetList subsets = parse_subsets(run, w.config.d_model, 2);
    const double threshold = run.getr("probe.threshold", 0.9);
    const DropoutAblationResult res = dropout_ablation(w, data, cfg, subsets, threshold);

    std::vector<ResultRow> rows = rows_from_report(res.with_dropout);
    const auto rows_off = rows_from_report(res.without_dropout);
    rows.insert(rows.end(), rows_off.begin(), rows_off.end());
    write_results_csv((run.out / "results.csv").string(), rows);
    write_histogram_svg((run.out / "histogram.svg").string(), res.hist_with, res.hist_without,
                        "dropout " + std::to_string(cfg.dropout_rate), "no dropout",
                        metric_name(res.with_dropout.metric) + " (test)");
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "threshold %.4f\nabove_with_dropout %llu\nabove_without_dropout %llu\n", threshold,
                  static_cast<unsigned long long>(res.above_with),
                  static_cast<unsigned long long>(res.above_without));
    write_text(run.out / "ablation_summary.txt", buf);
}

void cmd_errors(Run& run) {
    const FineTunedModel model = load_model(run.require("model"));
    const TaskDataset data = model_task(model);
    const ProbeContext ctx = make_probe_context(model, data);
    const SubsetList subsets = parse_subsets(run, ctx.d_model(), 2);
    ProbeReport report = sweep_subsets(ctx, subsets, ctx.final_level(), "errors-top5");
    if (report.entries.size() < 5) {
        throw InsufficientDataError("errors: need at least 5 ranked subsets");
    }
    std::vector<DimensionSubset> top5;
    for (int i = 0; i < 5; ++i) {
        top5.push_back(report.entries[i].subset);
    }
    const auto ids = consistent_error_set(ctx, top5);

    report.entries.resize(5);
    write_results_csv((run.out / "results.csv").string(), rows_from_report(report));
    std::string csv = "example_id\n";
    for (uint32_t id : ids) {
        csv += std::to_string(id) + "\n";
    }
    write_text(run.out / "errors.csv", csv);
}

void cmd_dump_export(Run& run) {
    const FineTunedModel model = load_model(run.require("model"));
    const TaskDataset data = model_task(model);
    save_activations((run.out / "activations.rpb").string(),
                     build_activation_set(model.weights, data));
}

void cmd_dump_probe(Run& run) {
    const ActivationSet dump = load_activations(run.require("dump"));
    const FineTuneConfig cfg = parse_finetune(run);
    const MetricKind metric =
        parse_metric(run.gets("probe.metric", dump.label_kind == 1 ? "pearson" : "accuracy"));
    const DumpModel model = train_head_on_dump(dump, metric, cfg);
    const ProbeContext ctx = make_probe_context(model, run.gets("task.name", "dump"));
    const SubsetList subsets = parse_subsets(run, ctx.d_model(), 2);
    const int layer = probe_layer(run, ctx.acts.n_levels);
    const ProbeReport report = sweep_subsets(ctx, subsets, layer, "dump-probe");
    write_results_csv((run.out / "results.csv").string(), rows_from_report(report));
}

void cmd_report(Run& run) {
    const std::string path = run.require("results");
    std::ifstream in(path);
    if (!in) {
        throw DataError("report: cannot open " + path);
    }
    std::string line;
    if (!std::getline(in, line) || line != results_csv_header()) {
        throw FormatError("report: " + path + " is not a results csv");
    }
    std::string summary;
    std::string last_group;
    int shown = 0;
    while (std::getline(in, line)) {
        const size_t c1 = line.find(',');
        const size_t c2 = line.find(',', c1 + 1);
        const size_t c3 = line.find(',', c2 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos || c3 == std::string::npos) {
            throw FormatError("report: malformed row: " + line);
        }
        const std::string group = line.substr(0, c3);
        if (group != last_group) {
            summary += "== " + group + " ==\n";
            last_group = group;
            shown = 0;
        }
        if (shown < 6) {
            summary += "  " + line.substr(c3 + 1) + "\n";
            ++shown;
        }
    }
    write_text(run.out / "summary.txt", summary);
    std::cout << summary;
}

int dispatch(const std::string& command, const std::string& config_path,
             std::optional<uint64_t> seed_flag, const std::string& out_dir) {
    Run run;
    run.cfg = RunConfig::parse_file(config_path);
    run.cfg.validate_keys(kKnownKeys);
    if (run.cfg.has("command") && run.cfg.get_string("command", "") != command) {
        throw ConfigError("config was written for '" + run.cfg.get_string("command", "") + "', not '" +
                          command + "'");
    }
    run.master = seed_flag.value_or(run.cfg.get_u64("seed", 42));
    run.out = out_dir;

    std::error_code ec;
    fs::create_directories(run.out, ec);
    if (ec) {
        throw IoError("cannot create output directory " + run.out.string());
    }
    OutputLock lock(run.out);

    if (command == "pretrain") cmd_pretrain(run);
    else if (command == "finetune") cmd_finetune(run);
    else if (command == "probe-dims") cmd_probe_dims(run);
    else if (command == "probe-effective") cmd_probe_effective(run);
    else if (command == "probe-layers") cmd_probe_layers(run);
    else if (command == "probe-token") cmd_probe_token(run);
    else if (command == "cross") cmd_cross(run);
    else if (command == "freeze") cmd_freeze(run);
    else if (command == "dropout-ablate") cmd_dropout_ablate(run);
    else if (command == "errors") cmd_errors(run);
    else if (command == "dump-export") cmd_dump_export(run);
    else if (command == "dump-probe") cmd_dump_probe(run);
    else if (command == "report") cmd_report(run);
    else throw ConfigError("unknown command " + command);

    write_provenance(run, command);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"redprobe: representation redundancy probes for a desk-scale transformer encoder"};
    app.require_subcommand(1);

    const std::vector<std::string> commands = {
        "pretrain",    "finetune",   "probe-dims", "probe-effective", "probe-layers",
        "probe-token", "cross",      "freeze",     "dropout-ablate",  "errors",
        "dump-export", "dump-probe", "report"};

    struct Args {
        std::string config;
        std::string out;
        std::optional<uint64_t> seed;
    };
    std::map<std::string, Args> args;
    for (const auto& name : commands) {
        CLI::App* sub = app.add_subcommand(name);
        Args& a = args[name];
        sub->add_option("--config", a.config, "run configuration file")->required();
        sub->add_option("--out", a.out, "output directory")->required();
        sub->add_option("--seed", a.seed, "master seed override");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    const Args& a = args[command];
    try {
        return dispatch(command, a.config, a.seed, a.out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 4;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 4;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
