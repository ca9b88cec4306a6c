#include "redprobe/activations.hpp"

#include <cmath>

#include "redprobe/errors.hpp"

namespace redprobe {

std::string pooling_name(Pooling p) {
    return p == Pooling::cls ? "cls" : "maxpool";
}

std::vector<double> cls_vector(const ActivationTrace& trace, int level) {
    if (level < 0 || level >= trace.n_levels()) {
        throw IndexError("cls_vector: level " + std::to_string(level) + " outside [0, " +
                         std::to_string(trace.n_levels() - 1) + "]");
    }
    const Matrix& m = trace.levels[level];
    return std::vector<double>(m.row(0), m.row(0) + m.cols());
}

int maxpool_position(const ActivationTrace& trace) {
    const Matrix& final = trace.levels.back();
    int best = -1;
    double best_norm = -1.0;
    for (int i = 0; i < final.rows(); ++i) {
        if (!trace.mask[i]) {
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
    if (best < 0) {
        throw DataError("maxpool_token_vector: input has no non-padding positions");
    }
    return best;
}

std::vector<double> maxpool_token_vector(const ActivationTrace& trace) {
    const int pos = maxpool_position(trace);
    const Matrix& final = trace.levels.back();
    return std::vector<double>(final.row(pos), final.row(pos) + final.cols());
}

double quantize_f32(double x) {
    return static_cast<double>(static_cast<float>(x));
}

void quantize_f32(std::vector<double>& v) {
    for (auto& x : v) {
        x = quantize_f32(x);
    }
}

std::vector<int> ActivationSet::split_ids(Split s) const {
    const uint8_t code = split_code(s);
    std::vector<int> ids;
    for (size_t i = 0; i < examples.size(); ++i) {
        if (examples[i].split == code) {
            ids.push_back(static_cast<int>(i));
        }
    }
    return ids;
}

const std::vector<double>& ActivationSet::vector_of(const ActivationExample& ex, int level,
                                                    Pooling pooling) const {
    if (level < 0 || level >= n_levels) {
        throw IndexError("activation set: level " + std::to_string(level) + " outside [0, " +
                         std::to_string(n_levels - 1) + "]");
    }
    if (pooling == Pooling::maxpool && level == final_level()) {
        return ex.maxpool;
    }
    return ex.levels[level];
}

uint8_t split_code(Split s) {
    switch (s) {
        case Split::train: return 0;
        case Split::valid: return 1;
        case Split::test: return 2;
    }
    return 0;
}

ActivationSet build_activation_set(const EncoderWeights& w, const TaskDataset& data) {
    ActivationSet set;
    set.n_levels = w.config.n_layers + 1;
    set.d_model = w.config.d_model;
    set.label_kind = data.spec.kind == TaskKind::regression ? 1 : 0;
    set.n_classes = data.spec.kind == TaskKind::regression ? 0 : data.spec.n_classes;
    set.examples.resize(data.examples.size());

    std::vector<uint8_t> split_of(data.examples.size(), 0);
    for (int i : data.valid_idx) {
        split_of[i] = 1;
    }
    for (int i : data.test_idx) {
        split_of[i] = 2;
    }

    for (size_t i = 0; i < data.examples.size(); ++i) {
        const Example& ex = data.examples[i];
        const ActivationTrace trace = forward(w, ex.tokens, ex.segments);
        ActivationExample& out = set.examples[i];
        out.id = static_cast<uint32_t>(i);
        out.label = ex.label;
        out.split = split_of[i];
        out.levels.resize(set.n_levels);
        for (int lv = 0; lv < set.n_levels; ++lv) {
            out.levels[lv] = cls_vector(trace, lv);
            quantize_f32(out.levels[lv]);
        }
        out.maxpool = maxpool_token_vector(trace);
        quantize_f32(out.maxpool);
    }
    return set;
}

}  // namespace redprobe
