#pragma once

#include <cstdint>
#include <vector>

#include "redprobe/encoder.hpp"
#include "redprobe/tasks.hpp"

namespace redprobe {

enum class Pooling { cls, maxpool };

std::string pooling_name(Pooling p);

// Row 0 of the requested level (level 0 = embedding output).
std::vector<double> cls_vector(const ActivationTrace& trace, int level);

// Position of the final-layer token vector with the largest Euclidean norm
// among non-padding positions, CLS included; ties go to the lowest index.
int maxpool_position(const ActivationTrace& trace);
std::vector<double> maxpool_token_vector(const ActivationTrace& trace);

// Head-facing activation vectors are rounded to single precision at the
// boundary, so a vector served from an activation dump is bit-identical to
// the one computed in memory.
double quantize_f32(double x);
void quantize_f32(std::vector<double>& v);

// One example's probe-ready vectors: per-level CLS plus the final-layer
// max-norm token vector, all f32-quantized.
struct ActivationExample {
    uint32_t id = 0;  // index into the source dataset
    double label = 0.0;
    uint8_t split = 0;  // 0 train, 1 valid, 2 test
    std::vector<std::vector<double>> levels;
    std::vector<double> maxpool;
};

struct ActivationSet {
    int n_levels = 0;
    int d_model = 0;
    uint8_t label_kind = 0;  // 0 = class, 1 = scalar
    uint32_t n_classes = 0;
    std::vector<ActivationExample> examples;

    int final_level() const { return n_levels - 1; }
    std::vector<int> split_ids(Split s) const;  // indices into examples
    const std::vector<double>& vector_of(const ActivationExample& ex, int level, Pooling pooling) const;
};

// Runs the encoder in inference mode over every example. Deterministic.
ActivationSet build_activation_set(const EncoderWeights& w, const TaskDataset& data);

uint8_t split_code(Split s);

}  // namespace redprobe
