#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "redprobe/finetune.hpp"

namespace redprobe {

// Container file layout (everything little-endian):
//   magic "RPB1"
//   u32 section count
//   per section: 4 ASCII tag bytes, u64 absolute byte offset, u64 byte length
//   payloads, in table order, immediately after the table
//
// Known tags: WGTS encoder weights, TASK dataset, FTMD fine-tuned model,
// ACTV activation dump.
//
// WGTS payload: encoder config (u32 vocab_size, max_len, d_model, n_layers,
// n_heads, d_ff; f64 dropout_rate; u64 seed) followed by every parameter in
// canonical order as raw f64 arrays.
//
// ACTV payload: header (u32 n_examples, u32 n_levels, u32 d_model,
// u8 label_kind 0=class/1=scalar, u8 split-coded, u16 reserved=0,
// u32 n_classes), then per example: u32 id, label (u32 class id or f32),
// u8 split (0/1/2), 3 zero bytes, n_levels x d_model f32 per-level CLS
// vectors, d_model f32 final-layer max-norm vector.

struct Section {
    std::array<char, 4> tag;
    std::vector<uint8_t> bytes;
};

constexpr std::array<char, 4> kTagWeights = {'W', 'G', 'T', 'S'};
constexpr std::array<char, 4> kTagTask = {'T', 'A', 'S', 'K'};
constexpr std::array<char, 4> kTagModel = {'F', 'T', 'M', 'D'};
constexpr std::array<char, 4> kTagActivations = {'A', 'C', 'T', 'V'};

void write_container(const std::string& path, const std::vector<Section>& sections);
std::vector<Section> read_container(const std::string& path);

// First section with the tag, or nullptr.
const Section* find_section(const std::vector<Section>& sections, const std::array<char, 4>& tag);
// Same, but throws FormatError when missing.
const Section& require_section(const std::vector<Section>& sections, const std::array<char, 4>& tag);

std::vector<uint8_t> encode_weights(const EncoderWeights& w);
EncoderWeights decode_weights(const std::vector<uint8_t>& bytes);

std::vector<uint8_t> encode_task(const TaskDataset& data);
TaskDataset decode_task(const std::vector<uint8_t>& bytes);

std::vector<uint8_t> encode_model(const FineTunedModel& model);
FineTunedModel decode_model(const std::vector<uint8_t>& bytes);

std::vector<uint8_t> encode_activations(const ActivationSet& acts);
ActivationSet decode_activations(const std::vector<uint8_t>& bytes);

// Convenience wrappers writing a single-section container.
void save_weights(const std::string& path, const EncoderWeights& w);
EncoderWeights load_weights(const std::string& path);
void save_model(const std::string& path, const FineTunedModel& model);
FineTunedModel load_model(const std::string& path);
void save_activations(const std::string& path, const ActivationSet& acts);
ActivationSet load_activations(const std::string& path);

}  // namespace redprobe
