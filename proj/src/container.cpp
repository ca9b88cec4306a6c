#include "redprobe/container.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "redprobe/errors.hpp"

namespace redprobe {

namespace {

constexpr char kMagic[4] = {'R', 'P', 'B', '1'};

std::string tag_str(const std::array<char, 4>& tag) {
    return std::string(tag.begin(), tag.end());
}

class ByteWriter {
public:
    std::vector<uint8_t> take() { return std::move(bytes_); }
    size_t size() const { return bytes_.size(); }

    void u8(uint8_t v) { bytes_.push_back(v); }
    void u16(uint16_t v) { raw(&v, 2); }
    void u32(uint32_t v) { raw(&v, 4); }
    void u64(uint64_t v) { raw(&v, 8); }
    void f32(float v) { raw(&v, 4); }
    void f64(double v) { raw(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        for (char c : s) {
            bytes_.push_back(static_cast<uint8_t>(c));
        }
    }
    void f64_array(const double* data, size_t n) {
        for (size_t i = 0; i < n; ++i) {
            f64(data[i]);
        }
    }

private:
    // Host is little-endian IEEE; memcpy of the object representation is the
    // on-disk format.
    void raw(const void* p, size_t n) {
        const size_t off = bytes_.size();
        bytes_.resize(off + n);
        std::memcpy(bytes_.data() + off, p, n);
    }
    std::vector<uint8_t> bytes_;
};

class ByteReader {
public:
    ByteReader(const std::vector<uint8_t>& bytes, std::string what)
        : bytes_(bytes), what_(std::move(what)) {}

    uint8_t u8() { return take<uint8_t>(); }
    uint16_t u16() { return take<uint16_t>(); }
    uint32_t u32() { return take<uint32_t>(); }
    uint64_t u64() { return take<uint64_t>(); }
    float f32() { return take<float>(); }
    double f64() { return take<double>(); }
    std::string str() {
        const uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void f64_array(double* out, size_t n) {
        for (size_t i = 0; i < n; ++i) {
            out[i] = f64();
        }
    }
    bool exhausted() const { return pos_ == bytes_.size(); }
    void expect_exhausted() const {
        if (!exhausted()) {
            throw FormatError(what_ + ": " + std::to_string(bytes_.size() - pos_) + " trailing bytes");
        }
    }

private:
    template <typename T>
    T take() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void need(size_t n) const {
        if (pos_ + n > bytes_.size()) {
            throw FormatError(what_ + ": truncated payload");
        }
    }
    const std::vector<uint8_t>& bytes_;
    std::string what_;
    size_t pos_ = 0;
};

}  // namespace

void write_container(const std::string& path, const std::vector<Section>& sections) {
    ByteWriter w;
    for (char c : kMagic) {
        w.u8(static_cast<uint8_t>(c));
    }
    w.u32(static_cast<uint32_t>(sections.size()));
    uint64_t offset = 4 + 4 + sections.size() * (4 + 8 + 8);
    for (const auto& s : sections) {
        for (char c : s.tag) {
            w.u8(static_cast<uint8_t>(c));
        }
        w.u64(offset);
        w.u64(s.bytes.size());
        offset += s.bytes.size();
    }
    std::vector<uint8_t> header = w.take();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("write_container: cannot open " + path);
    }
    out.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
    for (const auto& s : sections) {
        out.write(reinterpret_cast<const char*>(s.bytes.data()),
                  static_cast<std::streamsize>(s.bytes.size()));
    }
    out.flush();
    if (!out) {
        throw IoError("write_container: write to " + path + " failed");
    }
}

std::vector<Section> read_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("read_container: cannot open " + path);
    }
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("read_container: " + path + " is not a container (bad magic)");
    }
    uint32_t count;
    std::memcpy(&count, bytes.data() + 4, 4);
    const uint64_t table_end = 8 + static_cast<uint64_t>(count) * 20;
    if (bytes.size() < table_end) {
        throw FormatError("read_container: " + path + ": truncated section table");
    }

    std::vector<Section> sections;
    sections.reserve(count);
    uint64_t expected_offset = table_end;
    for (uint32_t i = 0; i < count; ++i) {
        const uint8_t* entry = bytes.data() + 8 + static_cast<size_t>(i) * 20;
        Section s;
        std::memcpy(s.tag.data(), entry, 4);
        uint64_t offset, length;
        std::memcpy(&offset, entry + 4, 8);
        std::memcpy(&length, entry + 12, 8);
        if (offset != expected_offset) {
            throw FormatError("read_container: section " + tag_str(s.tag) +
                              " offset overlaps or leaves a gap");
        }
        if (offset + length > bytes.size()) {
            throw FormatError("read_container: section " + tag_str(s.tag) + " truncated");
        }
        s.bytes.assign(bytes.begin() + static_cast<long>(offset),
                       bytes.begin() + static_cast<long>(offset + length));
        expected_offset = offset + length;
        sections.push_back(std::move(s));
    }
    if (expected_offset != bytes.size()) {
        throw FormatError("read_container: " + std::to_string(bytes.size() - expected_offset) +
                          " trailing bytes after last section");
    }
    return sections;
}

const Section* find_section(const std::vector<Section>& sections, const std::array<char, 4>& tag) {
    for (const auto& s : sections) {
        if (s.tag == tag) {
            return &s;
        }
    }
    return nullptr;
}

const Section& require_section(const std::vector<Section>& sections, const std::array<char, 4>& tag) {
    const Section* s = find_section(sections, tag);
    if (s == nullptr) {
        throw FormatError("container: missing section " + tag_str(tag));
    }
    return *s;
}

namespace {

void encode_encoder_config(ByteWriter& w, const EncoderConfig& c) {
    w.u32(static_cast<uint32_t>(c.vocab_size));
    w.u32(static_cast<uint32_t>(c.max_len));
    w.u32(static_cast<uint32_t>(c.d_model));
    w.u32(static_cast<uint32_t>(c.n_layers));
    w.u32(static_cast<uint32_t>(c.n_heads));
    w.u32(static_cast<uint32_t>(c.d_ff));
    w.f64(c.dropout_rate);
    w.u64(c.seed);
}

EncoderConfig decode_encoder_config(ByteReader& r) {
    EncoderConfig c;
    c.vocab_size = static_cast<int>(r.u32());
    c.max_len = static_cast<int>(r.u32());
    c.d_model = static_cast<int>(r.u32());
    c.n_layers = static_cast<int>(r.u32());
    c.n_heads = static_cast<int>(r.u32());
    c.d_ff = static_cast<int>(r.u32());
    c.dropout_rate = r.f64();
    c.seed = r.u64();
    return c;
}

void encode_weights_into(ByteWriter& w, const EncoderWeights& weights) {
    encode_encoder_config(w, weights.config);
    for (const Parameter* p : weights.all_params()) {
        w.f64_array(p->value.data(), p->value.size());
    }
}

EncoderWeights decode_weights_from(ByteReader& r) {
    const EncoderConfig config = decode_encoder_config(r);
    config.validate();
    // Shapes come from the config; init then overwrite keeps them verified.
    EncoderWeights weights = init_weights(config);
    for (Parameter* p : weights.all_params()) {
        r.f64_array(p->value.data(), p->value.size());
    }
    return weights;
}

void encode_task_spec(ByteWriter& w, const TaskSpec& s) {
    w.str(s.name);
    w.u8(static_cast<uint8_t>(s.kind));
    w.u8(static_cast<uint8_t>(s.metric));
    w.u32(static_cast<uint32_t>(s.n_classes));
    w.u8(static_cast<uint8_t>(s.rule));
    w.u32(static_cast<uint32_t>(s.trigger_a));
    w.u32(static_cast<uint32_t>(s.trigger_b));
    w.f64(s.noise_rate);
    w.u32(static_cast<uint32_t>(s.n_examples));
    w.u64(s.seed);
    w.u32(static_cast<uint32_t>(s.min_content));
    w.u32(static_cast<uint32_t>(s.max_content));
}

TaskSpec decode_task_spec(ByteReader& r) {
    TaskSpec s;
    s.name = r.str();
    s.kind = static_cast<TaskKind>(r.u8());
    s.metric = static_cast<MetricKind>(r.u8());
    s.n_classes = static_cast<int>(r.u32());
    s.rule = static_cast<RuleId>(r.u8());
    s.trigger_a = static_cast<int>(r.u32());
    s.trigger_b = static_cast<int>(r.u32());
    s.noise_rate = r.f64();
    s.n_examples = static_cast<int>(r.u32());
    s.seed = r.u64();
    s.min_content = static_cast<int>(r.u32());
    s.max_content = static_cast<int>(r.u32());
    return s;
}

void encode_index_list(ByteWriter& w, const std::vector<int>& v) {
    w.u32(static_cast<uint32_t>(v.size()));
    for (int i : v) {
        w.u32(static_cast<uint32_t>(i));
    }
}

std::vector<int> decode_index_list(ByteReader& r) {
    const uint32_t n = r.u32();
    std::vector<int> v(n);
    for (uint32_t i = 0; i < n; ++i) {
        v[i] = static_cast<int>(r.u32());
    }
    return v;
}

void encode_head(ByteWriter& w, const Head& h) {
    w.u8(static_cast<uint8_t>(h.depth));
    w.u32(static_cast<uint32_t>(h.d_in));
    w.u32(static_cast<uint32_t>(h.d_hidden));
    w.u32(static_cast<uint32_t>(h.n_out));
    for (const Parameter* p : h.params()) {
        w.f64_array(p->value.data(), p->value.size());
    }
}

Head decode_head(ByteReader& r) {
    const int depth = r.u8();
    const int d_in = static_cast<int>(r.u32());
    const int d_hidden = static_cast<int>(r.u32());
    const int n_out = static_cast<int>(r.u32());
    if ((depth != 1 && depth != 2) || (depth == 2 && d_hidden != d_in)) {
        throw FormatError("model: invalid head geometry");
    }
    Head h = init_head(d_in, n_out, depth, 0);
    for (Parameter* p : h.params()) {
        r.f64_array(p->value.data(), p->value.size());
    }
    return h;
}

void encode_finetune_config(ByteWriter& w, const FineTuneConfig& c) {
    w.f64(c.learning_rate);
    w.u32(static_cast<uint32_t>(c.batch_size));
    w.u32(static_cast<uint32_t>(c.max_epochs));
    w.f64(c.dropout_rate);
    w.u64(c.seed);
    w.u8(static_cast<uint8_t>(c.pooling));
    w.u8(c.freeze_encoder ? 1 : 0);
    w.u8(static_cast<uint8_t>(c.head_depth));
}

FineTuneConfig decode_finetune_config(ByteReader& r) {
    FineTuneConfig c;
    c.learning_rate = r.f64();
    c.batch_size = static_cast<int>(r.u32());
    c.max_epochs = static_cast<int>(r.u32());
    c.dropout_rate = r.f64();
    c.seed = r.u64();
    c.pooling = static_cast<Pooling>(r.u8());
    c.freeze_encoder = r.u8() != 0;
    c.head_depth = r.u8();
    return c;
}

}  // namespace

std::vector<uint8_t> encode_weights(const EncoderWeights& w) {
    ByteWriter bw;
    encode_weights_into(bw, w);
    return bw.take();
}

EncoderWeights decode_weights(const std::vector<uint8_t>& bytes) {
    ByteReader r(bytes, "WGTS");
    EncoderWeights w = decode_weights_from(r);
    r.expect_exhausted();
    return w;
}

std::vector<uint8_t> encode_task(const TaskDataset& data) {
    ByteWriter w;
    encode_task_spec(w, data.spec);
    w.u32(static_cast<uint32_t>(data.examples.size()));
    for (const auto& ex : data.examples) {
        w.u32(static_cast<uint32_t>(ex.tokens.size()));
        for (int t : ex.tokens) {
            w.u32(static_cast<uint32_t>(t));
        }
        for (int s : ex.segments) {
            w.u8(static_cast<uint8_t>(s));
        }
        w.f64(ex.label);
    }
    encode_index_list(w, data.train_idx);
    encode_index_list(w, data.valid_idx);
    encode_index_list(w, data.test_idx);
    return w.take();
}

TaskDataset decode_task(const std::vector<uint8_t>& bytes) {
    ByteReader r(bytes, "TASK");
    TaskDataset data;
    data.spec = decode_task_spec(r);
    const uint32_t n = r.u32();
    data.examples.resize(n);
    for (uint32_t i = 0; i < n; ++i) {
        Example& ex = data.examples[i];
        const uint32_t len = r.u32();
        ex.tokens.resize(len);
        for (uint32_t j = 0; j < len; ++j) {
            ex.tokens[j] = static_cast<int>(r.u32());
        }
        ex.segments.resize(len);
        for (uint32_t j = 0; j < len; ++j) {
            ex.segments[j] = r.u8();
        }
        ex.label = r.f64();
    }
    data.train_idx = decode_index_list(r);
    data.valid_idx = decode_index_list(r);
    data.test_idx = decode_index_list(r);
    r.expect_exhausted();
    return data;
}

std::vector<uint8_t> encode_model(const FineTunedModel& model) {
    ByteWriter w;
    encode_weights_into(w, model.weights);
    encode_head(w, model.head);
    encode_task_spec(w, model.task);
    w.u8(static_cast<uint8_t>(model.metric));
    encode_finetune_config(w, model.config);
    w.u32(static_cast<uint32_t>(model.valid_history.size()));
    for (const Score& s : model.valid_history) {
        w.f64(s.has_value() ? *s : std::numeric_limits<double>::quiet_NaN());
    }
    w.u32(static_cast<uint32_t>(model.best_epoch));
    return w.take();
}

FineTunedModel decode_model(const std::vector<uint8_t>& bytes) {
    ByteReader r(bytes, "FTMD");
    FineTunedModel model;
    model.weights = decode_weights_from(r);
    model.head = decode_head(r);
    model.task = decode_task_spec(r);
    model.metric = static_cast<MetricKind>(r.u8());
    model.config = decode_finetune_config(r);
    const uint32_t n = r.u32();
    model.valid_history.resize(n);
    for (uint32_t i = 0; i < n; ++i) {
        const double v = r.f64();
        model.valid_history[i] = std::isnan(v) ? Score(std::nullopt) : Score(v);
    }
    model.best_epoch = static_cast<int>(r.u32());
    r.expect_exhausted();
    return model;
}

std::vector<uint8_t> encode_activations(const ActivationSet& acts) {
    ByteWriter w;
    w.u32(static_cast<uint32_t>(acts.examples.size()));
    w.u32(static_cast<uint32_t>(acts.n_levels));
    w.u32(static_cast<uint32_t>(acts.d_model));
    w.u8(acts.label_kind);
    w.u8(1);  // split labels present
    w.u16(0);
    w.u32(acts.n_classes);
    for (const auto& ex : acts.examples) {
        w.u32(ex.id);
        if (acts.label_kind == 0) {
            w.u32(static_cast<uint32_t>(std::llround(ex.label)));
        } else {
            w.f32(static_cast<float>(ex.label));
        }
        w.u8(ex.split);
        w.u8(0);
        w.u8(0);
        w.u8(0);
        for (const auto& level : ex.levels) {
            for (double v : level) {
                w.f32(static_cast<float>(v));
            }
        }
        for (double v : ex.maxpool) {
            w.f32(static_cast<float>(v));
        }
    }
    return w.take();
}

ActivationSet decode_activations(const std::vector<uint8_t>& bytes) {
    ByteReader r(bytes, "ACTV");
    ActivationSet acts;
    const uint32_t n = r.u32();
    acts.n_levels = static_cast<int>(r.u32());
    acts.d_model = static_cast<int>(r.u32());
    acts.label_kind = r.u8();
    const uint8_t split_coded = r.u8();
    const uint16_t reserved = r.u16();
    acts.n_classes = r.u32();
    if (acts.label_kind > 1 || reserved != 0) {
        throw FormatError("ACTV: bad header");
    }
    if (split_coded != 1) {
        throw FormatError("ACTV: split labels missing");
    }
    acts.examples.resize(n);
    for (uint32_t i = 0; i < n; ++i) {
        ActivationExample& ex = acts.examples[i];
        ex.id = r.u32();
        if (acts.label_kind == 0) {
            ex.label = static_cast<double>(r.u32());
        } else {
            ex.label = static_cast<double>(r.f32());
        }
        ex.split = r.u8();
        if (ex.split > 2) {
            throw FormatError("ACTV: bad split code");
        }
        r.u8();
        r.u8();
        r.u8();
        ex.levels.assign(acts.n_levels, std::vector<double>(acts.d_model));
        for (auto& level : ex.levels) {
            for (auto& v : level) {
                v = static_cast<double>(r.f32());
            }
        }
        ex.maxpool.resize(acts.d_model);
        for (auto& v : ex.maxpool) {
            v = static_cast<double>(r.f32());
        }
    }
    r.expect_exhausted();
    return acts;
}

void save_weights(const std::string& path, const EncoderWeights& w) {
    write_container(path, {{kTagWeights, encode_weights(w)}});
}

EncoderWeights load_weights(const std::string& path) {
    return decode_weights(require_section(read_container(path), kTagWeights).bytes);
}

void save_model(const std::string& path, const FineTunedModel& model) {
    write_container(path, {{kTagModel, encode_model(model)}});
}

FineTunedModel load_model(const std::string& path) {
    return decode_model(require_section(read_container(path), kTagModel).bytes);
}

void save_activations(const std::string& path, const ActivationSet& acts) {
    write_container(path, {{kTagActivations, encode_activations(acts)}});
}

ActivationSet load_activations(const std::string& path) {
    return decode_activations(require_section(read_container(path), kTagActivations).bytes);
}

}  // namespace redprobe
