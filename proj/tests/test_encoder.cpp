#include <cmath>

#include "doctest.h"
#include "redprobe/encoder.hpp"
#include "redprobe/errors.hpp"

using namespace redprobe;

namespace {

EncoderConfig small_config() {
    EncoderConfig enc;
    enc.vocab_size = 16;
    enc.max_len = 10;
    enc.d_model = 8;
    enc.n_layers = 2;
    enc.n_heads = 2;
    enc.d_ff = 16;
    enc.dropout_rate = 0.1;
    enc.seed = 3;
    return enc;
}

}  // namespace

TEST_CASE("init is deterministic and validates the config") {
    const EncoderConfig enc = small_config();
    CHECK(weights_equal(init_weights(enc), init_weights(enc)));

    EncoderConfig other = enc;
    other.seed = 4;
    CHECK_FALSE(weights_equal(init_weights(enc), init_weights(other)));

    EncoderConfig cfg32;
    cfg32.d_model = 32;
    cfg32.n_heads = 4;
    CHECK(cfg32.head_dim() == 8);

    EncoderConfig bad;
    bad.d_model = 30;
    bad.n_heads = 4;
    CHECK_THROWS_AS(init_weights(bad), ConfigError);

    EncoderConfig short_seq = enc;
    short_seq.max_len = 2;
    CHECK_THROWS_AS(short_seq.validate(), ConfigError);
}

TEST_CASE("forward shapes, determinism and dropout-off equivalence") {
    const EncoderWeights w = init_weights(small_config());

    const std::vector<int> tokens{kClsId, 5};
    const std::vector<int> segs{0, 0};
    const ActivationTrace a = forward(w, tokens, segs);
    CHECK(a.n_levels() == 3);  // embedding + 2 layers
    for (const auto& level : a.levels) {
        CHECK(level.rows() == 2);
        CHECK(level.cols() == 8);
    }

    const ActivationTrace b = forward(w, tokens, segs);
    for (int lv = 0; lv < a.n_levels(); ++lv) {
        CHECK(a.levels[lv].values() == b.levels[lv].values());
    }

    // with dropout_rate 0, train and inference traces agree bit for bit
    EncoderConfig no_drop = small_config();
    no_drop.dropout_rate = 0.0;
    const EncoderWeights w0 = init_weights(no_drop);
    const ActivationTrace train_mode = forward(w0, tokens, segs, true, 123);
    const ActivationTrace infer_mode = forward(w0, tokens, segs, false);
    for (int lv = 0; lv < train_mode.n_levels(); ++lv) {
        CHECK(train_mode.levels[lv].values() == infer_mode.levels[lv].values());
    }
}

TEST_CASE("forward rejects bad inputs") {
    const EncoderWeights w = init_weights(small_config());
    const std::vector<int> segs{0, 0};
    CHECK_THROWS_AS(forward(w, {kClsId, 16}, segs), VocabularyError);
    CHECK_THROWS_AS(forward(w, {kClsId, -1}, segs), VocabularyError);
    const std::vector<int> long_tokens(11, kClsId);
    const std::vector<int> long_segs(11, 0);
    CHECK_THROWS_AS(forward(w, long_tokens, long_segs), TruncationError);
    CHECK_THROWS_AS(forward(w, {kClsId, 5}, {0}), DimensionError);
}

TEST_CASE("trailing padding never changes the CLS row at any level") {
    const EncoderWeights w = init_weights(small_config());
    const std::vector<int> tokens{kClsId, 5, 6, 7};
    const std::vector<int> segs{0, 0, 0, 0};
    const ActivationTrace plain = forward(w, tokens, segs);

    std::vector<int> padded = tokens;
    std::vector<int> padded_segs = segs;
    for (int i = 0; i < 4; ++i) {
        padded.push_back(kPadId);
        padded_segs.push_back(0);
    }
    const ActivationTrace with_pad = forward(w, padded, padded_segs);

    for (int lv = 0; lv < plain.n_levels(); ++lv) {
        for (int j = 0; j < 8; ++j) {
            CHECK(std::fabs(plain.levels[lv](0, j) - with_pad.levels[lv](0, j)) <= 1e-9);
        }
    }
}

TEST_CASE("tokenizer helpers") {
    const EncodedInput single = encode_single({5, 6});
    CHECK(single.tokens == std::vector<int>{kClsId, 5, 6});
    CHECK(single.segments == std::vector<int>{0, 0, 0});

    const EncodedInput pair = encode_pair({5}, {6, 7});
    CHECK(pair.tokens == std::vector<int>{kClsId, 5, kSepId, 6, 7});
    CHECK(pair.segments == std::vector<int>{0, 0, 0, 1, 1});
}

TEST_CASE("mlm pretraining contracts") {
    const EncoderConfig enc = small_config();
    const auto corpus = make_bigram_corpus(enc, 64, 6, 2);
    REQUIRE(corpus.size() == 64);
    for (const auto& seq : corpus) {
        CHECK(seq.size() == 7);
        CHECK(seq[0] == kClsId);
    }

    // zero steps leaves weights untouched
    EncoderWeights w = init_weights(enc);
    const EncoderWeights before = w;
    const auto empty_hist = pretrain_mlm(w, corpus, 0, 0.15, 0.1, 1);
    CHECK(empty_hist.empty());
    CHECK(weights_equal(w, before));

    // identical seeds give identical loss histories
    EncoderWeights w1 = init_weights(enc);
    EncoderWeights w2 = init_weights(enc);
    const auto h1 = pretrain_mlm(w1, corpus, 50, 0.15, 0.1, 7);
    const auto h2 = pretrain_mlm(w2, corpus, 50, 0.15, 0.1, 7);
    CHECK(h1 == h2);
    CHECK(weights_equal(w1, w2));
    for (double loss : h1) {
        CHECK(std::isfinite(loss));
    }

    CHECK_THROWS_AS(pretrain_mlm(w, {}, 10, 0.15, 0.1, 1), DataError);
    CHECK_THROWS_AS(pretrain_mlm(w, corpus, 10, 0.0, 0.1, 1), ConfigError);
}

TEST_CASE("mlm pretraining reduces loss on a structured corpus, 3 of 3 seeds") {
    EncoderConfig enc;
    enc.seed = 7;
    const auto corpus = make_bigram_corpus(enc, 256, 12, 3);
    for (uint64_t seed : {11u, 12u, 13u}) {
        EncoderWeights w = init_weights(enc);
        const auto hist = pretrain_mlm(w, corpus, 1500, 0.15, 0.1, seed);
        double first = 0.0, last = 0.0;
        for (int i = 0; i < 100; ++i) {
            first += hist[i];
            last += hist[hist.size() - 100 + i];
        }
        CHECK(last / 100.0 < first / 100.0);
    }
}
