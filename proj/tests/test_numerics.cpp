#include <cmath>

#include "doctest.h"
#include "redprobe/autograd.hpp"
#include "redprobe/errors.hpp"
#include "redprobe/finetune.hpp"

using namespace redprobe;

namespace {

Matrix random_matrix(int r, int c, Rng& rng, double lo = -2.0, double hi = 2.0) {
    Matrix m(r, c);
    for (auto& v : m.values()) {
        v = rng.uniform_real(lo, hi);
    }
    return m;
}

}  // namespace

TEST_CASE("matmul identity and hand oracle") {
    Rng rng(1);
    Matrix m = random_matrix(3, 3, rng);
    Matrix id(3, 3);
    for (int i = 0; i < 3; ++i) {
        id(i, i) = 1.0;
    }
    Matrix mi = matmul(id, m);
    CHECK(mi.values() == m.values());

    // (M*I)*I == M bit-exactly
    Matrix mii = matmul(matmul(m, id), id);
    CHECK(mii.values() == m.values());

    Matrix a(1, 2, {1, 2});
    Matrix b(2, 1, {3, 4});
    Matrix c = matmul(a, b);
    CHECK(c.rows() == 1);
    CHECK(c.cols() == 1);
    CHECK(c(0, 0) == 11.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Matrix a(2, 3), b(2, 2);
    try {
        matmul(a, b);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("(2x3)") != std::string::npos);
        CHECK(msg.find("(2x2)") != std::string::npos);
    }
}

TEST_CASE("softmax rows") {
    Matrix m(1, 2, {0.0, 0.0});
    Matrix s = softmax_rows(m);
    CHECK(s(0, 0) == doctest::Approx(0.5).epsilon(1e-12));

    Matrix big(1, 2, {1000.0, 1000.0});
    Matrix sb = softmax_rows(big);
    CHECK(sb(0, 0) == doctest::Approx(0.5).epsilon(1e-12));

    Matrix ln3(1, 2, {0.0, std::log(3.0)});
    Matrix s3 = softmax_rows(ln3);
    CHECK(s3(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(s3(0, 1) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax row sums and nonnegativity over random matrices") {
    Rng rng(7);
    for (int t = 0; t < 1000; ++t) {
        const int r = 1 + static_cast<int>(rng.uniform_u64(4));
        const int c = 1 + static_cast<int>(rng.uniform_u64(6));
        Matrix s = softmax_rows(random_matrix(r, c, rng, -30.0, 30.0));
        for (int i = 0; i < r; ++i) {
            double sum = 0.0;
            for (int j = 0; j < c; ++j) {
                CHECK(s(i, j) >= 0.0);
                sum += s(i, j);
            }
            CHECK(std::fabs(sum - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("layer norm examples") {
    std::vector<double> gain1{1.0, 1.0}, bias0{0.0, 0.0};

    Matrix constant(1, 2, {5.0, 5.0});
    Matrix z = layer_norm_rows(constant, gain1, bias0, 1e-5);
    CHECK(z(0, 0) == doctest::Approx(0.0));
    CHECK(z(0, 1) == doctest::Approx(0.0));

    Matrix pm(1, 2, {-1.0, 1.0});
    Matrix n = layer_norm_rows(pm, gain1, bias0, 0.0);
    CHECK(n(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(n(0, 1) == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<double> gain2{2.0, 2.0}, bias1{1.0, 1.0};
    Matrix m(1, 2, {0.0, 2.0});
    Matrix o = layer_norm_rows(m, gain2, bias1, 0.0);
    CHECK(o(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(o(0, 1) == doctest::Approx(3.0).epsilon(1e-12));

    std::vector<double> short_gain{1.0};
    CHECK_THROWS_AS(layer_norm_rows(m, short_gain, bias0, 1e-5), DimensionError);
}

TEST_CASE("layer norm standardizes random rows") {
    Rng rng(11);
    std::vector<double> gain(8, 1.0), bias(8, 0.0);
    int tested = 0;
    while (tested < 500) {
        Matrix m = random_matrix(2, 8, rng, -3.0, 3.0);
        Matrix out = layer_norm_rows(m, gain, bias, 1e-5);
        for (int i = 0; i < m.rows(); ++i) {
            double mean = 0.0, var = 0.0;
            for (int j = 0; j < 8; ++j) {
                mean += m(i, j);
            }
            mean /= 8;
            for (int j = 0; j < 8; ++j) {
                var += (m(i, j) - mean) * (m(i, j) - mean);
            }
            var /= 8;
            if (var < 0.1) {
                continue;
            }
            double omean = 0.0, ovar = 0.0;
            for (int j = 0; j < 8; ++j) {
                omean += out(i, j);
            }
            omean /= 8;
            for (int j = 0; j < 8; ++j) {
                ovar += (out(i, j) - omean) * (out(i, j) - omean);
            }
            ovar /= 8;
            CHECK(std::fabs(omean) <= 1e-6);
            CHECK(std::fabs(ovar - 1.0) <= 1e-3);
            ++tested;
        }
    }
}

TEST_CASE("gelu values") {
    CHECK(gelu_scalar(0.0) == 0.0);
    CHECK(std::fabs(gelu_scalar(10.0) - 10.0) <= 1e-6);
    CHECK(std::fabs(gelu_scalar(1.0) - 0.8412) <= 1e-4);

    // independent high-precision evaluation of the same formula
    const long double u = 0.79788456080286535588L * (1.0L + 0.044715L);
    const long double ref = 0.5L * (1.0L + tanhl(u));
    CHECK(std::fabs(gelu_scalar(1.0) - static_cast<double>(ref)) <= 1e-12);
}

TEST_CASE("backward on sum gives all-ones gradient") {
    Parameter w("w", Matrix(3, 2, {1, 2, 3, 4, 5, 6}));
    Tape tape;
    const Var wv = tape.param(w);
    const Var loss = tape.sum(wv);
    tape.backward(loss);
    for (double g : w.grad.values()) {
        CHECK(g == 1.0);
    }
}

TEST_CASE("backward matches closed form for half squared residual") {
    // loss = 0.5 * ||W x - y||^2, dW = (W x - y) x^T
    Rng rng(3);
    Parameter w("w", random_matrix(3, 2, rng));
    Matrix x(2, 1, {0.7, -1.3});
    Matrix y(3, 1, {0.2, 0.5, -0.1});

    Tape tape;
    const Var wv = tape.param(w);
    const Var r = tape.add_const(tape.matmul(wv, tape.leaf(x)), scale(y, -1.0));
    const Var loss = tape.scale(tape.sum(tape.mul(r, r)), 0.5);
    tape.backward(loss);

    const Matrix residual = sub(matmul(w.value, x), y);
    const Matrix expected = matmul_nt(residual, x);
    for (size_t i = 0; i < expected.size(); ++i) {
        CHECK(w.grad.values()[i] == doctest::Approx(expected.values()[i]).epsilon(1e-12));
    }
}

TEST_CASE("backward twice without re-recording is a stale-tape error") {
    Parameter w("w", Matrix(1, 1, {2.0}));
    Tape tape;
    const Var loss = tape.sum(tape.param(w));
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), StaleTapeError);
    tape.reset();
    const Var loss2 = tape.sum(tape.param(w));
    tape.backward(loss2);  // fine after re-recording
}

namespace {

// Gradient check model: 2-layer encoder + linear head at a generic random
// point. The raw init point is too stiff for h=1e-3 central differences (the
// first layer norm sits on rows with tiny variance), so re-draw all
// parameters uniformly first.
struct CheckModel {
    EncoderWeights w;
    Head head;
    std::vector<std::vector<int>> tokens;
    std::vector<int> golds;
    std::vector<Parameter*> params;

    CheckModel() {
        EncoderConfig enc;
        enc.vocab_size = 12;
        enc.max_len = 8;
        enc.d_model = 8;
        enc.n_layers = 2;
        enc.n_heads = 2;
        enc.d_ff = 16;
        enc.dropout_rate = 0.0;
        enc.seed = 5;
        w = init_weights(enc);
        head = init_head(enc.d_model, 2, 1, 9);
        tokens = {{1, 4, 5, 6}, {1, 7, 8, 4}, {1, 9, 10, 11}};
        golds = {0, 1, 1};
        params = w.all_params();
        for (auto* p : head.params()) {
            params.push_back(p);
        }
        Rng point(77);
        for (Parameter* p : params) {
            for (auto& v : p->value.values()) {
                v = point.uniform_real(-0.5, 0.5);
            }
        }
    }

    double loss(bool want_grad) {
        Tape tape;
        Rng rng(0);
        const BoundEncoder enc_b = bind_encoder(tape, w);
        const Var hw = tape.param(head.w1), hb = tape.param(head.b1);
        std::vector<Var> losses;
        for (size_t i = 0; i < tokens.size(); ++i) {
            const std::vector<int> segs(tokens[i].size(), 0);
            const auto levels = encoder_graph(tape, enc_b, tokens[i], segs, false, 0.0, rng);
            const Var logits = tape.add(tape.matmul(tape.row_select(levels.back(), 0), hw), hb);
            losses.push_back(tape.softmax_cross_entropy(logits, golds[i]));
        }
        const Var loss = tape.mean_scalars(losses);
        if (want_grad) {
            tape.backward(loss);
        }
        return tape.scalar(loss);
    }
};

}  // namespace

TEST_CASE("finite difference check: linear head alone is clean") {
    Rng rng(21);
    Parameter w("w", random_matrix(4, 3, rng));
    Parameter b("b", random_matrix(1, 3, rng));
    Matrix x(1, 4, {0.3, -0.8, 1.1, 0.4});
    std::vector<Parameter*> params{&w, &b};
    auto loss_fn = [&](bool want_grad) {
        Tape tape;
        const Var logits = tape.add(tape.matmul(tape.leaf(x), tape.param(w)), tape.param(b));
        const Var loss = tape.softmax_cross_entropy(logits, 1);
        if (want_grad) {
            tape.backward(loss);
        }
        return tape.scalar(loss);
    };
    const auto report = finite_diff_check(params, loss_fn, 1e-6);
    CHECK(report.pass);
    CHECK(report.max_rel_error <= 1e-6);
}

TEST_CASE("finite difference check: 2-layer encoder with head at 1e-4") {
    CheckModel model;
    auto loss_fn = [&model](bool want_grad) { return model.loss(want_grad); };
    const auto report = finite_diff_check(model.params, loss_fn, 1e-4);
    CHECK(report.checked_scalars <= 5000);
    CHECK(report.max_rel_error <= 1e-4);
    CHECK(report.pass);
}

TEST_CASE("finite difference check: tolerance zero fails in floating point") {
    CheckModel model;
    auto loss_fn = [&model](bool want_grad) { return model.loss(want_grad); };
    const auto report = finite_diff_check(model.params, loss_fn, 0.0);
    CHECK_FALSE(report.pass);
}

TEST_CASE("finite difference check rejects oversized models") {
    Parameter w("w", Matrix(100, 100));
    std::vector<Parameter*> params{&w};
    auto loss_fn = [](bool) { return 0.0; };
    CHECK_THROWS_AS(finite_diff_check(params, loss_fn, 1e-4), ConfigError);
}

TEST_CASE("gradient clipping caps the global norm") {
    Parameter a("a", Matrix(1, 2, {0.0, 0.0}));
    Parameter b("b", Matrix(1, 2, {0.0, 0.0}));
    a.grad = Matrix(1, 2, {3.0, 0.0});
    b.grad = Matrix(1, 2, {0.0, 4.0});
    std::vector<Parameter*> params{&a, &b};
    CHECK(global_grad_norm(params) == doctest::Approx(5.0));
    clip_global_norm(params, 1.0);
    CHECK(global_grad_norm(params) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a.grad(0, 0) == doctest::Approx(0.6).epsilon(1e-12));

    // already small: untouched
    clip_global_norm(params, 2.0);
    CHECK(global_grad_norm(params) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("dropout is inverted and rate zero is identity") {
    Rng rng(5);
    Tape tape;
    Matrix x = Matrix::filled(50, 20, 1.0);
    const Var xv = tape.leaf(x);
    CHECK(tape.dropout(xv, 0.0, rng) == xv);

    const Var dropped = tape.dropout(xv, 0.25, rng);
    const Matrix& dv = tape.value(dropped);
    double sum = 0.0;
    for (double v : dv.values()) {
        CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
        sum += v;
    }
    // inverted dropout keeps the expectation
    CHECK(sum / dv.size() == doctest::Approx(1.0).epsilon(0.1));
    CHECK_THROWS_AS(tape.dropout(xv, 1.0, rng), ConfigError);
}
