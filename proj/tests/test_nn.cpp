#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "otdrnet/nn.hpp"

using namespace otdrnet;

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

GruLayerParams random_gru(int in, int hid, std::uint64_t seed) {
    GruLayerParams p(in, hid);
    Rng rng(seed);
    init_gru(p, rng);
    // non-zero biases exercise every gradient path
    for (Matrix* b : {&p.bz, &p.br, &p.bh})
        for (double& v : b->v) v = rng.uniform(-0.3, 0.3);
    return p;
}

Matrix random_input(int T, int dim, std::uint64_t seed) {
    Matrix X(T, dim);
    Rng rng(seed);
    for (double& v : X.v) v = rng.uniform(-1.0, 1.0);
    return X;
}

} // namespace

TEST_CASE("matrix kernels match hand-computed products") {
    Matrix M(2, 3);
    // [1 2 3; 4 5 6]
    for (int i = 0; i < 6; ++i) M.v[i] = i + 1;

    double x[3] = {1.0, 0.0, -1.0};
    double y[2] = {10.0, 20.0};
    matvec_add(M, x, y);
    CHECK(y[0] == 10.0 + (1.0 - 3.0));
    CHECK(y[1] == 20.0 + (4.0 - 6.0));

    double u[2] = {1.0, 2.0};
    double w[3] = {0.0, 0.0, 0.0};
    matvec_t_add(M, u, w);
    CHECK(w[0] == 1.0 * 1.0 + 4.0 * 2.0);
    CHECK(w[1] == 2.0 * 1.0 + 5.0 * 2.0);
    CHECK(w[2] == 3.0 * 1.0 + 6.0 * 2.0);

    Matrix G(2, 3);
    double a[2] = {2.0, -1.0};
    double b[3] = {1.0, 0.5, 0.0};
    outer_add(a, b, G);
    CHECK(G(0, 0) == 2.0);
    CHECK(G(0, 1) == 1.0);
    CHECK(G(1, 0) == -1.0);
    CHECK(G(1, 2) == 0.0);
}

TEST_CASE("gru_cell_forward matches the scalar gate equations") {
    GruLayerParams p(1, 1);
    p.Wz(0, 0) = 0.5;  p.Uz(0, 0) = -0.25; p.bz(0, 0) = 0.1;
    p.Wr(0, 0) = -0.3; p.Ur(0, 0) = 0.4;   p.br(0, 0) = -0.2;
    p.Wh(0, 0) = 0.7;  p.Uh(0, 0) = 0.6;   p.bh(0, 0) = 0.05;

    const double x = 0.8, h_prev = -0.4;
    const double z = logistic(0.5 * x - 0.25 * h_prev + 0.1);
    const double r = logistic(-0.3 * x + 0.4 * h_prev - 0.2);
    const double hc = std::tanh(0.7 * x + 0.6 * (r * h_prev) + 0.05);
    const double h_ref = (1.0 - z) * h_prev + z * hc;

    GruStepCache cache;
    auto h = gru_cell_forward({x}, {h_prev}, p, &cache);
    CHECK(h[0] == doctest::Approx(h_ref).epsilon(1e-12));
    CHECK(cache.z[0] == doctest::Approx(z));
    CHECK(cache.r[0] == doctest::Approx(r));
    CHECK(cache.hc[0] == doctest::Approx(hc));
    CHECK(cache.rh[0] == doctest::Approx(r * h_prev));
    CHECK(cache.h_prev[0] == h_prev);
}

TEST_CASE("gru_cell_forward: fixed points and bounds") {
    GruLayerParams p(2, 3); // all-zero weights
    auto h = gru_cell_forward({1.0, -1.0}, {0.0, 0.0, 0.0}, p);
    for (double v : h) CHECK(v == 0.0); // z=0.5, hc=0 -> h stays 0

    // with h_prev in [-1, 1] the new state is a convex mix of h_prev and tanh
    GruLayerParams q = random_gru(2, 3, 11);
    Rng rng(5);
    std::vector<double> hp = {0.9, -0.8, 0.3};
    for (int t = 0; t < 50; ++t) {
        hp = gru_cell_forward({rng.uniform(-2, 2), rng.uniform(-2, 2)}, hp, q);
        for (double v : hp) {
            CHECK(v <= 1.0);
            CHECK(v >= -1.0);
        }
    }

    CHECK_THROWS_AS(gru_cell_forward({1.0}, {0.0, 0.0, 0.0}, q), std::invalid_argument);
}

TEST_CASE("gru_layer_forward equals repeated cell application") {
    GruLayerParams p = random_gru(3, 4, 21);
    Matrix X = random_input(6, 3, 22);

    GruLayerCache cache;
    Matrix H = gru_layer_forward(X, {}, p, &cache);
    REQUIRE(H.rows == 6);
    REQUIRE(H.cols == 4);

    std::vector<double> h(4, 0.0);
    for (int t = 0; t < 6; ++t) {
        std::vector<double> x(X.row(t), X.row(t) + 3);
        h = gru_cell_forward(x, h, p);
        for (int i = 0; i < 4; ++i) CHECK(H(t, i) == doctest::Approx(h[i]).epsilon(1e-14));
    }

    // explicit h0 is honored
    std::vector<double> h0 = {0.1, -0.2, 0.3, 0.0};
    Matrix H2 = gru_layer_forward(X, h0, p);
    std::vector<double> x0(X.row(0), X.row(0) + 3);
    auto step0 = gru_cell_forward(x0, h0, p);
    for (int i = 0; i < 4; ++i) CHECK(H2(0, i) == doctest::Approx(step0[i]));

    CHECK_THROWS_AS(gru_layer_forward(X, {1.0}, p), std::invalid_argument);
    CHECK_THROWS_AS(gru_layer_forward(Matrix(0, 3), {}, p), std::invalid_argument);
}

TEST_CASE("gru_layer_backward passes finite-difference checks") {
    GruLayerParams p = random_gru(3, 5, 31);
    Matrix X = random_input(8, 3, 32);
    std::vector<double> h0 = {0.2, -0.1, 0.05, 0.3, -0.25};

    // loss: weighted sum of all hidden states, weights fixed
    Matrix W = random_input(8, 5, 33);
    auto loss = [&]() {
        Matrix H = gru_layer_forward(X, h0, p);
        return std::inner_product(H.v.begin(), H.v.end(), W.v.begin(), 0.0);
    };

    GruLayerCache cache;
    gru_layer_forward(X, h0, p, &cache);
    GruLayerParams grads(3, 5);
    Matrix dX;
    std::vector<double> dh0;
    gru_layer_backward(W, cache, p, dX, grads, dh0);

    Rng rng(34);
    std::vector<GradCheckBlock> blocks;
    const char* names[] = {"Wz", "Wr", "Wh", "Uz", "Ur", "Uh", "bz", "br", "bh"};
    auto pb = p.blocks();
    auto gb = grads.blocks();
    for (size_t i = 0; i < pb.size(); ++i) blocks.push_back({names[i], pb[i], gb[i]});
    GradCheckReport rep = grad_check(loss, blocks, 20, rng);
    INFO("worst block: " << rep.worst_block);
    CHECK(rep.max_rel_error < 1e-6);

    // dX against finite differences on the inputs
    for (int probe : {0, 7, 11, 20}) {
        const double step = 1e-6, orig = X.v[probe];
        X.v[probe] = orig + step;
        double lp = loss();
        X.v[probe] = orig - step;
        double lm = loss();
        X.v[probe] = orig;
        CHECK(dX.v[probe] == doctest::Approx((lp - lm) / (2 * step)).epsilon(1e-5));
    }

    // dh0 against finite differences on the initial state
    for (int i = 0; i < 5; ++i) {
        const double step = 1e-6, orig = h0[i];
        h0[i] = orig + step;
        double lp = loss();
        h0[i] = orig - step;
        double lm = loss();
        h0[i] = orig;
        CHECK(dh0[i] == doctest::Approx((lp - lm) / (2 * step)).epsilon(1e-5));
    }
}

TEST_CASE("dense layer: forward oracle and gradient check") {
    DenseParams p(2, 2, Activation::Identity);
    p.W(0, 0) = 1.0; p.W(0, 1) = -2.0;
    p.W(1, 0) = 0.5; p.W(1, 1) = 0.25;
    p.b(0, 0) = 0.1; p.b(1, 0) = -0.1;

    auto y = dense_forward({2.0, 1.0}, p);
    CHECK(y[0] == doctest::Approx(1.0 * 2 - 2.0 * 1 + 0.1));
    CHECK(y[1] == doctest::Approx(0.5 * 2 + 0.25 * 1 - 0.1));

    p.act = Activation::Tanh;
    auto yt = dense_forward({2.0, 1.0}, p);
    CHECK(yt[0] == doctest::Approx(std::tanh(y[0])));

    DenseParams q(4, 3, Activation::Tanh);
    Rng rng(41);
    init_dense(q, rng);
    for (double& v : q.b.v) v = rng.uniform(-0.2, 0.2);
    std::vector<double> x = {0.3, -0.7, 0.5, 0.1};
    std::vector<double> wsum = {1.0, -2.0, 0.5};

    auto loss = [&]() {
        auto out = dense_forward(x, q);
        return std::inner_product(out.begin(), out.end(), wsum.begin(), 0.0);
    };

    DenseCache cache;
    dense_forward(x, q, &cache);
    DenseParams grads(4, 3, Activation::Tanh);
    std::vector<double> dx;
    dense_backward(wsum, cache, q, dx, grads);

    Rng grng(42);
    GradCheckReport rep = grad_check(
        loss, {{"W", &q.W, &grads.W}, {"b", &q.b, &grads.b}}, 12, grng);
    CHECK(rep.max_rel_error < 1e-7);

    for (size_t i = 0; i < x.size(); ++i) {
        const double step = 1e-6, orig = x[i];
        x[i] = orig + step;
        double lp = loss();
        x[i] = orig - step;
        double lm = loss();
        x[i] = orig;
        CHECK(dx[i] == doctest::Approx((lp - lm) / (2 * step)).epsilon(1e-6));
    }
}

TEST_CASE("softmax: normalization, shift invariance and stability") {
    auto p = softmax({1.0, 2.0, 3.0});
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p[2] > p[1]);
    CHECK(p[1] > p[0]);
    CHECK(p[1] / p[0] == doctest::Approx(std::exp(1.0)).epsilon(1e-12));

    auto q = softmax({1001.0, 1002.0, 1003.0});
    for (int i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(q[i]).epsilon(1e-12));

    auto two = softmax({0.0, 0.0});
    CHECK(two[0] == doctest::Approx(0.5));
}

TEST_CASE("softmax_cross_entropy: oracle values and gradient identity") {
    // uniform logits -> loss = log K
    auto [l0, g0] = softmax_cross_entropy({0.0, 0.0, 0.0, 0.0}, 2);
    CHECK(l0 == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(g0[2] == doctest::Approx(0.25 - 1.0));
    CHECK(g0[0] == doctest::Approx(0.25));

    // gradient = softmax - onehot, and it sums to zero
    std::vector<double> logits = {0.3, -1.2, 2.0, 0.7, -0.5};
    auto [loss, g] = softmax_cross_entropy(logits, 3);
    auto sm = softmax(logits);
    for (size_t i = 0; i < g.size(); ++i)
        CHECK(g[i] == doctest::Approx(sm[i] - (i == 3 ? 1.0 : 0.0)).epsilon(1e-12));
    CHECK(std::accumulate(g.begin(), g.end(), 0.0) == doctest::Approx(0.0).epsilon(1e-12));

    // finite differences on the logits
    for (size_t i = 0; i < logits.size(); ++i) {
        const double step = 1e-6, orig = logits[i];
        logits[i] = orig + step;
        double lp = softmax_cross_entropy(logits, 3).first;
        logits[i] = orig - step;
        double lm = softmax_cross_entropy(logits, 3).first;
        logits[i] = orig;
        CHECK(g[i] == doctest::Approx((lp - lm) / (2 * step)).epsilon(1e-5));
    }

    // extreme logits stay finite
    auto [lbig, gbig] = softmax_cross_entropy({1e4, -1e4}, 1);
    CHECK(std::isfinite(lbig));
    CHECK(lbig == doctest::Approx(2e4));

    CHECK_THROWS_AS(softmax_cross_entropy({1.0, 2.0}, 2), std::invalid_argument);
    CHECK_THROWS_AS(softmax_cross_entropy({1.0, 2.0}, -1), std::invalid_argument);
    CHECK_THROWS_AS(softmax_cross_entropy({1.0}, 0), std::invalid_argument);
}

TEST_CASE("masked_mse: averaging over active terms only") {
    auto [loss, g] = masked_mse({1.0, 2.0, 3.0}, {0.0, 2.0, 1.0}, {true, false, true});
    // active errors: 1 and 2 -> (1 + 4) / 2
    CHECK(loss == doctest::Approx(2.5));
    CHECK(g[0] == doctest::Approx(2.0 * 1.0 / 2.0));
    CHECK(g[1] == 0.0);
    CHECK(g[2] == doctest::Approx(2.0 * 2.0 / 2.0));

    // fully masked: zero loss, zero gradient, no division by zero
    auto [l2, g2] = masked_mse({5.0, 5.0}, {0.0, 0.0}, {false, false});
    CHECK(l2 == 0.0);
    CHECK(g2[0] == 0.0);
    CHECK(g2[1] == 0.0);

    CHECK_THROWS_AS(masked_mse({1.0}, {1.0, 2.0}, {true, true}), std::invalid_argument);
}

TEST_CASE("adam_step matches a hand-stepped scalar update") {
    Matrix p(1, 1), g(1, 1);
    p(0, 0) = 1.0;
    g(0, 0) = 0.5;
    AdamState st;
    st.lr = 0.1;
    st.init({&p});

    adam_step({&p}, {&g}, st);
    // t=1: mhat = g, vhat = g^2 -> step = lr * g / (|g| + eps)
    CHECK(p(0, 0) == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));

    // second step with the same gradient keeps moving the same direction
    const double before = p(0, 0);
    adam_step({&p}, {&g}, st);
    CHECK(p(0, 0) < before);
    CHECK(st.t == 2);

    Matrix bad(1, 1);
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(adam_step({&p}, {&bad}, st), std::runtime_error);
}

TEST_CASE("adam converges on a convex quadratic") {
    Matrix p(2, 1), g(2, 1);
    p(0, 0) = 3.0;
    p(1, 0) = -2.0;
    AdamState st;
    st.lr = 0.05;
    st.init({&p});
    for (int it = 0; it < 2000; ++it) {
        g(0, 0) = 2.0 * (p(0, 0) - 1.0);
        g(1, 0) = 2.0 * (p(1, 0) + 4.0);
        adam_step({&p}, {&g}, st);
    }
    CHECK(p(0, 0) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(p(1, 0) == doctest::Approx(-4.0).epsilon(1e-3));
}

TEST_CASE("initializers: Glorot bounds and orthogonality") {
    Matrix W(12, 8);
    Rng rng(71);
    glorot_uniform(W, rng);
    const double limit = std::sqrt(6.0 / (12 + 8));
    double mx = 0.0;
    for (double v : W.v) mx = std::max(mx, std::abs(v));
    CHECK(mx <= limit);
    CHECK(mx > 0.5 * limit); // the draw actually fills the range

    Matrix Q(10, 10);
    orthogonal_init(Q, rng);
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) {
            double dot = 0.0;
            for (int r = 0; r < 10; ++r) dot += Q(r, i) * Q(r, j);
            CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-10));
        }

    Matrix rect(3, 5);
    CHECK_THROWS_AS(orthogonal_init(rect, rng), std::invalid_argument);

    // determinism of the full initializer
    GruLayerParams a(4, 6), b(4, 6);
    Rng r1(9), r2(9);
    init_gru(a, r1);
    init_gru(b, r2);
    auto ab = a.blocks();
    auto bb = b.blocks();
    for (size_t i = 0; i < ab.size(); ++i) CHECK(ab[i]->v == bb[i]->v);
}

TEST_CASE("grad_check flags a deliberately wrong gradient") {
    Matrix p(2, 2), g(2, 2);
    Rng rng(81);
    for (double& v : p.v) v = rng.uniform(-1, 1);

    // loss = sum of squares; true gradient is 2p
    auto loss = [&]() {
        double s = 0.0;
        for (double v : p.v) s += v * v;
        return s;
    };
    for (size_t i = 0; i < p.v.size(); ++i) g.v[i] = 2.0 * p.v[i];

    Rng crng(82);
    GradCheckReport ok = grad_check(loss, {{"p", &p, &g}}, 10, crng);
    CHECK(ok.passed(1e-6));
    CHECK(ok.worst_block == "p");

    g.v[3] *= 1.5; // corrupt one coordinate
    Rng crng2(83);
    GradCheckReport bad = grad_check(loss, {{"p", &p, &g}}, 10, crng2);
    CHECK_FALSE(bad.passed(1e-5));
}
