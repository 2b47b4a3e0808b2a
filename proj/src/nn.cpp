#include "otdrnet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace otdrnet {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_finite(const Matrix& g, const char* what) {
    for (double x : g.v)
        if (!std::isfinite(x)) throw std::runtime_error(std::string(what) + ": non-finite value");
}

} // namespace

GruLayerParams::GruLayerParams(int in, int hidden)
    : input_dim(in), hidden_dim(hidden),
      Wz(hidden, in), Wr(hidden, in), Wh(hidden, in),
      Uz(hidden, hidden), Ur(hidden, hidden), Uh(hidden, hidden),
      bz(hidden, 1), br(hidden, 1), bh(hidden, 1) {}

std::vector<Matrix*> GruLayerParams::blocks() {
    return {&Wz, &Wr, &Wh, &Uz, &Ur, &Uh, &bz, &br, &bh};
}

std::vector<const Matrix*> GruLayerParams::blocks() const {
    return {&Wz, &Wr, &Wh, &Uz, &Ur, &Uh, &bz, &br, &bh};
}

void GruLayerParams::zero() {
    for (Matrix* m : blocks()) m->zero();
}

DenseParams::DenseParams(int in, int out, Activation a) : W(out, in), b(out, 1), act(a) {}

std::vector<Matrix*> DenseParams::blocks() { return {&W, &b}; }
std::vector<const Matrix*> DenseParams::blocks() const { return {&W, &b}; }
void DenseParams::zero() {
    W.zero();
    b.zero();
}

std::vector<double> gru_cell_forward(const std::vector<double>& x, const std::vector<double>& h_prev,
                                     const GruLayerParams& p, GruStepCache* cache) {
    const int in = p.input_dim, hid = p.hidden_dim;
    if (static_cast<int>(x.size()) != in || static_cast<int>(h_prev.size()) != hid)
        throw std::invalid_argument("gru_cell_forward: dimension mismatch");

    std::vector<double> z(p.bz.v), r(p.br.v);
    matvec_add(p.Wz, x.data(), z.data());
    matvec_add(p.Uz, h_prev.data(), z.data());
    matvec_add(p.Wr, x.data(), r.data());
    matvec_add(p.Ur, h_prev.data(), r.data());
    for (int i = 0; i < hid; ++i) {
        z[i] = sigmoid(z[i]);
        r[i] = sigmoid(r[i]);
    }

    std::vector<double> rh(hid);
    for (int i = 0; i < hid; ++i) rh[i] = r[i] * h_prev[i];

    std::vector<double> hc(p.bh.v);
    matvec_add(p.Wh, x.data(), hc.data());
    matvec_add(p.Uh, rh.data(), hc.data());
    for (int i = 0; i < hid; ++i) hc[i] = std::tanh(hc[i]);

    std::vector<double> h(hid);
    for (int i = 0; i < hid; ++i) h[i] = (1.0 - z[i]) * h_prev[i] + z[i] * hc[i];

    if (cache) {
        cache->h_prev = h_prev;
        cache->z = std::move(z);
        cache->r = std::move(r);
        cache->hc = std::move(hc);
        cache->rh = std::move(rh);
    }
    return h;
}

Matrix gru_layer_forward(const Matrix& X, const std::vector<double>& h0, const GruLayerParams& p,
                         GruLayerCache* cache) {
    if (X.cols != p.input_dim)
        throw std::invalid_argument("gru_layer_forward: input dimension mismatch");
    if (X.rows < 1) throw std::invalid_argument("gru_layer_forward: empty sequence");

    const int T = X.rows, hid = p.hidden_dim;
    std::vector<double> h = h0.empty() ? std::vector<double>(hid, 0.0) : h0;
    if (static_cast<int>(h.size()) != hid)
        throw std::invalid_argument("gru_layer_forward: h0 dimension mismatch");

    if (cache) {
        cache->X = X;
        cache->h0 = h;
        cache->steps.resize(T);
    }

    Matrix H(T, hid);
    std::vector<double> x(p.input_dim);
    for (int t = 0; t < T; ++t) {
        std::copy(X.row(t), X.row(t) + X.cols, x.begin());
        h = gru_cell_forward(x, h, p, cache ? &cache->steps[t] : nullptr);
        std::copy(h.begin(), h.end(), H.row(t));
    }
    return H;
}

void gru_layer_backward(const Matrix& dH, const GruLayerCache& cache, const GruLayerParams& p,
                        Matrix& dX, GruLayerParams& grads, std::vector<double>& dh0) {
    const int T = static_cast<int>(cache.steps.size());
    const int hid = p.hidden_dim, in = p.input_dim;
    if (dH.rows != T || dH.cols != hid)
        throw std::invalid_argument("gru_layer_backward: dH shape mismatch");
    if (cache.X.cols != in)
        throw std::invalid_argument("gru_layer_backward: cache mismatch");

    dX = Matrix(T, in);
    std::vector<double> dh(hid, 0.0);
    std::vector<double> x(in), dz(hid), dr(hid), dhc(hid), daz(hid), dar(hid), dah(hid), drh(hid),
        dh_prev(hid);

    for (int t = T - 1; t >= 0; --t) {
        const GruStepCache& c = cache.steps[t];
        for (int i = 0; i < hid; ++i) dh[i] += dH(t, i);

        for (int i = 0; i < hid; ++i) {
            dhc[i] = dh[i] * c.z[i];
            dz[i] = dh[i] * (c.hc[i] - c.h_prev[i]);
            dh_prev[i] = dh[i] * (1.0 - c.z[i]);
            dah[i] = dhc[i] * (1.0 - c.hc[i] * c.hc[i]);
            daz[i] = dz[i] * c.z[i] * (1.0 - c.z[i]);
        }

        std::fill(drh.begin(), drh.end(), 0.0);
        matvec_t_add(p.Uh, dah.data(), drh.data());
        for (int i = 0; i < hid; ++i) {
            dr[i] = drh[i] * c.h_prev[i];
            dh_prev[i] += drh[i] * c.r[i];
            dar[i] = dr[i] * c.r[i] * (1.0 - c.r[i]);
        }

        std::copy(cache.X.row(t), cache.X.row(t) + in, x.begin());
        outer_add(daz.data(), x.data(), grads.Wz);
        outer_add(dar.data(), x.data(), grads.Wr);
        outer_add(dah.data(), x.data(), grads.Wh);
        outer_add(daz.data(), c.h_prev.data(), grads.Uz);
        outer_add(dar.data(), c.h_prev.data(), grads.Ur);
        outer_add(dah.data(), c.rh.data(), grads.Uh);
        for (int i = 0; i < hid; ++i) {
            grads.bz(i, 0) += daz[i];
            grads.br(i, 0) += dar[i];
            grads.bh(i, 0) += dah[i];
        }

        double* dxr = dX.row(t);
        matvec_t_add(p.Wz, daz.data(), dxr);
        matvec_t_add(p.Wr, dar.data(), dxr);
        matvec_t_add(p.Wh, dah.data(), dxr);

        matvec_t_add(p.Uz, daz.data(), dh_prev.data());
        matvec_t_add(p.Ur, dar.data(), dh_prev.data());
        dh = dh_prev;
    }
    dh0 = dh;
}

std::vector<double> dense_forward(const std::vector<double>& x, const DenseParams& p,
                                  DenseCache* cache) {
    if (static_cast<int>(x.size()) != p.W.cols)
        throw std::invalid_argument("dense_forward: dimension mismatch");
    std::vector<double> y(p.b.v);
    matvec_add(p.W, x.data(), y.data());
    if (p.act == Activation::Tanh)
        for (double& v : y) v = std::tanh(v);
    if (cache) {
        cache->x = x;
        cache->y = y;
    }
    return y;
}

void dense_backward(const std::vector<double>& dy, const DenseCache& cache, const DenseParams& p,
                    std::vector<double>& dx, DenseParams& grads) {
    if (dy.size() != cache.y.size())
        throw std::invalid_argument("dense_backward: dimension mismatch");
    std::vector<double> da(dy);
    if (p.act == Activation::Tanh)
        for (size_t i = 0; i < da.size(); ++i) da[i] *= 1.0 - cache.y[i] * cache.y[i];
    outer_add(da.data(), cache.x.data(), grads.W);
    for (int i = 0; i < p.b.rows; ++i) grads.b(i, 0) += da[i];
    dx.assign(cache.x.size(), 0.0);
    matvec_t_add(p.W, da.data(), dx.data());
}

std::vector<double> softmax(const std::vector<double>& logits) {
    double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

std::pair<double, std::vector<double>> softmax_cross_entropy(const std::vector<double>& logits,
                                                             int true_class) {
    const int k = static_cast<int>(logits.size());
    if (k < 2) throw std::invalid_argument("softmax_cross_entropy: need at least 2 classes");
    if (true_class < 0 || true_class >= k)
        throw std::invalid_argument("softmax_cross_entropy: class index out of range");
    for (double v : logits)
        if (!std::isfinite(v)) throw std::invalid_argument("softmax_cross_entropy: non-finite logit");

    double mx = *std::max_element(logits.begin(), logits.end());
    double lse = 0.0;
    for (double v : logits) lse += std::exp(v - mx);
    lse = mx + std::log(lse);

    double loss = lse - logits[true_class];
    std::vector<double> d = softmax(logits);
    d[true_class] -= 1.0;
    return {loss, std::move(d)};
}

std::pair<double, std::vector<double>> masked_mse(const std::vector<double>& pred,
                                                  const std::vector<double>& target,
                                                  const std::vector<bool>& mask) {
    if (pred.size() != target.size() || pred.size() != mask.size())
        throw std::invalid_argument("masked_mse: length mismatch");
    int n_active = 0;
    for (bool m : mask) n_active += m ? 1 : 0;
    const double denom = std::max(1, n_active);

    double loss = 0.0;
    std::vector<double> d(pred.size(), 0.0);
    for (size_t i = 0; i < pred.size(); ++i) {
        if (!mask[i]) continue;
        double e = pred[i] - target[i];
        loss += e * e / denom;
        d[i] = 2.0 * e / denom;
    }
    return {loss, std::move(d)};
}

void AdamState::init(const std::vector<Matrix*>& params) {
    t = 0;
    m.clear();
    v.clear();
    for (const Matrix* p : params) {
        m.emplace_back(p->rows, p->cols);
        v.emplace_back(p->rows, p->cols);
    }
}

void adam_step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
               AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: block count mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, state.t);
    const double bc2 = 1.0 - std::pow(state.beta2, state.t);
    for (size_t b = 0; b < params.size(); ++b) {
        Matrix& p = *params[b];
        const Matrix& g = *grads[b];
        if (!p.same_shape(g)) throw std::invalid_argument("adam_step: shape mismatch");
        check_finite(g, "adam_step");
        Matrix& mb = state.m[b];
        Matrix& vb = state.v[b];
        for (size_t i = 0; i < p.v.size(); ++i) {
            mb.v[i] = state.beta1 * mb.v[i] + (1.0 - state.beta1) * g.v[i];
            vb.v[i] = state.beta2 * vb.v[i] + (1.0 - state.beta2) * g.v[i] * g.v[i];
            const double mhat = mb.v[i] / bc1;
            const double vhat = vb.v[i] / bc2;
            p.v[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

void glorot_uniform(Matrix& W, Rng& rng) {
    const double limit = std::sqrt(6.0 / (W.rows + W.cols));
    for (double& v : W.v) v = rng.uniform(-limit, limit);
}

void orthogonal_init(Matrix& W, Rng& rng) {
    if (W.rows != W.cols)
        throw std::invalid_argument("orthogonal_init: square matrix required");
    const int n = W.rows;
    Matrix A(n, n);
    for (double& v : A.v) v = rng.normal();

    // modified Gram-Schmidt QR; columns of Q land in W, sign fixed so that
    // R's diagonal is positive
    for (int c = 0; c < n; ++c) {
        std::vector<double> col(n);
        for (int r = 0; r < n; ++r) col[r] = A(r, c);
        for (int k = 0; k < c; ++k) {
            double dot = 0.0;
            for (int r = 0; r < n; ++r) dot += W(r, k) * col[r];
            for (int r = 0; r < n; ++r) col[r] -= dot * W(r, k);
        }
        double norm = 0.0;
        for (double v : col) norm += v * v;
        norm = std::sqrt(norm);
        if (norm < 1e-12) throw std::runtime_error("orthogonal_init: rank-deficient draw");
        for (int r = 0; r < n; ++r) W(r, c) = col[r] / norm;
    }
}

void init_gru(GruLayerParams& p, Rng& rng) {
    glorot_uniform(p.Wz, rng);
    glorot_uniform(p.Wr, rng);
    glorot_uniform(p.Wh, rng);
    orthogonal_init(p.Uz, rng);
    orthogonal_init(p.Ur, rng);
    orthogonal_init(p.Uh, rng);
    p.bz.zero();
    p.br.zero();
    p.bh.zero();
}

void init_dense(DenseParams& p, Rng& rng) {
    glorot_uniform(p.W, rng);
    p.b.zero();
}

GradCheckReport grad_check(const std::function<long double()>& loss,
                           std::vector<GradCheckBlock> blocks, int coords_per_block, Rng& rng,
                           double step) {
    GradCheckReport rep;
    for (auto& blk : blocks) {
        Matrix& p = *blk.param;
        const Matrix& g = *blk.grad;
        if (!p.same_shape(g)) throw std::invalid_argument("grad_check: shape mismatch");

        const int n = static_cast<int>(p.v.size());
        std::vector<int> coords;
        if (n <= coords_per_block) {
            coords.resize(n);
            for (int i = 0; i < n; ++i) coords[i] = i;
        } else {
            for (int i = 0; i < coords_per_block; ++i) coords.push_back(rng.uniform_int(0, n - 1));
        }

        double worst = 0.0;
        for (int idx : coords) {
            const double orig = p.v[idx];
            p.v[idx] = orig + step;
            const long double lp = loss();
            const double hi = p.v[idx];
            p.v[idx] = orig - step;
            const long double lm = loss();
            const double lo = p.v[idx];
            p.v[idx] = orig;
            // divide by the step actually applied after rounding to double
            const double numeric = static_cast<double>((lp - lm) / (static_cast<long double>(hi) - lo));
            const double analytic = g.v[idx];
            const double rel =
                std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            worst = std::max(worst, rel);
        }
        rep.block_errors.emplace_back(blk.name, worst);
        if (worst > rep.max_rel_error) {
            rep.max_rel_error = worst;
            rep.worst_block = blk.name;
        }
    }
    return rep;
}

} // namespace otdrnet
