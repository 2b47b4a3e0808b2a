#include "otdrnet/gru_ae.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace otdrnet {

namespace {

Matrix input_matrix(const ModelInput& in) {
    Matrix X(kSeqLen, kInputDim);
    std::copy(in.x.begin(), in.x.end(), X.v.begin());
    return X;
}

Matrix repeat_latent(const std::vector<double>& latent) {
    Matrix X(kSeqLen, kLatentDim);
    for (int t = 0; t < kSeqLen; ++t)
        std::copy(latent.begin(), latent.end(), X.row(t));
    return X;
}

int head_dim(int decoder) { return decoder == 0 ? kNumClasses : 1; }

struct DecoderCache {
    GruLayerCache g1c, g2c;
    DenseCache fcc, headc;
};

struct SampleCache {
    GruLayerCache enc1c, enc2c;
    std::array<DecoderCache, kNumDecoders> dec;
};

RawOutput forward(const ModelInput& input, const GruAeParams& p, SampleCache* cache) {
    Matrix X = input_matrix(input);
    Matrix H1 = gru_layer_forward(X, {}, p.enc1, cache ? &cache->enc1c : nullptr);
    Matrix H2 = gru_layer_forward(H1, {}, p.enc2, cache ? &cache->enc2c : nullptr);
    std::vector<double> latent(H2.row(kSeqLen - 1), H2.row(kSeqLen - 1) + kLatentDim);

    Matrix Xd = repeat_latent(latent);
    RawOutput out;
    for (int d = 0; d < kNumDecoders; ++d) {
        DecoderCache* dc = cache ? &cache->dec[d] : nullptr;
        Matrix G1 = gru_layer_forward(Xd, {}, p.dec[d].g1, dc ? &dc->g1c : nullptr);
        Matrix G2 = gru_layer_forward(G1, {}, p.dec[d].g2, dc ? &dc->g2c : nullptr);
        std::vector<double> u(G2.row(kSeqLen - 1), G2.row(kSeqLen - 1) + kDecHidden2);
        std::vector<double> fcv = dense_forward(u, p.dec[d].fc, dc ? &dc->fcc : nullptr);
        std::vector<double> y = dense_forward(fcv, p.dec[d].head, dc ? &dc->headc : nullptr);
        if (d == 0)
            out.logits = std::move(y);
        else if (d == 1)
            out.position = y[0];
        else if (d == 2)
            out.reflectance = y[0];
        else
            out.loss = y[0];
    }
    return out;
}

void backward(const HeadGrads& hg, const SampleCache& cache, const GruAeParams& p,
              GruAeParams& grads) {
    std::vector<double> dlatent(kLatentDim, 0.0);

    for (int d = 0; d < kNumDecoders; ++d) {
        std::vector<double> dy;
        if (d == 0)
            dy = hg.dlogits;
        else if (d == 1)
            dy = {hg.dposition};
        else if (d == 2)
            dy = {hg.dreflectance};
        else
            dy = {hg.dloss};

        bool all_zero = true;
        for (double v : dy)
            if (v != 0.0) all_zero = false;
        if (all_zero) continue;

        const DecoderCache& dc = cache.dec[d];
        std::vector<double> dfc, du;
        dense_backward(dy, dc.headc, p.dec[d].head, dfc, grads.dec[d].head);
        dense_backward(dfc, dc.fcc, p.dec[d].fc, du, grads.dec[d].fc);

        Matrix dG2(kSeqLen, kDecHidden2);
        std::copy(du.begin(), du.end(), dG2.row(kSeqLen - 1));
        Matrix dG1;
        std::vector<double> dh0;
        gru_layer_backward(dG2, dc.g2c, p.dec[d].g2, dG1, grads.dec[d].g2, dh0);

        Matrix dXd;
        gru_layer_backward(dG1, dc.g1c, p.dec[d].g1, dXd, grads.dec[d].g1, dh0);
        for (int t = 0; t < kSeqLen; ++t)
            for (int i = 0; i < kLatentDim; ++i) dlatent[i] += dXd(t, i);
    }

    Matrix dH2(kSeqLen, kLatentDim);
    std::copy(dlatent.begin(), dlatent.end(), dH2.row(kSeqLen - 1));
    Matrix dH1;
    std::vector<double> dh0;
    gru_layer_backward(dH2, cache.enc2c, p.enc2, dH1, grads.enc2, dh0);
    Matrix dX;
    gru_layer_backward(dH1, cache.enc1c, p.enc1, dX, grads.enc1, dh0);
}

// ---- extended-precision forward path ----
// Finite-difference verification divides a ~1e-12 loss difference by the
// step, so double-precision round-off in the forward pass (~1e-11) would
// drown out small-but-correct gradients. This forward-only evaluator runs
// in long double purely as a low-noise numerical oracle; training and
// inference never use it.

using ldvec = std::vector<long double>;

long double sigmoid_ld(long double x) { return 1.0L / (1.0L + std::exp(-x)); }

void matvec_add_ld(const Matrix& M, const ldvec& x, ldvec& y) {
    for (int r = 0; r < M.rows; ++r) {
        const double* mr = M.row(r);
        long double acc = 0.0L;
        for (int c = 0; c < M.cols; ++c) acc += static_cast<long double>(mr[c]) * x[c];
        y[r] += acc;
    }
}

ldvec gru_cell_ld(const ldvec& x, const ldvec& h_prev, const GruLayerParams& p) {
    const int hid = p.hidden_dim;
    ldvec z(p.bz.v.begin(), p.bz.v.end()), r(p.br.v.begin(), p.br.v.end());
    matvec_add_ld(p.Wz, x, z);
    matvec_add_ld(p.Uz, h_prev, z);
    matvec_add_ld(p.Wr, x, r);
    matvec_add_ld(p.Ur, h_prev, r);
    for (int i = 0; i < hid; ++i) {
        z[i] = sigmoid_ld(z[i]);
        r[i] = sigmoid_ld(r[i]);
    }
    ldvec rh(hid);
    for (int i = 0; i < hid; ++i) rh[i] = r[i] * h_prev[i];
    ldvec hc(p.bh.v.begin(), p.bh.v.end());
    matvec_add_ld(p.Wh, x, hc);
    matvec_add_ld(p.Uh, rh, hc);
    for (int i = 0; i < hid; ++i) hc[i] = std::tanh(hc[i]);
    ldvec h(hid);
    for (int i = 0; i < hid; ++i) h[i] = (1.0L - z[i]) * h_prev[i] + z[i] * hc[i];
    return h;
}

std::vector<ldvec> gru_layer_ld(const std::vector<ldvec>& X, const GruLayerParams& p) {
    ldvec h(p.hidden_dim, 0.0L);
    std::vector<ldvec> H;
    H.reserve(X.size());
    for (const auto& x : X) {
        h = gru_cell_ld(x, h, p);
        H.push_back(h);
    }
    return H;
}

ldvec dense_ld(const ldvec& x, const DenseParams& p) {
    ldvec y(p.b.v.begin(), p.b.v.end());
    matvec_add_ld(p.W, x, y);
    if (p.act == Activation::Tanh)
        for (auto& v : y) v = std::tanh(v);
    return y;
}

void axpy_params(double a, const GruAeParams& x, GruAeParams& y) {
    auto xb = x.blocks();
    auto yb = y.blocks();
    for (size_t b = 0; b < xb.size(); ++b)
        for (size_t i = 0; i < xb[b]->v.size(); ++i) yb[b]->v[i] += a * xb[b]->v[i];
}

} // namespace

GruAeParams::GruAeParams()
    : enc1(kInputDim, kEncHidden1), enc2(kEncHidden1, kLatentDim) {
    for (int d = 0; d < kNumDecoders; ++d) {
        dec[d].g1 = GruLayerParams(kLatentDim, kLatentDim);
        dec[d].g2 = GruLayerParams(kLatentDim, kDecHidden2);
        dec[d].fc = DenseParams(kDecHidden2, kFcDim, Activation::Tanh);
        dec[d].head = DenseParams(kFcDim, head_dim(d), Activation::Identity);
    }
}

std::vector<Matrix*> GruAeParams::blocks() {
    std::vector<Matrix*> out;
    for (Matrix* m : enc1.blocks()) out.push_back(m);
    for (Matrix* m : enc2.blocks()) out.push_back(m);
    for (auto& d : dec) {
        for (Matrix* m : d.g1.blocks()) out.push_back(m);
        for (Matrix* m : d.g2.blocks()) out.push_back(m);
        for (Matrix* m : d.fc.blocks()) out.push_back(m);
        for (Matrix* m : d.head.blocks()) out.push_back(m);
    }
    return out;
}

std::vector<const Matrix*> GruAeParams::blocks() const {
    std::vector<const Matrix*> out;
    for (const Matrix* m : enc1.blocks()) out.push_back(m);
    for (const Matrix* m : enc2.blocks()) out.push_back(m);
    for (const auto& d : dec) {
        for (const Matrix* m : d.g1.blocks()) out.push_back(m);
        for (const Matrix* m : d.g2.blocks()) out.push_back(m);
        for (const Matrix* m : d.fc.blocks()) out.push_back(m);
        for (const Matrix* m : d.head.blocks()) out.push_back(m);
    }
    return out;
}

std::vector<std::string> GruAeParams::block_names() const {
    static const char* gru_names[] = {"Wz", "Wr", "Wh", "Uz", "Ur", "Uh", "bz", "br", "bh"};
    static const char* dec_names[] = {"diag", "pos", "refl", "loss"};
    std::vector<std::string> out;
    for (const char* n : gru_names) out.push_back(std::string("enc1.") + n);
    for (const char* n : gru_names) out.push_back(std::string("enc2.") + n);
    for (int d = 0; d < kNumDecoders; ++d) {
        std::string base = std::string("dec_") + dec_names[d] + ".";
        for (const char* n : gru_names) out.push_back(base + "g1." + n);
        for (const char* n : gru_names) out.push_back(base + "g2." + n);
        out.push_back(base + "fc.W");
        out.push_back(base + "fc.b");
        out.push_back(base + "head.W");
        out.push_back(base + "head.b");
    }
    return out;
}

void GruAeParams::zero() {
    for (Matrix* m : blocks()) m->zero();
}

GruAeParams init_gru_ae(std::uint64_t seed) {
    GruAeParams p;
    Rng rng(seed);
    init_gru(p.enc1, rng);
    init_gru(p.enc2, rng);
    for (auto& d : p.dec) {
        init_gru(d.g1, rng);
        init_gru(d.g2, rng);
        init_dense(d.fc, rng);
        init_dense(d.head, rng);
    }
    return p;
}

std::vector<double> encode(const ModelInput& input, const GruAeParams& p) {
    Matrix X = input_matrix(input);
    Matrix H1 = gru_layer_forward(X, {}, p.enc1);
    Matrix H2 = gru_layer_forward(H1, {}, p.enc2);
    return {H2.row(kSeqLen - 1), H2.row(kSeqLen - 1) + kLatentDim};
}

Prediction decode_all(const std::vector<double>& latent, const GruAeParams& p) {
    if (static_cast<int>(latent.size()) != kLatentDim)
        throw std::invalid_argument("decode_all: latent must have length 15");
    Matrix Xd = repeat_latent(latent);

    Prediction pred;
    for (int d = 0; d < kNumDecoders; ++d) {
        Matrix G1 = gru_layer_forward(Xd, {}, p.dec[d].g1);
        Matrix G2 = gru_layer_forward(G1, {}, p.dec[d].g2);
        std::vector<double> u(G2.row(kSeqLen - 1), G2.row(kSeqLen - 1) + kDecHidden2);
        std::vector<double> y = dense_forward(dense_forward(u, p.dec[d].fc), p.dec[d].head);
        if (d == 0) {
            std::vector<double> probs = softmax(y);
            std::copy(probs.begin(), probs.end(), pred.class_probs.begin());
            pred.class_index = static_cast<int>(
                std::max_element(probs.begin(), probs.end()) - probs.begin());
        } else {
            double v = std::clamp(y[0], 0.0, 1.0);
            if (d == 1)
                pred.position_norm = v;
            else if (d == 2)
                pred.reflectance_norm = v;
            else
                pred.loss_norm = v;
        }
    }
    return pred;
}

Prediction predict_one(const ModelInput& input, const GruAeParams& p) {
    return decode_all(encode(input, p), p);
}

std::vector<Prediction> predict(const std::vector<ModelInput>& inputs, const GruAeParams& p) {
    std::vector<Prediction> out(inputs.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long i = 0; i < static_cast<long>(inputs.size()); ++i)
        out[i] = predict_one(inputs[i], p);
    return out;
}

std::pair<double, HeadGrads> multi_task_loss(const RawOutput& raw, const EventLabel& label,
                                             const TaskWeights& w) {
    HeadGrads hg;
    auto [ce, dlogits] = softmax_cross_entropy(raw.logits, label.class_index);
    double total = w.diag * ce;
    hg.dlogits = std::move(dlogits);
    for (double& v : hg.dlogits) v *= w.diag;

    auto reg = [&](double pred, double target, bool mask, double weight, double& dpred) {
        auto [l, d] = masked_mse({pred}, {target}, {mask});
        dpred = weight * d[0];
        return weight * l;
    };
    total += reg(raw.position, label.position_norm, label.mask_position, w.pos, hg.dposition);
    total += reg(raw.reflectance, label.reflectance_norm, label.mask_reflectance, w.refl,
                 hg.dreflectance);
    total += reg(raw.loss, label.loss_norm, label.mask_loss, w.loss, hg.dloss);
    return {total, std::move(hg)};
}

double sample_loss_backward(const ModelInput& input, const EventLabel& label,
                            const GruAeParams& p, const TaskWeights& w, GruAeParams& grads) {
    SampleCache cache;
    RawOutput raw = forward(input, p, &cache);
    auto [loss, hg] = multi_task_loss(raw, label, w);
    backward(hg, cache, p, grads);
    return loss;
}

double sample_loss(const ModelInput& input, const EventLabel& label, const GruAeParams& p,
                   const TaskWeights& w) {
    RawOutput raw = forward(input, p, nullptr);
    return multi_task_loss(raw, label, w).first;
}

long double sample_loss_precise(const ModelInput& input, const EventLabel& label,
                                const GruAeParams& p, const TaskWeights& w) {
    std::vector<ldvec> X(kSeqLen, ldvec(kInputDim));
    for (int t = 0; t < kSeqLen; ++t)
        for (int c = 0; c < kInputDim; ++c) X[t][c] = input.at(t, c);

    std::vector<ldvec> H2 = gru_layer_ld(gru_layer_ld(X, p.enc1), p.enc2);
    std::vector<ldvec> Xd(kSeqLen, H2.back());

    long double total = 0.0L;
    for (int d = 0; d < kNumDecoders; ++d) {
        ldvec u = gru_layer_ld(gru_layer_ld(Xd, p.dec[d].g1), p.dec[d].g2).back();
        ldvec y = dense_ld(dense_ld(u, p.dec[d].fc), p.dec[d].head);
        if (d == 0) {
            long double mx = y[0];
            for (auto v : y) mx = std::max(mx, v);
            long double lse = 0.0L;
            for (auto v : y) lse += std::exp(v - mx);
            total += w.diag * (mx + std::log(lse) - y[label.class_index]);
        } else {
            const bool mask = d == 1 ? label.mask_position
                              : d == 2 ? label.mask_reflectance
                                       : label.mask_loss;
            if (!mask) continue;
            const long double target = d == 1 ? label.position_norm
                                       : d == 2 ? label.reflectance_norm
                                                : label.loss_norm;
            const double weight = d == 1 ? w.pos : d == 2 ? w.refl : w.loss;
            const long double e = y[0] - target;
            total += weight * e * e;
        }
    }
    return total;
}

double batch_gradient_serial(const std::vector<ModelInput>& inputs,
                             const std::vector<EventLabel>& labels,
                             const std::vector<int>& batch_idx, const GruAeParams& p,
                             const TaskWeights& w, GruAeParams& grads) {
    if (batch_idx.empty()) throw std::invalid_argument("batch_gradient: empty batch");
    const double scale = 1.0 / batch_idx.size();

    // each sample's gradient lands in its own buffer before joining the
    // accumulator, mirroring the reduction order of the parallel path exactly
    GruAeParams acc, sample;
    double loss_sum = 0.0;
    for (int idx : batch_idx) {
        sample.zero();
        loss_sum += sample_loss_backward(inputs[idx], labels[idx], p, w, sample);
        axpy_params(1.0, sample, acc);
    }
    axpy_params(scale, acc, grads);
    return loss_sum * scale;
}

double batch_gradient_parallel(const std::vector<ModelInput>& inputs,
                               const std::vector<EventLabel>& labels,
                               const std::vector<int>& batch_idx, const GruAeParams& p,
                               const TaskWeights& w, GruAeParams& grads) {
    if (batch_idx.empty()) throw std::invalid_argument("batch_gradient: empty batch");
    const int n = static_cast<int>(batch_idx.size());
    const double scale = 1.0 / n;

    std::vector<GruAeParams> per_sample(n);
    std::vector<double> losses(n, 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int s = 0; s < n; ++s)
        losses[s] = sample_loss_backward(inputs[batch_idx[s]], labels[batch_idx[s]], p, w,
                                         per_sample[s]);

    // ordered reduction: summing in sample order keeps results bit-identical
    // to the serial path regardless of worker count
    GruAeParams acc;
    double loss_sum = 0.0;
    for (int s = 0; s < n; ++s) {
        axpy_params(1.0, per_sample[s], acc);
        loss_sum += losses[s];
    }
    axpy_params(scale, acc, grads);
    return loss_sum * scale;
}

FitResult fit(const Dataset& ds, const TrainConfig& cfg, const NormConstants& nc) {
    std::vector<ModelInput> inputs;
    std::vector<EventLabel> labels;
    std::vector<int> train_idx, val_idx;
    inputs.reserve(ds.rows.size());
    labels.reserve(ds.rows.size());
    for (const auto& row : ds.rows) {
        if (row.split == Split::Train)
            train_idx.push_back(static_cast<int>(inputs.size()));
        else if (row.split == Split::Val)
            val_idx.push_back(static_cast<int>(inputs.size()));
        else
            continue;
        inputs.push_back(row_input(row, nc));
        labels.push_back(row_label(row, nc));
    }
    if (train_idx.empty() || val_idx.empty())
        throw std::invalid_argument("fit: dataset needs nonempty train and val splits");

    GruAeParams params = init_gru_ae(cfg.seed);
    AdamState adam;
    adam.lr = cfg.lr;
    auto param_blocks = params.blocks();
    adam.init(param_blocks);

    Rng root(cfg.seed ^ 0xF17F17ULL);

    FitResult result;
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;

    GruAeParams grads;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        adam.lr = cfg.lr * std::pow(cfg.lr_decay, epoch);
        Rng shuffle_rng = root.child(epoch);
        std::vector<int> order = train_idx;
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
            int j = shuffle_rng.uniform_int(0, i);
            std::swap(order[i], order[j]);
        }

        double train_loss_sum = 0.0;
        int n_batches = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<int> batch(order.begin() + start, order.begin() + end);
            grads.zero();
            double bl = cfg.parallel
                            ? batch_gradient_parallel(inputs, labels, batch, params, cfg.weights, grads)
                            : batch_gradient_serial(inputs, labels, batch, params, cfg.weights, grads);
            if (!std::isfinite(bl))
                throw std::runtime_error("fit: non-finite loss at epoch " + std::to_string(epoch) +
                                         ", batch " + std::to_string(n_batches));
            if (cfg.clip_norm > 0.0) {
                double sq = 0.0;
                for (const Matrix* g : grads.blocks())
                    for (double v : g->v) sq += v * v;
                double norm = std::sqrt(sq);
                if (norm > cfg.clip_norm) {
                    double s = cfg.clip_norm / norm;
                    for (Matrix* g : grads.blocks())
                        for (double& v : g->v) v *= s;
                }
            }
            std::vector<const Matrix*> grad_blocks;
            for (Matrix* g : grads.blocks()) grad_blocks.push_back(g);
            adam_step(param_blocks, grad_blocks, adam);
            train_loss_sum += bl;
            ++n_batches;
        }

        double val_loss = 0.0;
        int val_correct = 0;
        std::vector<double> vlosses(val_idx.size());
        std::vector<int> vcorrect(val_idx.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (long vi = 0; vi < static_cast<long>(val_idx.size()); ++vi) {
            int idx = val_idx[vi];
            vlosses[vi] = sample_loss(inputs[idx], labels[idx], params, cfg.weights);
            vcorrect[vi] =
                predict_one(inputs[idx], params).class_index == labels[idx].class_index ? 1 : 0;
        }
        for (size_t vi = 0; vi < val_idx.size(); ++vi) {
            val_loss += vlosses[vi];
            val_correct += vcorrect[vi];
        }
        val_loss /= val_idx.size();

        EpochStats es;
        es.epoch = epoch;
        es.train_loss = train_loss_sum / n_batches;
        es.val_loss = val_loss;
        es.val_accuracy = static_cast<double>(val_correct) / val_idx.size();
        result.history.push_back(es);

        if (val_loss < best_val) {
            best_val = val_loss;
            result.params = params;
            result.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    return result;
}

void save_model(const GruAeParams& p, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_model: cannot open " + path);
    f.write("GRUAE1", 6);
    const std::int32_t dims[6] = {kInputDim, kEncHidden1, kLatentDim, kDecHidden2, kFcDim,
                                  kNumClasses};
    f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    for (const Matrix* m : p.blocks())
        f.write(reinterpret_cast<const char*>(m->v.data()),
                static_cast<std::streamsize>(m->v.size() * sizeof(double)));
    if (!f) throw std::runtime_error("save_model: write failed for " + path);
}

GruAeParams load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_model: cannot open " + path);

    char magic[6];
    f.read(magic, 6);
    if (!f || std::memcmp(magic, "GRUAE1", 6) != 0)
        throw std::runtime_error("load_model: bad magic, not a GRUAE1 container");

    std::int32_t dims[6];
    f.read(reinterpret_cast<char*>(dims), sizeof(dims));
    const std::int32_t expect[6] = {kInputDim, kEncHidden1, kLatentDim, kDecHidden2, kFcDim,
                                    kNumClasses};
    for (int i = 0; i < 6; ++i)
        if (!f || dims[i] != expect[i])
            throw std::runtime_error("load_model: dimension header does not match architecture (" +
                                     std::to_string(dims[i]) + " vs " + std::to_string(expect[i]) +
                                     ")");

    GruAeParams p;
    for (Matrix* m : p.blocks()) {
        f.read(reinterpret_cast<char*>(m->v.data()),
               static_cast<std::streamsize>(m->v.size() * sizeof(double)));
        if (!f) throw std::runtime_error("load_model: truncated file " + path);
    }
    char extra;
    if (f.read(&extra, 1)) throw std::runtime_error("load_model: trailing bytes in " + path);
    return p;
}

} // namespace otdrnet
