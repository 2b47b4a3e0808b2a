#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "otdrnet/matrix.hpp"
#include "otdrnet/rng.hpp"

namespace otdrnet {

// Gate convention, pinned and tested:
//   z = sigmoid(Wz x + Uz h_prev + bz)
//   r = sigmoid(Wr x + Ur h_prev + br)
//   hc = tanh(Wh x + Uh (r .* h_prev) + bh)
//   h = (1 - z) .* h_prev + z .* hc
struct GruLayerParams {
    int input_dim = 0;
    int hidden_dim = 0;
    Matrix Wz, Wr, Wh; // hidden x input
    Matrix Uz, Ur, Uh; // hidden x hidden
    Matrix bz, br, bh; // hidden x 1

    GruLayerParams() = default;
    GruLayerParams(int in, int hidden);

    std::vector<Matrix*> blocks();
    std::vector<const Matrix*> blocks() const;
    void zero();
};

enum class Activation { Identity, Tanh };

struct DenseParams {
    Matrix W; // out x in
    Matrix b; // out x 1
    Activation act = Activation::Identity;

    DenseParams() = default;
    DenseParams(int in, int out, Activation a);

    std::vector<Matrix*> blocks();
    std::vector<const Matrix*> blocks() const;
    void zero();
};

struct GruStepCache {
    std::vector<double> h_prev, z, r, hc, rh; // rh = r .* h_prev
};

struct GruLayerCache {
    Matrix X;
    std::vector<double> h0;
    std::vector<GruStepCache> steps;
};

struct DenseCache {
    std::vector<double> x, y;
};

std::vector<double> gru_cell_forward(const std::vector<double>& x, const std::vector<double>& h_prev,
                                     const GruLayerParams& p, GruStepCache* cache = nullptr);

// X is T x input_dim; returns H, T x hidden_dim. h0 empty means zeros.
Matrix gru_layer_forward(const Matrix& X, const std::vector<double>& h0, const GruLayerParams& p,
                         GruLayerCache* cache = nullptr);

// dH is T x hidden_dim. Accumulates into grads; dX and dh0 are overwritten.
void gru_layer_backward(const Matrix& dH, const GruLayerCache& cache, const GruLayerParams& p,
                        Matrix& dX, GruLayerParams& grads, std::vector<double>& dh0);

std::vector<double> dense_forward(const std::vector<double>& x, const DenseParams& p,
                                  DenseCache* cache = nullptr);

void dense_backward(const std::vector<double>& dy, const DenseCache& cache, const DenseParams& p,
                    std::vector<double>& dx, DenseParams& grads);

std::pair<double, std::vector<double>> softmax_cross_entropy(const std::vector<double>& logits,
                                                             int true_class);

std::vector<double> softmax(const std::vector<double>& logits);

std::pair<double, std::vector<double>> masked_mse(const std::vector<double>& pred,
                                                  const std::vector<double>& target,
                                                  const std::vector<bool>& mask);

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long t = 0;
    std::vector<Matrix> m, v;

    void init(const std::vector<Matrix*>& params);
};

void adam_step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
               AdamState& state);

// Initialization: input-to-hidden Glorot uniform, hidden-to-hidden orthogonal
// (QR of a seeded Gaussian, sign-fixed), biases zero.
void glorot_uniform(Matrix& W, Rng& rng);
void orthogonal_init(Matrix& W, Rng& rng);
void init_gru(GruLayerParams& p, Rng& rng);
void init_dense(DenseParams& p, Rng& rng);

struct GradCheckBlock {
    std::string name;
    Matrix* param;
    const Matrix* grad;
};

struct GradCheckReport {
    std::vector<std::pair<std::string, double>> block_errors; // (name, max relative error)
    double max_rel_error = 0.0;
    std::string worst_block;
    bool passed(double tol) const { return max_rel_error < tol; }
};

// Central finite differences on a random subsample of coordinates per block.
// `loss` must be a deterministic closure over the blocks' current values.
// Evaluating it in extended precision (long double) lowers the numerical
// noise floor and lets small-magnitude gradients verify cleanly; plain
// double closures convert implicitly and still work.
GradCheckReport grad_check(const std::function<long double()>& loss,
                           std::vector<GradCheckBlock> blocks, int coords_per_block, Rng& rng,
                           double step = 1e-5);

} // namespace otdrnet
