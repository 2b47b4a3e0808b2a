#pragma once

#include <array>
#include <string>
#include <vector>

#include "otdrnet/dataset.hpp"
#include "otdrnet/nn.hpp"

namespace otdrnet {

// Architecture constants: encoder GRU(3->30) + GRU(30->15); four decoders,
// each GRU(15->15) + GRU(15->30) + dense 30->16 (tanh) + task head.
constexpr int kInputDim = 3;
constexpr int kEncHidden1 = 30;
constexpr int kLatentDim = 15;
constexpr int kDecHidden2 = 30;
constexpr int kFcDim = 16;
constexpr int kNumDecoders = 4; // diagnosis, localization, reflectance, loss

struct Decoder {
    GruLayerParams g1, g2;
    DenseParams fc, head;
};

struct GruAeParams {
    GruLayerParams enc1, enc2;
    std::array<Decoder, kNumDecoders> dec;

    GruAeParams();

    std::vector<Matrix*> blocks();
    std::vector<const Matrix*> blocks() const;
    std::vector<std::string> block_names() const;
    void zero();
};

GruAeParams init_gru_ae(std::uint64_t seed);

struct TaskWeights {
    double diag = 1.0;
    double pos = 1.5;
    double refl = 1.0;
    double loss = 1.0;
};

struct TrainConfig {
    TaskWeights weights;
    double lr = 1e-3;
    double lr_decay = 1.0;      // per-epoch multiplicative decay, 1 disables
    int batch_size = 128;
    int epochs = 100;
    std::uint64_t seed = 1;
    int patience = 10;          // early stop on validation loss
    double clip_norm = 0.0;     // 0 disables gradient clipping
    bool parallel = true;       // OpenMP batch gradients (bit-identical to serial)
};

struct Prediction {
    std::array<double, kNumClasses> class_probs{};
    int class_index = 0;
    double position_norm = 0.0;
    double reflectance_norm = 0.0;
    double loss_norm = 0.0;
};

// Pre-clip head outputs, used by the loss.
struct RawOutput {
    std::vector<double> logits; // 8
    double position = 0.0;
    double reflectance = 0.0;
    double loss = 0.0;
};

struct HeadGrads {
    std::vector<double> dlogits;
    double dposition = 0.0;
    double dreflectance = 0.0;
    double dloss = 0.0;
};

std::vector<double> encode(const ModelInput& input, const GruAeParams& p);

Prediction decode_all(const std::vector<double>& latent, const GruAeParams& p);

Prediction predict_one(const ModelInput& input, const GruAeParams& p);

std::vector<Prediction> predict(const std::vector<ModelInput>& inputs, const GruAeParams& p);

// Weighted sum of the four decoder losses and its gradient w.r.t. the raw
// head outputs. Masked regression targets contribute exactly zero.
std::pair<double, HeadGrads> multi_task_loss(const RawOutput& raw, const EventLabel& label,
                                             const TaskWeights& w);

// Forward + backward for one sample; accumulates parameter gradients.
double sample_loss_backward(const ModelInput& input, const EventLabel& label,
                            const GruAeParams& p, const TaskWeights& w, GruAeParams& grads);

double sample_loss(const ModelInput& input, const EventLabel& label, const GruAeParams& p,
                   const TaskWeights& w);

// Same loss evaluated forward-only in extended precision. Finite-difference
// verification needs a low-round-off numerical oracle; training never uses
// this path.
long double sample_loss_precise(const ModelInput& input, const EventLabel& label,
                                const GruAeParams& p, const TaskWeights& w);

// Mean loss and mean gradient over a batch. The parallel version computes
// per-sample gradients concurrently and sums them in sample order, so both
// versions produce bit-identical results.
double batch_gradient_serial(const std::vector<ModelInput>& inputs,
                             const std::vector<EventLabel>& labels,
                             const std::vector<int>& batch_idx, const GruAeParams& p,
                             const TaskWeights& w, GruAeParams& grads);

double batch_gradient_parallel(const std::vector<ModelInput>& inputs,
                               const std::vector<EventLabel>& labels,
                               const std::vector<int>& batch_idx, const GruAeParams& p,
                               const TaskWeights& w, GruAeParams& grads);

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct FitResult {
    GruAeParams params;          // best-validation-loss parameters
    std::vector<EpochStats> history;
    int best_epoch = 0;
};

FitResult fit(const Dataset& ds, const TrainConfig& cfg, const NormConstants& nc = {});

void save_model(const GruAeParams& p, const std::string& path);
GruAeParams load_model(const std::string& path);

} // namespace otdrnet
