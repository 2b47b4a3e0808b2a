#pragma once

#include <array>
#include <string>
#include <vector>

#include "otdrnet/sim.hpp"

namespace otdrnet {

enum class Split : int { Train = 0, Val = 1, Test = 2, ShiftedTest = 3 };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

struct EventLabel {
    int class_index = 0;
    double position_norm = 0.0;
    double reflectance_norm = 0.0;
    double loss_norm = 0.0;
    bool mask_position = false;
    bool mask_reflectance = false;
    bool mask_loss = false;
};

enum class PowerNorm { PerSequence, Global };

struct NormConstants {
    double delta_min_db = -90.0;
    double delta_max_db = -40.0;
    double loss_scale_db = 10.0;
    double refl_offset_db = 80.0;
    double refl_scale_db = 70.0;
    double gamma_max_db = 30.0;
    PowerNorm power_norm = PowerNorm::PerSequence;
    // Global power normalization window, used when power_norm == Global.
    double power_min_db = -95.0;
    double power_max_db = -40.0;
};

// 30 timesteps x 3 channels: (normalized power, delta broadcast, gamma broadcast)
struct ModelInput {
    std::array<double, kSeqLen * 3> x{};
    double& at(int t, int c) { return x[static_cast<size_t>(t) * 3 + c]; }
    double at(int t, int c) const { return x[static_cast<size_t>(t) * 3 + c]; }
};

struct DataRow {
    std::array<double, kSeqLen> power_db{};
    double delta_raw = 0.0;
    double gamma_raw = 0.0;
    int class_index = 0;
    int position_index = -1;       // -1 when masked
    double loss_db = 0.0;          // NaN when masked
    double reflectance_db = 0.0;   // NaN when masked; post-VOA effective value
    double true_snr_db = 0.0;
    Split split = Split::Train;
};

struct Dataset {
    std::vector<DataRow> rows;
};

struct BuildOptions {
    bool shifted = false;       // draw from the distribution-shifted ranges
    bool use_true_snr = false;  // gamma from acquisition metadata instead of the estimator
};

struct DecodedTargets {
    double position_m = 0.0;
    double reflectance_db = 0.0;
    double loss_db = 0.0;
};

// delta: maximum of the raw (pre-normalization) dB amplitude
double compute_delta(const std::array<double, kSeqLen>& power_db);

ModelInput normalize_sample(const std::array<double, kSeqLen>& power_db, double delta_raw,
                            double gamma_raw, const NormConstants& nc = {});

EventLabel encode_targets(const EventParams& params, const NormConstants& nc = {});

DecodedTargets decode_targets(double position_norm, double reflectance_norm, double loss_norm,
                              const NormConstants& nc, const SimConfig& cfg);

Dataset build_dataset(int n_per_class, const SimConfig& cfg, std::uint64_t seed,
                      const BuildOptions& opts = {});

// Cut a full trace into labeled length-30 windows. Windows whose event onset
// falls outside [2, 27] (or that straddle more than one onset) are discarded.
std::vector<SequenceSample> slice_trace(const TraceResult& trace, int stride);

DataRow row_from_sample(const SequenceSample& s, const BuildOptions& opts = {});

EventLabel row_label(const DataRow& row, const NormConstants& nc = {});
ModelInput row_input(const DataRow& row, const NormConstants& nc = {});

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

} // namespace otdrnet
