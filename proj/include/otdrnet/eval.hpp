#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "otdrnet/baseline.hpp"
#include "otdrnet/dataset.hpp"
#include "otdrnet/gru_ae.hpp"

namespace otdrnet {

// 5 dB bins centered at {0, 5, 10, 15, 20, 25, 30}
constexpr int kNumSnrBins = 7;
int snr_bin(double snr_db);
double snr_bin_center(int bin);

struct ConfusionMatrix {
    std::array<std::array<long, kNumClasses>, kNumClasses> counts{};       // rows = true
    std::array<std::array<double, kNumClasses>, kNumClasses> row_normalized{};
    long total = 0;
    double accuracy() const;
};

ConfusionMatrix confusion_matrix(const std::vector<int>& true_classes,
                                 const std::vector<int>& predicted_classes);

// per-class recall within the SNR bin; absent when the bin holds no class-c samples
std::optional<double> detection_probability(const std::vector<int>& true_classes,
                                            const std::vector<int>& predicted_classes,
                                            const std::vector<double>& snr_db, int cls, int bin);

// per-class fall-out FP / (FP + TN) within the SNR bin
std::optional<double> false_alarm_rate(const std::vector<int>& true_classes,
                                       const std::vector<int>& predicted_classes,
                                       const std::vector<double>& snr_db, int cls, int bin);

struct BinnedRmse {
    std::array<std::optional<double>, kNumSnrBins> per_bin;
    std::optional<double> overall;
};

// pred/target already in physical units (meters or dB); masked entries excluded
BinnedRmse regression_rmse(const std::vector<double>& pred, const std::vector<double>& target,
                           const std::vector<bool>& mask, const std::vector<double>& snr_db);

struct BaselineComparison {
    double gruae_binary_accuracy = 0.0;
    double baseline_binary_accuracy = 0.0;
    std::optional<double> gruae_pos_rmse_m;
    std::optional<double> baseline_pos_rmse_m;
    int n_common_detections = 0;
};

struct EvalReport {
    ConfusionMatrix confusion;
    double accuracy = 0.0;
    std::array<std::array<std::optional<double>, kNumSnrBins>, kNumClasses> pd{};
    std::array<std::array<std::optional<double>, kNumSnrBins>, kNumClasses> pfa{};
    BinnedRmse rmse_position_m;
    BinnedRmse rmse_reflectance_db;
    BinnedRmse rmse_loss_db;
    std::optional<BaselineComparison> baseline_comparison;
};

// Aggregate all Fig. 3-6 metrics for a set of rows and their predictions.
EvalReport evaluate(const std::vector<DataRow>& rows, const std::vector<Prediction>& preds,
                    const SimConfig& cfg, const NormConstants& nc = {});

// Fig. 7: event/no-event capability of both methods on the same shifted split.
BaselineComparison compare_with_baseline(const std::vector<DataRow>& rows,
                                         const std::vector<Prediction>& gruae_preds,
                                         const std::vector<Detection>& baseline_dets,
                                         const SimConfig& cfg);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& json_text);

// fig3_confusion.csv, fig4_pd.csv, fig5_pfa.csv, fig6_rmse.csv (+ fig7 when present)
void write_figure_csvs(const EvalReport& report, const std::string& dir);
void write_comparison_csv(const BaselineComparison& cmp, const std::string& path);

} // namespace otdrnet
