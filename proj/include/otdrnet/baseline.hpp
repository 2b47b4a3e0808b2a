#pragma once

#include <array>
#include <optional>
#include <vector>

#include "otdrnet/sim.hpp"

namespace otdrnet {

enum class KindGroup { None, Reflective, NonReflective };

struct TemplateBank {
    std::array<double, kSeqLen> reflective{};    // zero-mean, unit-norm peak
    std::array<double, kSeqLen> nonreflective{}; // zero-mean, unit-norm step
    int reflective_onset = 0;                    // onset sample within the template
    int nonreflective_onset = 0;
};

struct ThresholdConfig {
    double corr_threshold = 0.6;
    double amplitude_threshold_db = 0.5;
};

struct Detection {
    bool event = false;
    KindGroup group = KindGroup::None;
    std::optional<int> position_index;
    double best_correlation = 0.0;
};

struct LabeledSequence {
    std::array<double, kSeqLen> power_db{};
    bool has_event = false;
};

TemplateBank build_templates(const SimConfig& cfg);

// Pearson-style normalized correlation; returns 0 for a constant window.
double normalized_cross_correlation(const std::vector<double>& window,
                                    const std::vector<double>& tmpl);

Detection detect(const std::array<double, kSeqLen>& power_db, const TemplateBank& bank,
                 const ThresholdConfig& thresholds);

struct CalibrationGrid {
    std::vector<double> corr_thresholds;
    std::vector<double> amplitude_thresholds_db;
    static CalibrationGrid standard();
};

struct CalibrationResult {
    ThresholdConfig thresholds;
    double balanced_accuracy = 0.0;
};

CalibrationResult calibrate(const std::vector<LabeledSequence>& samples, const TemplateBank& bank,
                            const CalibrationGrid& grid);

} // namespace otdrnet
