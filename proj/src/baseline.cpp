#include "otdrnet/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace otdrnet {

namespace {

constexpr int kSubWindow = 15; // sliding correlation support

void standardize(std::vector<double>& x) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= x.size();
    double norm = 0.0;
    for (double& v : x) {
        v -= mean;
        norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm > 0.0)
        for (double& v : x) v /= norm;
}

double window_median(const std::array<double, kSeqLen>& x) {
    std::array<double, kSeqLen> s = x;
    std::sort(s.begin(), s.end());
    return 0.5 * (s[kSeqLen / 2 - 1] + s[kSeqLen / 2]);
}

struct CroppedTemplate {
    std::vector<double> values; // standardized, length kSubWindow
    int onset = 0;
    KindGroup group = KindGroup::None;
};

CroppedTemplate crop_template(const std::array<double, kSeqLen>& full, int start, int full_onset,
                              KindGroup group) {
    CroppedTemplate ct;
    ct.values.assign(full.begin() + start, full.begin() + start + kSubWindow);
    standardize(ct.values);
    ct.onset = full_onset - start;
    ct.group = group;
    return ct;
}

// Several crop phases per template so the onset can sit early, centered or
// late inside the sliding sub-window; a single center crop cannot align
// events close to either edge of the sequence.
std::vector<CroppedTemplate> crop_phases(const std::array<double, kSeqLen>& full, int full_onset,
                                         KindGroup group) {
    std::vector<CroppedTemplate> out;
    int last_start = -1;
    for (int want : {2, 7, 12}) {
        int start = std::clamp(full_onset - want, 0, kSeqLen - kSubWindow);
        if (start == last_start) continue;
        last_start = start;
        out.push_back(crop_template(full, start, full_onset, group));
    }
    return out;
}

// Robust per-window noise scale (dB) from first differences, as in the SNR
// estimator: sigma = 1.4826 * MAD(diff) / sqrt(2).
double window_noise_db(const std::array<double, kSeqLen>& x) {
    std::vector<double> d;
    d.reserve(kSeqLen - 1);
    for (int i = 1; i < kSeqLen; ++i) d.push_back(x[i] - x[i - 1]);
    std::vector<double> a = d;
    std::nth_element(a.begin(), a.begin() + a.size() / 2, a.end());
    const double med = a[a.size() / 2];
    for (double& v : a) v = std::abs(v - med);
    std::nth_element(a.begin(), a.begin() + a.size() / 2, a.end());
    return 1.4826 * a[a.size() / 2] / std::sqrt(2.0);
}

// correlation/amplitude features, thresholded later
struct DetectFeatures {
    double best_corr = 0.0;
    KindGroup group = KindGroup::None;
    int position = 0;
    double amplitude_db = 0.0;
};

DetectFeatures detect_features(const std::array<double, kSeqLen>& power_db,
                               const TemplateBank& bank) {
    std::vector<CroppedTemplate> tmpls =
        crop_phases(bank.reflective, bank.reflective_onset, KindGroup::Reflective);
    for (auto& t : crop_phases(bank.nonreflective, bank.nonreflective_onset,
                               KindGroup::NonReflective))
        tmpls.push_back(std::move(t));

    DetectFeatures f;
    f.best_corr = -2.0;
    std::vector<double> window(kSubWindow);
    for (int off = 0; off + kSubWindow <= kSeqLen; ++off) {
        std::copy(power_db.begin() + off, power_db.begin() + off + kSubWindow, window.begin());
        for (const auto& t : tmpls) {
            double c = normalized_cross_correlation(window, t.values);
            if (c > f.best_corr) {
                f.best_corr = c;
                f.group = t.group;
                f.position = std::clamp(off + t.onset, 0, kSeqLen - 1);
            }
        }
    }

    const double med = window_median(power_db);
    for (double v : power_db) f.amplitude_db = std::max(f.amplitude_db, std::abs(v - med));
    return f;
}

// Refine the template-aligned detection: decide the group from the peak
// prominence of the raw window and re-derive the onset by a direct scan.
// Clipped or broadened peaks and narrow loss ramps misalign a pure template
// match by a few samples; the scan restores sample-level accuracy. All
// thresholds are relative, so the correlation-side scale invariance holds.
void refine_detection(const std::array<double, kSeqLen>& x, const ThresholdConfig& thresholds,
                      Detection& d) {
    const double lead = 0.5 * (x[0] + x[1]);
    const double trail = 0.5 * (x[kSeqLen - 2] + x[kSeqLen - 1]);
    double mx = x[0], mn = x[0];
    for (double v : x) {
        mx = std::max(mx, v);
        mn = std::min(mn, v);
    }
    (void)trail;
    const double sigma = window_noise_db(x);

    // loss-type events never rise above the leading baseline; peaks do, even
    // when clipped or only partially inside the window
    const double rise = mx - lead;
    const bool reflective = rise >= std::max(thresholds.amplitude_threshold_db, 6.0 * sigma);
    d.group = reflective ? KindGroup::Reflective : KindGroup::NonReflective;

    if (reflective) {
        for (int i = 0; i < kSeqLen; ++i)
            if (x[i] - lead >= 0.2 * rise) {
                d.position_index = i;
                return;
            }
    } else {
        const double drop = lead - mn;
        const double thresh = std::max(0.05 * drop, 4.0 * sigma);
        if (thresh > 0.0 && thresh <= drop) {
            for (int i = 0; i < kSeqLen; ++i)
                if (lead - x[i] >= thresh) {
                    d.position_index = i;
                    return;
                }
        }
    }
    // scan inconclusive: keep the template-aligned position
}

} // namespace

TemplateBank build_templates(const SimConfig& cfg) {
    cfg.validate();
    const int pw = cfg.pulse_width_samples();
    TemplateBank bank;

    // canonical reflective peak, one pulse width wide, centered
    const int peak_start = (kSeqLen - pw) / 2;
    std::vector<double> refl(kSeqLen, 0.0);
    for (int k = peak_start; k < std::min(peak_start + pw, kSeqLen); ++k) refl[k] = 1.0;

    // canonical non-reflective step at the window center
    const int step_start = kSeqLen / 2;
    std::vector<double> nonrefl(kSeqLen, 0.0);
    for (int k = step_start; k < kSeqLen; ++k)
        nonrefl[k] = -std::min(k - step_start + 1, pw) / static_cast<double>(pw);

    auto smooth = [&](std::vector<double>& s) {
        const double sigma = cfg.smoothing_sigma_samples;
        if (sigma <= 0.0) return;
        const int half = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
        std::vector<double> kern(2 * half + 1);
        double norm = 0.0;
        for (int j = -half; j <= half; ++j) {
            kern[j + half] = std::exp(-0.5 * j * j / (sigma * sigma));
            norm += kern[j + half];
        }
        for (auto& k : kern) k /= norm;
        std::vector<double> out(s.size(), 0.0);
        for (int i = 0; i < static_cast<int>(s.size()); ++i)
            for (int j = -half; j <= half; ++j)
                out[i] += kern[j + half] * s[std::clamp(i + j, 0, static_cast<int>(s.size()) - 1)];
        s = out;
    };
    smooth(refl);
    smooth(nonrefl);
    standardize(refl);
    standardize(nonrefl);

    std::copy(refl.begin(), refl.end(), bank.reflective.begin());
    std::copy(nonrefl.begin(), nonrefl.end(), bank.nonreflective.begin());
    bank.reflective_onset = peak_start;
    bank.nonreflective_onset = step_start;
    return bank;
}

double normalized_cross_correlation(const std::vector<double>& window,
                                    const std::vector<double>& tmpl) {
    if (window.size() != tmpl.size())
        throw std::invalid_argument("normalized_cross_correlation: length mismatch");
    std::vector<double> w = window;
    double mean = 0.0;
    for (double v : w) mean += v;
    mean /= w.size();
    double norm = 0.0;
    for (double& v : w) {
        v -= mean;
        norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm <= 0.0) return 0.0;
    double dot = 0.0;
    for (size_t i = 0; i < w.size(); ++i) dot += (w[i] / norm) * tmpl[i];
    return std::clamp(dot, -1.0, 1.0);
}

Detection detect(const std::array<double, kSeqLen>& power_db, const TemplateBank& bank,
                 const ThresholdConfig& thresholds) {
    DetectFeatures f = detect_features(power_db, bank);
    Detection d;
    d.best_correlation = f.best_corr;
    if (f.best_corr >= thresholds.corr_threshold &&
        f.amplitude_db >= thresholds.amplitude_threshold_db) {
        d.event = true;
        d.group = f.group;
        d.position_index = f.position;
        refine_detection(power_db, thresholds, d);
    }
    return d;
}

CalibrationGrid CalibrationGrid::standard() {
    CalibrationGrid g;
    for (double c = 0.05; c <= 0.951; c += 0.05) g.corr_thresholds.push_back(c);
    for (double a = 0.1; a <= 3.001; a += 0.1) g.amplitude_thresholds_db.push_back(a);
    return g;
}

CalibrationResult calibrate(const std::vector<LabeledSequence>& samples, const TemplateBank& bank,
                            const CalibrationGrid& grid) {
    if (samples.empty()) throw std::invalid_argument("calibrate: empty sample set");

    struct Feat {
        double corr, amp;
        bool truth;
    };
    std::vector<Feat> feats;
    feats.reserve(samples.size());
    int n_pos = 0, n_neg = 0;
    for (const auto& s : samples) {
        DetectFeatures f = detect_features(s.power_db, bank);
        feats.push_back({f.best_corr, f.amplitude_db, s.has_event});
        (s.has_event ? n_pos : n_neg)++;
    }

    CalibrationResult best;
    best.balanced_accuracy = -1.0;
    for (double c : grid.corr_thresholds) {
        for (double a : grid.amplitude_thresholds_db) {
            int tp = 0, tn = 0;
            for (const auto& f : feats) {
                bool declared = f.corr >= c && f.amp >= a;
                if (declared && f.truth) ++tp;
                if (!declared && !f.truth) ++tn;
            }
            double tpr = n_pos > 0 ? static_cast<double>(tp) / n_pos : 1.0;
            double tnr = n_neg > 0 ? static_cast<double>(tn) / n_neg : 1.0;
            double bal = 0.5 * (tpr + tnr);
            // ties break toward the higher correlation threshold
            if (bal > best.balanced_accuracy ||
                (bal == best.balanced_accuracy && c > best.thresholds.corr_threshold)) {
                best.balanced_accuracy = bal;
                best.thresholds = {c, a};
            }
        }
    }
    return best;
}

} // namespace otdrnet
