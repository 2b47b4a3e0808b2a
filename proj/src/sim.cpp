#include "otdrnet/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace otdrnet {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kFloorLin = 1e-9; // -90 dB relative to launch

double db_to_lin(double db) { return std::pow(10.0, db / 10.0); }
double lin_to_db(double lin) { return 10.0 * std::log10(lin); }

bool has_loss(EventKind k) {
    switch (k) {
    case EventKind::Tapping:
    case EventKind::BadSplice:
    case EventKind::Bending:
    case EventKind::DirtyConnector:
    case EventKind::Reflector:
    case EventKind::PcConnector:
        return true;
    default:
        return false;
    }
}

bool may_reflect(EventKind k) {
    switch (k) {
    case EventKind::DirtyConnector:
    case EventKind::BrokenFiber:
    case EventKind::Reflector:
    case EventKind::PcConnector:
        return true;
    default:
        return false;
    }
}

// Loss transition width in samples. Splices and connectors are localized,
// taps extend over a pulse width. Bending is handled separately (exponential
// approach over the curved section rather than a linear ramp).
int loss_transition_width(EventKind k, int pw) {
    switch (k) {
    case EventKind::Tapping:
        return pw;
    case EventKind::BadSplice:
    case EventKind::DirtyConnector:
    case EventKind::Reflector:
    case EventKind::PcConnector:
        return 2;
    default:
        return pw;
    }
}

// Reflected-peak width in samples. Connectors return the full probe pulse;
// a demarcation reflector is narrowband and returns a sharper spike, and a
// break's Fresnel reflection off the cleaved end face is similarly localized.
int peak_width(EventKind k, int pw) {
    if (k == EventKind::Reflector || k == EventKind::BrokenFiber) return std::max(2, pw / 2);
    return pw;
}

// Contamination scatters the reflection, so a dirty connector shows a
// broadened peak compared to a clean PC connector or reflector.
double kind_smoothing_sigma(EventKind k, const SimConfig& cfg) {
    if (k == EventKind::DirtyConnector) return std::max(3.5, cfg.smoothing_sigma_samples);
    return cfg.smoothing_sigma_samples;
}

template <typename Vec>
void gaussian_smooth(Vec& s, double sigma) {
    if (sigma <= 0.0) return;
    const int n = static_cast<int>(s.size());
    const int half = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
    std::vector<double> kern(2 * half + 1);
    double norm = 0.0;
    for (int j = -half; j <= half; ++j) {
        kern[j + half] = std::exp(-0.5 * j * j / (sigma * sigma));
        norm += kern[j + half];
    }
    for (auto& k : kern) k /= norm;
    std::vector<double> out(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = -half; j <= half; ++j) {
            int idx = std::clamp(i + j, 0, n - 1);
            acc += kern[j + half] * s[idx];
        }
        out[i] = acc;
    }
    for (int i = 0; i < n; ++i) s[i] = out[i];
}

struct Ranges {
    double lo, hi;
    double draw(Rng& rng) const { return rng.uniform(lo, hi); }
    Ranges shifted_up() const {
        double w = hi - lo;
        return {lo + 0.25 * w, hi + 0.25 * w};
    }
};

} // namespace

const char* event_kind_name(EventKind k) {
    switch (k) {
    case EventKind::NoEvent: return "no_event";
    case EventKind::Tapping: return "tapping";
    case EventKind::BadSplice: return "bad_splice";
    case EventKind::Bending: return "bending";
    case EventKind::DirtyConnector: return "dirty_connector";
    case EventKind::BrokenFiber: return "broken_fiber";
    case EventKind::Reflector: return "reflector";
    case EventKind::PcConnector: return "pc_connector";
    }
    return "unknown";
}

void SimConfig::validate() const {
    if (pulse_width_ns <= 0.0 || sample_interval_ns <= 0.0)
        throw std::invalid_argument("SimConfig: pulse width and sample interval must be positive");
    double ratio = pulse_width_ns / sample_interval_ns;
    if (std::abs(ratio - std::round(ratio)) > 1e-9)
        throw std::invalid_argument("SimConfig: pulse width must be an integer multiple of the sample interval");
    if (group_index <= 0.0 || group_index >= 2.0)
        throw std::invalid_argument("SimConfig: group index out of (0, 2)");
    if (atten_db_per_km < 0.0)
        throw std::invalid_argument("SimConfig: attenuation must be nonnegative");
    if (peak_ceiling_db <= 0.0)
        throw std::invalid_argument("SimConfig: peak ceiling must be positive");
}

int SimConfig::pulse_width_samples() const {
    return static_cast<int>(std::round(pulse_width_ns / sample_interval_ns));
}

double SimConfig::meters_per_sample() const {
    return kSpeedOfLight * sample_interval_ns * 1e-9 / (2.0 * group_index);
}

double EventParams::effective_reflectance_db() const {
    return reflectance_db.value_or(0.0) - 2.0 * voa_atten_db;
}

bool EventParams::reflective() const {
    return reflectance_db.has_value();
}

double backscatter_level(double distance_m, const SimConfig& cfg) {
    if (distance_m < 0.0)
        throw std::domain_error("backscatter_level: negative distance");
    return cfg.backscatter_ref_db - 2.0 * cfg.atten_db_per_km * (distance_m / 1000.0);
}

std::array<double, kSeqLen> event_signature(const EventParams& params, const SimConfig& cfg) {
    cfg.validate();
    std::array<double, kSeqLen> sig{};
    if (params.kind == EventKind::NoEvent) return sig;

    if (!params.position_index.has_value())
        throw std::invalid_argument("event_signature: position_index required");
    const int pos = *params.position_index;
    if (pos < 2 || pos > 27)
        throw std::invalid_argument("event_signature: position_index outside [2, 27]");
    if (has_loss(params.kind) && !params.loss_db.has_value())
        throw std::invalid_argument("event_signature: loss_db required for this kind");
    if ((params.kind == EventKind::Reflector || params.kind == EventKind::PcConnector ||
         params.kind == EventKind::DirtyConnector) && !params.reflectance_db.has_value())
        throw std::invalid_argument("event_signature: reflectance_db required for this kind");
    if (params.voa_atten_db < 0.0 || params.voa_atten_db > 30.0)
        throw std::invalid_argument("event_signature: voa_atten_db outside [0, 30]");

    const int pw = cfg.pulse_width_samples();

    // loss step: linear ramp over the kind's transition width, except bending,
    // whose loss accumulates exponentially along the curved section
    if (params.loss_db.has_value()) {
        const double loss = *params.loss_db;
        if (params.kind == EventKind::Bending) {
            const double tau = pw / 2.0;
            for (int k = pos; k < kSeqLen; ++k)
                sig[k] -= loss * (1.0 - std::exp(-(k - pos + 1) / tau));
        } else {
            const int w = loss_transition_width(params.kind, pw);
            for (int k = pos; k < kSeqLen; ++k)
                sig[k] -= loss * std::min(k - pos + 1, w) / static_cast<double>(w);
        }
    }

    // reflective peak at its true height; receiver saturation is applied to
    // the acquired (smoothed) waveform below, so the peak's shoulders keep
    // encoding the reflectance even when the plateau clips
    if (params.reflectance_db.has_value()) {
        const double height =
            std::max(params.effective_reflectance_db() - cfg.backscatter_ref_db, 0.0);
        const int w = peak_width(params.kind, pw);
        for (int k = pos; k < std::min(pos + w, kSeqLen); ++k)
            sig[k] += height;
    }

    gaussian_smooth(sig, kind_smoothing_sigma(params.kind, cfg));

    // receiver saturation: the acquired waveform clips at the ceiling
    for (double& v : sig) v = std::min(v, cfg.peak_ceiling_db);

    // keep the onset sharp: the labeled index is the first deviating sample
    for (int k = 0; k < pos; ++k) sig[k] = 0.0;

    if (params.kind == EventKind::BrokenFiber) {
        const int cut = params.reflectance_db.has_value()
                            ? std::min(pos + peak_width(params.kind, pw), kSeqLen)
                            : pos;
        for (int k = cut; k < kSeqLen; ++k) sig[k] = -kInf;
    }
    return sig;
}

EventParams sample_event_params(EventKind kind, bool shifted, Rng& rng) {
    EventParams p;
    p.kind = kind;
    auto loss_range = [&](Ranges r) { return shifted ? r.shifted_up() : r; };
    switch (kind) {
    case EventKind::NoEvent:
        break;
    case EventKind::Tapping:
        p.loss_db = loss_range({0.1, 2.0}).draw(rng);
        break;
    case EventKind::BadSplice:
        p.loss_db = loss_range({0.2, 3.0}).draw(rng);
        break;
    case EventKind::Bending:
        p.loss_db = loss_range({0.5, 8.0}).draw(rng);
        break;
    case EventKind::DirtyConnector:
        p.loss_db = loss_range({0.3, 2.0}).draw(rng);
        p.reflectance_db = rng.uniform(-50.0, -30.0);
        break;
    case EventKind::BrokenFiber:
        if (rng.uniform() < 0.5) p.reflectance_db = rng.uniform(-55.0, -35.0);
        break;
    case EventKind::Reflector:
        p.loss_db = loss_range({0.1, 1.0}).draw(rng);
        p.reflectance_db = rng.uniform(-30.0, -14.0);
        // training concentrates on light attenuation so every training
        // reflector has an observable peak; the shifted set spans the full
        // VOA protocol range
        p.voa_atten_db = shifted ? rng.uniform(5.0, 30.0) : rng.uniform(0.0, 10.0);
        break;
    case EventKind::PcConnector:
        p.loss_db = loss_range({0.1, 1.0}).draw(rng);
        p.reflectance_db = rng.uniform(-45.0, -30.0);
        break;
    }
    return p;
}

SequenceSample synth_sequence(EventKind kind, double snr_db, const SimConfig& cfg, Rng& rng,
                              bool shifted) {
    if (snr_db < 0.0 || snr_db > 30.0)
        throw std::invalid_argument("synth_sequence: snr_db outside [0, 30]");
    cfg.validate();

    SequenceSample s;
    s.true_snr_db = snr_db;
    s.params = sample_event_params(kind, shifted, rng);
    if (kind != EventKind::NoEvent)
        s.params.position_index = rng.uniform_int(2, 27);

    const auto sig = event_signature(s.params, cfg);
    const double mps = cfg.meters_per_sample();

    const double p_local = db_to_lin(backscatter_level(0.0, cfg));
    const double sigma = p_local / db_to_lin(snr_db);

    for (int i = 0; i < kSeqLen; ++i) {
        double level_db = backscatter_level(i * mps, cfg);
        double lin = std::isinf(sig[i]) ? 0.0 : db_to_lin(level_db + sig[i]);
        lin += sigma * rng.normal();
        s.power_db[i] = lin_to_db(std::max(lin, kFloorLin));
    }
    return s;
}

void LinkSpec::validate(const SimConfig& cfg) const {
    if (total_length_m <= 0.0)
        throw std::invalid_argument("LinkSpec: total length must be positive");
    if (averaging_count < 1)
        throw std::invalid_argument("LinkSpec: averaging_count must be >= 1");
    const double min_sep = 2.0 * cfg.pulse_width_samples() * cfg.meters_per_sample();
    double prev = -1.0;
    for (const auto& [d, params] : events) {
        if (d < 0.0 || d > total_length_m)
            throw std::invalid_argument("LinkSpec: event distance outside the link");
        if (d <= prev)
            throw std::invalid_argument("LinkSpec: event distances must be strictly increasing");
        if (prev >= 0.0 && d - prev < min_sep)
            throw std::runtime_error("LinkSpec: events closer than twice the pulse width");
        prev = d;
        (void)params;
    }
}

TraceResult synth_trace(const LinkSpec& link, const SimConfig& cfg, Rng& rng) {
    cfg.validate();
    link.validate(cfg);

    const double mps = cfg.meters_per_sample();
    const int n = static_cast<int>(std::floor(link.total_length_m / mps)) + 1;
    const int pw = cfg.pulse_width_samples();

    TraceResult tr;
    tr.power_db.resize(n);

    // event-induced deviation from the backscatter baseline, dB
    std::vector<double> dev(n, 0.0);
    int broken_from = n;
    for (const auto& [dist, paramsIn] : link.events) {
        EventParams params = paramsIn;
        const int onset = static_cast<int>(std::round(dist / mps));
        params.position_index = std::clamp(onset, 0, n - 1);
        tr.events.emplace_back(onset, params);

        // same per-kind recipe as event_signature: shape, smoothing, onset
        std::vector<double> edev(n, 0.0);
        if (params.loss_db.has_value()) {
            const double loss = *params.loss_db;
            if (params.kind == EventKind::Bending) {
                const double tau = pw / 2.0;
                for (int k = onset; k < n; ++k)
                    edev[k] -= loss * (1.0 - std::exp(-(k - onset + 1) / tau));
            } else {
                const int w = loss_transition_width(params.kind, pw);
                for (int k = onset; k < n; ++k)
                    edev[k] -= loss * std::min(k - onset + 1, w) / static_cast<double>(w);
            }
        }
        if (params.reflectance_db.has_value()) {
            const double height =
                std::max(params.effective_reflectance_db() - cfg.backscatter_ref_db, 0.0);
            const int w = peak_width(params.kind, pw);
            for (int k = onset; k < std::min(onset + w, n); ++k)
                edev[k] += height;
        }
        gaussian_smooth(edev, kind_smoothing_sigma(params.kind, cfg));
        for (int k = 0; k < std::min(onset, n); ++k) edev[k] = 0.0;
        for (int k = 0; k < n; ++k) dev[k] += edev[k];

        if (params.kind == EventKind::BrokenFiber) {
            const int cut = params.reflectance_db.has_value()
                                ? onset + peak_width(params.kind, pw)
                                : onset;
            broken_from = std::min(broken_from, cut);
        }
    }
    // receiver saturation on the acquired waveform
    for (double& v : dev) v = std::min(v, cfg.peak_ceiling_db);

    const double sigma_single = db_to_lin(link.launch_power_db + cfg.backscatter_ref_db);
    const double sigma = sigma_single / std::sqrt(static_cast<double>(link.averaging_count));
    const double floor_lin = db_to_lin(link.launch_power_db) * kFloorLin;

    for (int i = 0; i < n; ++i) {
        double level_db = link.launch_power_db + backscatter_level(i * mps, cfg) + dev[i];
        double lin = (i >= broken_from) ? 0.0 : db_to_lin(level_db);
        lin += sigma * rng.normal();
        tr.power_db[i] = lin_to_db(std::max(lin, floor_lin));
    }
    return tr;
}

double estimate_snr(const std::array<double, kSeqLen>& power_db) {
    std::array<double, kSeqLen> lin;
    for (int i = 0; i < kSeqLen; ++i) {
        if (!std::isfinite(power_db[i]))
            throw std::invalid_argument("estimate_snr: non-finite sample");
        lin[i] = db_to_lin(power_db[i]);
    }

    std::array<double, kSeqLen - 1> diff;
    for (int i = 0; i + 1 < kSeqLen; ++i) diff[i] = lin[i + 1] - lin[i];

    auto median = [](std::vector<double> x) {
        std::sort(x.begin(), x.end());
        size_t n = x.size();
        return n % 2 ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
    };

    std::vector<double> d(diff.begin(), diff.end());
    const double med_d = median(d);
    std::vector<double> absdev(d.size());
    for (size_t i = 0; i < d.size(); ++i) absdev[i] = std::abs(d[i] - med_d);
    // robust sigma: 1.4826 * MAD, then / sqrt(2) since differencing doubles variance
    const double noise_std = 1.4826 * median(absdev) / std::sqrt(2.0);

    const double level = median(std::vector<double>(lin.begin(), lin.end()));
    if (noise_std <= 0.0 || level <= 0.0) return 30.0;
    const double snr = 10.0 * std::log10(level / noise_std);
    return std::clamp(snr, 0.0, 30.0);
}

} // namespace otdrnet
