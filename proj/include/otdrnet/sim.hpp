#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "otdrnet/rng.hpp"

namespace otdrnet {

constexpr int kSeqLen = 30;
constexpr double kSpeedOfLight = 2.99792458e8; // m/s

// Event class indices. Frozen: this order is the confusion-matrix axis order
// and is used in every serialized artifact.
enum class EventKind : int {
    NoEvent = 0,
    Tapping = 1,
    BadSplice = 2,
    Bending = 3,
    DirtyConnector = 4,
    BrokenFiber = 5,
    Reflector = 6,
    PcConnector = 7,
};

constexpr int kNumClasses = 8;
const char* event_kind_name(EventKind k);

struct SimConfig {
    double pulse_width_ns = 10.0;
    double sample_interval_ns = 1.0;
    double wavelength_nm = 1650.0; // informational
    double atten_db_per_km = 0.25;
    double group_index = 1.468;
    double backscatter_ref_db = -73.0;
    double peak_ceiling_db = 30.0;
    double smoothing_sigma_samples = 1.0;
    std::uint64_t rng_seed = 1;

    void validate() const;
    int pulse_width_samples() const;
    // one-way distance per sample, c * dt / (2 n)
    double meters_per_sample() const;
};

struct EventParams {
    EventKind kind = EventKind::NoEvent;
    std::optional<double> loss_db;        // >= 0
    std::optional<double> reflectance_db; // <= 0
    double voa_atten_db = 0.0;            // Reflector only, [0, 30]
    std::optional<int> position_index;    // [2, 27] within a sequence

    // reflectance after the round trip through the VOA
    double effective_reflectance_db() const;
    bool reflective() const;
};

struct SequenceSample {
    std::array<double, kSeqLen> power_db{}; // raw dB, pre-normalization
    double true_snr_db = 0.0;
    EventParams params; // ground truth
};

struct LinkSpec {
    double total_length_m = 0.0;
    std::vector<std::pair<double, EventParams>> events; // (distance_m, params)
    double launch_power_db = 0.0;
    int averaging_count = 62;

    void validate(const SimConfig& cfg) const;
};

struct TraceResult {
    std::vector<double> power_db;
    std::vector<std::pair<int, EventParams>> events; // (onset sample index, params)
};

// Two-way attenuated Rayleigh backscatter level, dB relative to launch.
double backscatter_level(double distance_m, const SimConfig& cfg);

// Ideal noiseless 30-sample event profile, dB relative to local backscatter.
// BrokenFiber marks post-event samples with -inf; synthesis replaces them
// with the noise floor.
std::array<double, kSeqLen> event_signature(const EventParams& params, const SimConfig& cfg);

// Draw loss / reflectance / VOA for one event from the per-kind ranges.
// shifted=true draws from the distribution-shifted (generalization) ranges.
EventParams sample_event_params(EventKind kind, bool shifted, Rng& rng);

// One labeled 30-sample sequence at the requested SNR.
SequenceSample synth_sequence(EventKind kind, double snr_db, const SimConfig& cfg, Rng& rng,
                              bool shifted = false);

// Full OTDR trace for a link with labeled events.
TraceResult synth_trace(const LinkSpec& link, const SimConfig& cfg, Rng& rng);

// Robust per-sequence SNR estimate (gamma), clipped to [0, 30] dB.
double estimate_snr(const std::array<double, kSeqLen>& power_db);

} // namespace otdrnet
