#include "otdrnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace otdrnet {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double clip01(double x) { return std::clamp(x, 0.0, 1.0); }

std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

void fisher_yates(std::vector<int>& idx, Rng& rng) {
    for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i) {
        int j = rng.uniform_int(0, i);
        std::swap(idx[i], idx[j]);
    }
}

} // namespace

const char* split_name(Split s) {
    switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::ShiftedTest: return "shifted_test";
    }
    return "unknown";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    if (name == "shifted_test") return Split::ShiftedTest;
    throw std::invalid_argument("unknown split tag: " + name);
}

double compute_delta(const std::array<double, kSeqLen>& power_db) {
    double m = power_db[0];
    for (double p : power_db) {
        if (!std::isfinite(p)) throw std::invalid_argument("compute_delta: non-finite sample");
        m = std::max(m, p);
    }
    return m;
}

ModelInput normalize_sample(const std::array<double, kSeqLen>& power_db, double delta_raw,
                            double gamma_raw, const NormConstants& nc) {
    if (!std::isfinite(delta_raw) || !std::isfinite(gamma_raw))
        throw std::invalid_argument("normalize_sample: non-finite feature");
    if (gamma_raw < 0.0 || gamma_raw > nc.gamma_max_db)
        throw std::invalid_argument("normalize_sample: gamma out of range");

    double lo, hi;
    if (nc.power_norm == PowerNorm::PerSequence) {
        lo = *std::min_element(power_db.begin(), power_db.end());
        hi = *std::max_element(power_db.begin(), power_db.end());
    } else {
        lo = nc.power_min_db;
        hi = nc.power_max_db;
    }

    const double delta_norm =
        clip01((delta_raw - nc.delta_min_db) / (nc.delta_max_db - nc.delta_min_db));
    const double gamma_norm = clip01(gamma_raw / nc.gamma_max_db);

    ModelInput in;
    for (int t = 0; t < kSeqLen; ++t) {
        double p = power_db[t];
        if (!std::isfinite(p)) throw std::invalid_argument("normalize_sample: non-finite sample");
        double pn = (hi - lo) > 0.0 ? clip01((p - lo) / (hi - lo)) : 0.5;
        in.at(t, 0) = pn;
        in.at(t, 1) = delta_norm;
        in.at(t, 2) = gamma_norm;
    }
    return in;
}

EventLabel encode_targets(const EventParams& params, const NormConstants& nc) {
    EventLabel lab;
    lab.class_index = static_cast<int>(params.kind);
    if (params.kind == EventKind::NoEvent) return lab;

    if (params.position_index.has_value()) {
        lab.mask_position = true;
        lab.position_norm = *params.position_index / 29.0;
    }
    if (params.loss_db.has_value()) {
        lab.mask_loss = true;
        lab.loss_norm = clip01(*params.loss_db / nc.loss_scale_db);
    }
    if (params.reflectance_db.has_value()) {
        lab.mask_reflectance = true;
        lab.reflectance_norm =
            clip01((params.effective_reflectance_db() + nc.refl_offset_db) / nc.refl_scale_db);
    }
    return lab;
}

DecodedTargets decode_targets(double position_norm, double reflectance_norm, double loss_norm,
                              const NormConstants& nc, const SimConfig& cfg) {
    DecodedTargets d;
    d.position_m = clip01(position_norm) * 29.0 * cfg.meters_per_sample();
    d.reflectance_db = clip01(reflectance_norm) * nc.refl_scale_db - nc.refl_offset_db;
    d.loss_db = clip01(loss_norm) * nc.loss_scale_db;
    return d;
}

DataRow row_from_sample(const SequenceSample& s, const BuildOptions& opts) {
    DataRow r;
    r.power_db = s.power_db;
    r.delta_raw = compute_delta(s.power_db);
    r.gamma_raw = opts.use_true_snr ? s.true_snr_db : estimate_snr(s.power_db);
    r.class_index = static_cast<int>(s.params.kind);
    r.position_index = s.params.position_index.value_or(-1);
    r.loss_db = s.params.loss_db.value_or(kNaN);
    r.reflectance_db =
        s.params.reflectance_db.has_value() ? s.params.effective_reflectance_db() : kNaN;
    r.true_snr_db = s.true_snr_db;
    return r;
}

EventLabel row_label(const DataRow& row, const NormConstants& nc) {
    EventParams p;
    p.kind = static_cast<EventKind>(row.class_index);
    if (row.position_index >= 0) p.position_index = row.position_index;
    if (std::isfinite(row.loss_db)) p.loss_db = row.loss_db;
    if (std::isfinite(row.reflectance_db)) p.reflectance_db = row.reflectance_db;
    return encode_targets(p, nc);
}

ModelInput row_input(const DataRow& row, const NormConstants& nc) {
    return normalize_sample(row.power_db, row.delta_raw, row.gamma_raw, nc);
}

Dataset build_dataset(int n_per_class, const SimConfig& cfg, std::uint64_t seed,
                      const BuildOptions& opts) {
    if (n_per_class < 1) throw std::invalid_argument("build_dataset: n_per_class must be >= 1");
    cfg.validate();

    Rng root(seed);
    Dataset ds;
    ds.rows.reserve(static_cast<size_t>(n_per_class) * kNumClasses);

    for (int c = 0; c < kNumClasses; ++c) {
        const size_t class_begin = ds.rows.size();
        for (int i = 0; i < n_per_class; ++i) {
            Rng stream = root.child(static_cast<std::uint64_t>(c) * n_per_class + i);
            double snr = stream.uniform(0.0, 30.0);
            SequenceSample s =
                synth_sequence(static_cast<EventKind>(c), snr, cfg, stream, opts.shifted);
            ds.rows.push_back(row_from_sample(s, opts));
        }
        if (opts.shifted) {
            for (size_t i = class_begin; i < ds.rows.size(); ++i)
                ds.rows[i].split = Split::ShiftedTest;
            continue;
        }
        // per-class 60/20/20 split keeps the train split exactly balanced
        std::vector<int> idx(n_per_class);
        for (int i = 0; i < n_per_class; ++i) idx[i] = i;
        Rng shuffle_rng = root.child(0x5B115B11ULL + c);
        fisher_yates(idx, shuffle_rng);
        const int n_train = static_cast<int>(std::lround(0.6 * n_per_class));
        const int n_val = static_cast<int>(std::lround(0.2 * n_per_class));
        for (int i = 0; i < n_per_class; ++i) {
            Split sp = i < n_train ? Split::Train : (i < n_train + n_val ? Split::Val : Split::Test);
            ds.rows[class_begin + idx[i]].split = sp;
        }
    }
    return ds;
}

std::vector<SequenceSample> slice_trace(const TraceResult& trace, int stride) {
    if (static_cast<int>(trace.power_db.size()) < kSeqLen)
        throw std::invalid_argument("slice_trace: trace shorter than one sequence");
    if (stride < 1) throw std::invalid_argument("slice_trace: stride must be >= 1");

    std::vector<SequenceSample> out;
    const int n = static_cast<int>(trace.power_db.size());
    for (int start = 0; start + kSeqLen <= n; start += stride) {
        std::vector<const std::pair<int, EventParams>*> hits;
        for (const auto& ev : trace.events)
            if (ev.first >= start && ev.first < start + kSeqLen) hits.push_back(&ev);
        if (hits.size() > 1) continue;

        SequenceSample s;
        if (hits.size() == 1) {
            const int offset = hits[0]->first - start;
            if (offset < 2 || offset > 27) continue;
            s.params = hits[0]->second;
            s.params.position_index = offset;
        }
        for (int i = 0; i < kSeqLen; ++i) s.power_db[i] = trace.power_db[start + i];
        s.true_snr_db = estimate_snr(s.power_db);
        out.push_back(std::move(s));
    }
    return out;
}

void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_dataset: cannot open " + path);
    for (int i = 0; i < kSeqLen; ++i) {
        char col[8];
        std::snprintf(col, sizeof(col), "p%02d", i);
        f << col << ',';
    }
    f << "delta_raw,gamma_raw,class_index,position_index,loss_db,reflectance_db,true_snr_db,split_tag\n";
    for (const auto& r : ds.rows) {
        for (int i = 0; i < kSeqLen; ++i) f << fmt17(r.power_db[i]) << ',';
        f << fmt17(r.delta_raw) << ',' << fmt17(r.gamma_raw) << ',' << r.class_index << ','
          << r.position_index << ',' << fmt17(r.loss_db) << ',' << fmt17(r.reflectance_db) << ','
          << fmt17(r.true_snr_db) << ',' << split_name(r.split) << '\n';
    }
    if (!f) throw std::runtime_error("save_dataset: write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_dataset: cannot open " + path);

    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("load_dataset: missing header");

    const int n_cols = kSeqLen + 8;
    Dataset ds;
    int row_no = 1;
    while (std::getline(f, line)) {
        ++row_no;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (static_cast<int>(cells.size()) != n_cols)
            throw std::runtime_error("load_dataset: row " + std::to_string(row_no) +
                                     ": expected " + std::to_string(n_cols) + " columns, got " +
                                     std::to_string(cells.size()));

        auto num = [&](int col) {
            try {
                return std::stod(cells[col]);
            } catch (const std::exception&) {
                throw std::runtime_error("load_dataset: row " + std::to_string(row_no) +
                                         ", column " + std::to_string(col + 1) + ": bad number");
            }
        };

        DataRow r;
        for (int i = 0; i < kSeqLen; ++i) r.power_db[i] = num(i);
        r.delta_raw = num(kSeqLen);
        r.gamma_raw = num(kSeqLen + 1);
        r.class_index = static_cast<int>(num(kSeqLen + 2));
        if (r.class_index < 0 || r.class_index >= kNumClasses)
            throw std::runtime_error("load_dataset: row " + std::to_string(row_no) +
                                     ", column class_index: value out of [0, 7]");
        r.position_index = static_cast<int>(num(kSeqLen + 3));
        r.loss_db = num(kSeqLen + 4);
        r.reflectance_db = num(kSeqLen + 5);
        r.true_snr_db = num(kSeqLen + 6);
        try {
            r.split = split_from_name(cells[kSeqLen + 7]);
        } catch (const std::exception&) {
            throw std::runtime_error("load_dataset: row " + std::to_string(row_no) +
                                     ", column split_tag: unknown tag '" + cells[kSeqLen + 7] + "'");
        }
        ds.rows.push_back(r);
    }
    return ds;
}

} // namespace otdrnet
