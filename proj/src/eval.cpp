#include "otdrnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace otdrnet {

namespace {

using nlohmann::json;

std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

json opt_to_json(const std::optional<double>& v) {
    if (v.has_value()) return *v;
    return nullptr;
}

std::optional<double> opt_from_json(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

json binned_to_json(const BinnedRmse& b) {
    json j;
    j["overall"] = opt_to_json(b.overall);
    json bins = json::array();
    for (int i = 0; i < kNumSnrBins; ++i) bins.push_back(opt_to_json(b.per_bin[i]));
    j["per_bin"] = bins;
    return j;
}

BinnedRmse binned_from_json(const json& j) {
    BinnedRmse b;
    b.overall = opt_from_json(j.at("overall"));
    for (int i = 0; i < kNumSnrBins; ++i) b.per_bin[i] = opt_from_json(j.at("per_bin").at(i));
    return b;
}

void check_lengths(size_t a, size_t b, const char* what) {
    if (a != b) throw std::invalid_argument(std::string(what) + ": length mismatch");
}

} // namespace

int snr_bin(double snr_db) {
    int b = static_cast<int>(std::lround(snr_db / 5.0));
    return std::clamp(b, 0, kNumSnrBins - 1);
}

double snr_bin_center(int bin) { return 5.0 * bin; }

double ConfusionMatrix::accuracy() const {
    if (total == 0) return 0.0;
    long diag = 0;
    for (int c = 0; c < kNumClasses; ++c) diag += counts[c][c];
    return static_cast<double>(diag) / total;
}

ConfusionMatrix confusion_matrix(const std::vector<int>& true_classes,
                                 const std::vector<int>& predicted_classes) {
    check_lengths(true_classes.size(), predicted_classes.size(), "confusion_matrix");
    ConfusionMatrix cm;
    for (size_t i = 0; i < true_classes.size(); ++i) {
        int t = true_classes[i], p = predicted_classes[i];
        if (t < 0 || t >= kNumClasses || p < 0 || p >= kNumClasses)
            throw std::invalid_argument("confusion_matrix: class index out of [0, 7]");
        cm.counts[t][p] += 1;
        cm.total += 1;
    }
    for (int t = 0; t < kNumClasses; ++t) {
        long row_sum = 0;
        for (int p = 0; p < kNumClasses; ++p) row_sum += cm.counts[t][p];
        for (int p = 0; p < kNumClasses; ++p)
            cm.row_normalized[t][p] =
                row_sum > 0 ? static_cast<double>(cm.counts[t][p]) / row_sum : 0.0;
    }
    return cm;
}

std::optional<double> detection_probability(const std::vector<int>& true_classes,
                                            const std::vector<int>& predicted_classes,
                                            const std::vector<double>& snr_db, int cls, int bin) {
    check_lengths(true_classes.size(), predicted_classes.size(), "detection_probability");
    check_lengths(true_classes.size(), snr_db.size(), "detection_probability");
    long tp = 0, fn = 0;
    for (size_t i = 0; i < true_classes.size(); ++i) {
        if (snr_bin(snr_db[i]) != bin || true_classes[i] != cls) continue;
        (predicted_classes[i] == cls ? tp : fn)++;
    }
    if (tp + fn == 0) return std::nullopt;
    return static_cast<double>(tp) / (tp + fn);
}

std::optional<double> false_alarm_rate(const std::vector<int>& true_classes,
                                       const std::vector<int>& predicted_classes,
                                       const std::vector<double>& snr_db, int cls, int bin) {
    check_lengths(true_classes.size(), predicted_classes.size(), "false_alarm_rate");
    check_lengths(true_classes.size(), snr_db.size(), "false_alarm_rate");
    long fp = 0, tn = 0;
    for (size_t i = 0; i < true_classes.size(); ++i) {
        if (snr_bin(snr_db[i]) != bin || true_classes[i] == cls) continue;
        (predicted_classes[i] == cls ? fp : tn)++;
    }
    if (fp + tn == 0) return std::nullopt;
    return static_cast<double>(fp) / (fp + tn);
}

BinnedRmse regression_rmse(const std::vector<double>& pred, const std::vector<double>& target,
                           const std::vector<bool>& mask, const std::vector<double>& snr_db) {
    check_lengths(pred.size(), target.size(), "regression_rmse");
    check_lengths(pred.size(), mask.size(), "regression_rmse");
    check_lengths(pred.size(), snr_db.size(), "regression_rmse");

    std::array<double, kNumSnrBins> sq{};
    std::array<long, kNumSnrBins> n{};
    double sq_all = 0.0;
    long n_all = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (!mask[i]) continue;
        double e = pred[i] - target[i];
        int b = snr_bin(snr_db[i]);
        sq[b] += e * e;
        n[b] += 1;
        sq_all += e * e;
        n_all += 1;
    }
    BinnedRmse out;
    for (int b = 0; b < kNumSnrBins; ++b)
        if (n[b] > 0) out.per_bin[b] = std::sqrt(sq[b] / n[b]);
    if (n_all > 0) out.overall = std::sqrt(sq_all / n_all);
    return out;
}

EvalReport evaluate(const std::vector<DataRow>& rows, const std::vector<Prediction>& preds,
                    const SimConfig& cfg, const NormConstants& nc) {
    check_lengths(rows.size(), preds.size(), "evaluate");

    std::vector<int> truth(rows.size()), pred_cls(rows.size());
    std::vector<double> snr(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        truth[i] = rows[i].class_index;
        pred_cls[i] = preds[i].class_index;
        snr[i] = rows[i].true_snr_db;
    }

    EvalReport rep;
    rep.confusion = confusion_matrix(truth, pred_cls);
    rep.accuracy = rep.confusion.accuracy();
    for (int c = 0; c < kNumClasses; ++c) {
        for (int b = 0; b < kNumSnrBins; ++b) {
            rep.pd[c][b] = detection_probability(truth, pred_cls, snr, c, b);
            rep.pfa[c][b] = false_alarm_rate(truth, pred_cls, snr, c, b);
        }
    }

    std::vector<double> pos_p(rows.size()), pos_t(rows.size());
    std::vector<double> refl_p(rows.size()), refl_t(rows.size());
    std::vector<double> loss_p(rows.size()), loss_t(rows.size());
    std::vector<bool> pos_m(rows.size()), refl_m(rows.size()), loss_m(rows.size());
    const double mps = cfg.meters_per_sample();
    for (size_t i = 0; i < rows.size(); ++i) {
        const DataRow& r = rows[i];
        DecodedTargets d =
            decode_targets(preds[i].position_norm, preds[i].reflectance_norm, preds[i].loss_norm,
                           nc, cfg);
        pos_m[i] = r.position_index >= 0;
        pos_p[i] = d.position_m;
        pos_t[i] = pos_m[i] ? r.position_index * mps : 0.0;
        refl_m[i] = std::isfinite(r.reflectance_db);
        refl_p[i] = d.reflectance_db;
        refl_t[i] = refl_m[i] ? r.reflectance_db : 0.0;
        loss_m[i] = std::isfinite(r.loss_db);
        loss_p[i] = d.loss_db;
        loss_t[i] = loss_m[i] ? r.loss_db : 0.0;
    }
    rep.rmse_position_m = regression_rmse(pos_p, pos_t, pos_m, snr);
    rep.rmse_reflectance_db = regression_rmse(refl_p, refl_t, refl_m, snr);
    rep.rmse_loss_db = regression_rmse(loss_p, loss_t, loss_m, snr);
    return rep;
}

BaselineComparison compare_with_baseline(const std::vector<DataRow>& rows,
                                         const std::vector<Prediction>& gruae_preds,
                                         const std::vector<Detection>& baseline_dets,
                                         const SimConfig& cfg) {
    check_lengths(rows.size(), gruae_preds.size(), "compare_with_baseline");
    check_lengths(rows.size(), baseline_dets.size(), "compare_with_baseline");
    if (rows.empty()) throw std::invalid_argument("compare_with_baseline: empty split");
    for (const auto& r : rows)
        if (r.split != rows.front().split)
            throw std::invalid_argument("compare_with_baseline: rows span multiple splits");

    BaselineComparison cmp;
    long g_correct = 0, b_correct = 0;
    double g_sq = 0.0, b_sq = 0.0;
    long n_common = 0;
    const double mps = cfg.meters_per_sample();
    for (size_t i = 0; i < rows.size(); ++i) {
        const bool truth = rows[i].class_index != 0;
        const bool g_event = gruae_preds[i].class_index != 0;
        const bool b_event = baseline_dets[i].event;
        if (g_event == truth) ++g_correct;
        if (b_event == truth) ++b_correct;

        if (truth && g_event && b_event && rows[i].position_index >= 0) {
            double true_m = rows[i].position_index * mps;
            double g_m = gruae_preds[i].position_norm * 29.0 * mps;
            double b_m = baseline_dets[i].position_index.value_or(0) * mps;
            g_sq += (g_m - true_m) * (g_m - true_m);
            b_sq += (b_m - true_m) * (b_m - true_m);
            ++n_common;
        }
    }
    cmp.gruae_binary_accuracy = static_cast<double>(g_correct) / rows.size();
    cmp.baseline_binary_accuracy = static_cast<double>(b_correct) / rows.size();
    cmp.n_common_detections = static_cast<int>(n_common);
    if (n_common > 0) {
        cmp.gruae_pos_rmse_m = std::sqrt(g_sq / n_common);
        cmp.baseline_pos_rmse_m = std::sqrt(b_sq / n_common);
    }
    return cmp;
}

std::string report_to_json(const EvalReport& rep) {
    json j;
    j["accuracy"] = rep.accuracy;
    json counts = json::array(), rn = json::array();
    for (int t = 0; t < kNumClasses; ++t) {
        counts.push_back(rep.confusion.counts[t]);
        rn.push_back(rep.confusion.row_normalized[t]);
    }
    j["confusion"]["counts"] = counts;
    j["confusion"]["row_normalized"] = rn;
    j["confusion"]["total"] = rep.confusion.total;

    auto metric_grid = [&](const auto& grid) {
        json g = json::array();
        for (int c = 0; c < kNumClasses; ++c) {
            json row = json::array();
            for (int b = 0; b < kNumSnrBins; ++b) row.push_back(opt_to_json(grid[c][b]));
            g.push_back(row);
        }
        return g;
    };
    j["pd"] = metric_grid(rep.pd);
    j["pfa"] = metric_grid(rep.pfa);
    json centers = json::array();
    for (int b = 0; b < kNumSnrBins; ++b) centers.push_back(snr_bin_center(b));
    j["snr_bin_centers_db"] = centers;

    j["rmse_position_m"] = binned_to_json(rep.rmse_position_m);
    j["rmse_reflectance_db"] = binned_to_json(rep.rmse_reflectance_db);
    j["rmse_loss_db"] = binned_to_json(rep.rmse_loss_db);

    if (rep.baseline_comparison.has_value()) {
        const auto& c = *rep.baseline_comparison;
        json bc;
        bc["gruae_binary_accuracy"] = c.gruae_binary_accuracy;
        bc["baseline_binary_accuracy"] = c.baseline_binary_accuracy;
        bc["gruae_pos_rmse_m"] = opt_to_json(c.gruae_pos_rmse_m);
        bc["baseline_pos_rmse_m"] = opt_to_json(c.baseline_pos_rmse_m);
        bc["n_common_detections"] = c.n_common_detections;
        j["baseline_comparison"] = bc;
    }
    return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    EvalReport rep;
    rep.accuracy = j.at("accuracy");
    rep.confusion.total = j.at("confusion").at("total");
    for (int t = 0; t < kNumClasses; ++t)
        for (int p = 0; p < kNumClasses; ++p) {
            rep.confusion.counts[t][p] = j.at("confusion").at("counts").at(t).at(p);
            rep.confusion.row_normalized[t][p] =
                j.at("confusion").at("row_normalized").at(t).at(p);
        }
    for (int c = 0; c < kNumClasses; ++c)
        for (int b = 0; b < kNumSnrBins; ++b) {
            rep.pd[c][b] = opt_from_json(j.at("pd").at(c).at(b));
            rep.pfa[c][b] = opt_from_json(j.at("pfa").at(c).at(b));
        }
    rep.rmse_position_m = binned_from_json(j.at("rmse_position_m"));
    rep.rmse_reflectance_db = binned_from_json(j.at("rmse_reflectance_db"));
    rep.rmse_loss_db = binned_from_json(j.at("rmse_loss_db"));
    if (j.contains("baseline_comparison")) {
        const json& bc = j.at("baseline_comparison");
        BaselineComparison c;
        c.gruae_binary_accuracy = bc.at("gruae_binary_accuracy");
        c.baseline_binary_accuracy = bc.at("baseline_binary_accuracy");
        c.gruae_pos_rmse_m = opt_from_json(bc.at("gruae_pos_rmse_m"));
        c.baseline_pos_rmse_m = opt_from_json(bc.at("baseline_pos_rmse_m"));
        c.n_common_detections = bc.at("n_common_detections");
        rep.baseline_comparison = c;
    }
    return rep;
}

void write_figure_csvs(const EvalReport& rep, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    {
        std::ofstream f(fs::path(dir) / "fig3_confusion.csv", std::ios::binary);
        f << "true_class,predicted_class,count,row_normalized\n";
        for (int t = 0; t < kNumClasses; ++t)
            for (int p = 0; p < kNumClasses; ++p)
                f << event_kind_name(static_cast<EventKind>(t)) << ','
                  << event_kind_name(static_cast<EventKind>(p)) << ',' << rep.confusion.counts[t][p]
                  << ',' << fmt17(rep.confusion.row_normalized[t][p]) << '\n';
    }
    auto write_grid = [&](const char* file, const char* col, const auto& grid) {
        std::ofstream f(fs::path(dir) / file, std::ios::binary);
        f << "class,snr_bin_center_db," << col << '\n';
        for (int c = 0; c < kNumClasses; ++c)
            for (int b = 0; b < kNumSnrBins; ++b) {
                f << event_kind_name(static_cast<EventKind>(c)) << ',' << snr_bin_center(b) << ',';
                if (grid[c][b].has_value()) f << fmt17(*grid[c][b]);
                f << '\n';
            }
    };
    write_grid("fig4_pd.csv", "pd", rep.pd);
    write_grid("fig5_pfa.csv", "pfa", rep.pfa);

    {
        std::ofstream f(fs::path(dir) / "fig6_rmse.csv", std::ios::binary);
        f << "metric,snr_bin,rmse\n";
        auto dump = [&](const char* name, const BinnedRmse& b) {
            for (int i = 0; i < kNumSnrBins; ++i) {
                f << name << ',' << snr_bin_center(i) << ',';
                if (b.per_bin[i].has_value()) f << fmt17(*b.per_bin[i]);
                f << '\n';
            }
            f << name << ",overall,";
            if (b.overall.has_value()) f << fmt17(*b.overall);
            f << '\n';
        };
        dump("position_m", rep.rmse_position_m);
        dump("reflectance_db", rep.rmse_reflectance_db);
        dump("loss_db", rep.rmse_loss_db);
    }
    if (rep.baseline_comparison.has_value())
        write_comparison_csv(*rep.baseline_comparison,
                             (fs::path(dir) / "fig7_comparison.csv").string());
}

void write_comparison_csv(const BaselineComparison& cmp, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_comparison_csv: cannot open " + path);
    f << "method,binary_accuracy,position_rmse_m\n";
    f << "gru_ae," << fmt17(cmp.gruae_binary_accuracy) << ',';
    if (cmp.gruae_pos_rmse_m.has_value()) f << fmt17(*cmp.gruae_pos_rmse_m);
    f << '\n';
    f << "baseline," << fmt17(cmp.baseline_binary_accuracy) << ',';
    if (cmp.baseline_pos_rmse_m.has_value()) f << fmt17(*cmp.baseline_pos_rmse_m);
    f << '\n';
}

} // namespace otdrnet
