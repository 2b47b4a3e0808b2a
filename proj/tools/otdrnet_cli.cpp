// otdrnet: synthesize OTDR traces, build labeled sequence datasets, train the
// GRU autoencoder, and evaluate it against the matched-template baseline.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "otdrnet/baseline.hpp"
#include "otdrnet/config.hpp"
#include "otdrnet/dataset.hpp"
#include "otdrnet/eval.hpp"
#include "otdrnet/gru_ae.hpp"
#include "otdrnet/nn.hpp"
#include "otdrnet/sim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace otdrnet;

namespace {

std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

EventKind kind_from_name(const std::string& name) {
    for (int k = 0; k < kNumClasses; ++k)
        if (name == event_kind_name(static_cast<EventKind>(k))) return static_cast<EventKind>(k);
    throw std::invalid_argument("unknown event kind: " + name);
}

void write_resolved_config(const json& resolved, const std::string& out_dir) {
    fs::create_directories(out_dir);
    save_json_file(resolved, (fs::path(out_dir) / "resolved_config.json").string());
}

struct CommonOpts {
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed_flag;
};

json load_config(const CommonOpts& c) {
    if (c.config_path.empty()) return json::object();
    return load_json_file(c.config_path);
}

SimConfig resolve_sim(const json& cfg_json, const CommonOpts& c) {
    SimConfig sim = cfg_json.contains("sim") ? sim_config_from_json(cfg_json.at("sim"))
                                             : SimConfig{};
    if (c.seed_flag.has_value()) sim.rng_seed = *c.seed_flag;
    return sim;
}

LinkSpec link_from_json(const json& j) {
    LinkSpec link;
    link.total_length_m = j.at("total_length_m");
    if (j.contains("launch_power_db")) link.launch_power_db = j.at("launch_power_db");
    if (j.contains("averaging_count")) link.averaging_count = j.at("averaging_count");
    for (const auto& ev : j.value("events", json::array())) {
        EventParams p;
        p.kind = kind_from_name(ev.at("kind"));
        if (ev.contains("loss_db")) p.loss_db = ev.at("loss_db").get<double>();
        if (ev.contains("reflectance_db")) p.reflectance_db = ev.at("reflectance_db").get<double>();
        if (ev.contains("voa_atten_db")) p.voa_atten_db = ev.at("voa_atten_db").get<double>();
        link.events.emplace_back(ev.at("distance_m").get<double>(), p);
    }
    return link;
}

int cmd_simulate(const CommonOpts& c) {
    json cfg_json = load_config(c);
    SimConfig sim = resolve_sim(cfg_json, c);
    if (!cfg_json.contains("link"))
        throw std::runtime_error("simulate: config file must define a \"link\" section");
    LinkSpec link = link_from_json(cfg_json.at("link"));

    Rng rng(sim.rng_seed);
    TraceResult tr = synth_trace(link, sim, rng);

    fs::create_directories(c.out_dir);
    const double mps = sim.meters_per_sample();
    {
        std::ofstream f(fs::path(c.out_dir) / "trace.csv", std::ios::binary);
        f << "distance_m,power_db\n";
        for (size_t i = 0; i < tr.power_db.size(); ++i)
            f << fmt17(i * mps) << ',' << fmt17(tr.power_db[i]) << '\n';
    }
    {
        std::ofstream f(fs::path(c.out_dir) / "trace_events.csv", std::ios::binary);
        f << "sample_index,distance_m,kind,loss_db,reflectance_db,voa_atten_db\n";
        for (const auto& [idx, p] : tr.events) {
            f << idx << ',' << fmt17(idx * mps) << ',' << event_kind_name(p.kind) << ',';
            if (p.loss_db.has_value()) f << fmt17(*p.loss_db);
            f << ',';
            if (p.reflectance_db.has_value()) f << fmt17(*p.reflectance_db);
            f << ',' << fmt17(p.voa_atten_db) << '\n';
        }
    }
    json resolved;
    resolved["command"] = "simulate";
    resolved["sim"] = sim_config_to_json(sim);
    resolved["link"] = cfg_json.at("link");
    resolved["seed"] = sim.rng_seed;
    write_resolved_config(resolved, c.out_dir);
    std::cout << "wrote " << tr.power_db.size() << "-sample trace with " << tr.events.size()
              << " events to " << c.out_dir << "\n";
    return 0;
}

int cmd_build_dataset(const CommonOpts& c, int n_per_class, bool shifted, bool use_true_snr) {
    json cfg_json = load_config(c);
    SimConfig sim = resolve_sim(cfg_json, c);

    BuildOptions opts;
    opts.shifted = shifted;
    opts.use_true_snr = use_true_snr;
    Dataset ds = build_dataset(n_per_class, sim, sim.rng_seed, opts);

    fs::create_directories(c.out_dir);
    save_dataset(ds, (fs::path(c.out_dir) / "dataset.csv").string());

    json resolved;
    resolved["command"] = "build-dataset";
    resolved["sim"] = sim_config_to_json(sim);
    resolved["n_per_class"] = n_per_class;
    resolved["shifted"] = shifted;
    resolved["use_true_snr"] = use_true_snr;
    resolved["seed"] = sim.rng_seed;
    write_resolved_config(resolved, c.out_dir);
    std::cout << "wrote " << ds.rows.size() << " samples to " << c.out_dir << "/dataset.csv\n";
    return 0;
}

int cmd_train(const CommonOpts& c, const std::string& dataset_path, const TrainConfig& train) {
    json cfg_json = load_config(c);
    Dataset ds = load_dataset(dataset_path);

    FitResult fitres = fit(ds, train);

    fs::create_directories(c.out_dir);
    save_model(fitres.params, (fs::path(c.out_dir) / "model.bin").string());
    {
        std::ofstream f(fs::path(c.out_dir) / "history.csv", std::ios::binary);
        f << "epoch,train_loss,val_loss,val_accuracy\n";
        for (const auto& e : fitres.history)
            f << e.epoch << ',' << fmt17(e.train_loss) << ',' << fmt17(e.val_loss) << ','
              << fmt17(e.val_accuracy) << '\n';
    }
    json resolved;
    resolved["command"] = "train";
    resolved["train"] = train_config_to_json(train);
    resolved["dataset"] = dataset_path;
    resolved["seed"] = train.seed;
    resolved["best_epoch"] = fitres.best_epoch;
    write_resolved_config(resolved, c.out_dir);
    std::cout << "trained " << fitres.history.size() << " epochs, best epoch "
              << fitres.best_epoch << " (val loss "
              << fitres.history[fitres.best_epoch].val_loss << ", val accuracy "
              << fitres.history[fitres.best_epoch].val_accuracy << ")\n";
    return 0;
}

std::vector<DataRow> rows_for_split(const Dataset& ds, Split split) {
    std::vector<DataRow> rows;
    for (const auto& r : ds.rows)
        if (r.split == split) rows.push_back(r);
    return rows;
}

int cmd_evaluate(const CommonOpts& c, const std::string& model_path,
                 const std::string& dataset_path, const std::string& split_tag) {
    json cfg_json = load_config(c);
    SimConfig sim = resolve_sim(cfg_json, c);
    GruAeParams model = load_model(model_path);
    Dataset ds = load_dataset(dataset_path);

    std::vector<DataRow> rows = rows_for_split(ds, split_from_name(split_tag));
    if (rows.empty()) throw std::runtime_error("evaluate: no rows with split '" + split_tag + "'");

    std::vector<ModelInput> inputs;
    inputs.reserve(rows.size());
    for (const auto& r : rows) inputs.push_back(row_input(r));
    std::vector<Prediction> preds = predict(inputs, model);

    EvalReport rep = evaluate(rows, preds, sim);

    fs::create_directories(c.out_dir);
    {
        std::ofstream f(fs::path(c.out_dir) / "report.json", std::ios::binary);
        f << report_to_json(rep);
    }
    write_figure_csvs(rep, c.out_dir);

    json resolved;
    resolved["command"] = "evaluate";
    resolved["sim"] = sim_config_to_json(sim);
    resolved["model"] = model_path;
    resolved["dataset"] = dataset_path;
    resolved["split"] = split_tag;
    resolved["seed"] = sim.rng_seed;
    write_resolved_config(resolved, c.out_dir);
    std::cout << "accuracy " << rep.accuracy << " over " << rows.size() << " samples; report in "
              << c.out_dir << "\n";
    return 0;
}

int cmd_compare(const CommonOpts& c, const std::string& model_path,
                const std::string& shifted_dataset_path,
                const std::string& calibration_dataset_path) {
    json cfg_json = load_config(c);
    SimConfig sim = resolve_sim(cfg_json, c);
    GruAeParams model = load_model(model_path);

    Dataset shifted = load_dataset(shifted_dataset_path);
    std::vector<DataRow> rows = rows_for_split(shifted, Split::ShiftedTest);
    if (rows.empty())
        throw std::runtime_error("compare: no shifted_test rows in " + shifted_dataset_path);

    TemplateBank bank = build_templates(sim);

    Dataset calib = load_dataset(calibration_dataset_path);
    std::vector<LabeledSequence> calib_seqs;
    for (const auto& r : calib.rows) {
        if (r.split != Split::Train) continue;
        LabeledSequence s;
        s.power_db = r.power_db;
        s.has_event = r.class_index != 0;
        calib_seqs.push_back(s);
    }
    if (calib_seqs.empty())
        throw std::runtime_error("compare: calibration dataset has no train rows");
    CalibrationResult cal = calibrate(calib_seqs, bank, CalibrationGrid::standard());

    std::vector<ModelInput> inputs;
    inputs.reserve(rows.size());
    for (const auto& r : rows) inputs.push_back(row_input(r));
    std::vector<Prediction> preds = predict(inputs, model);

    std::vector<Detection> dets;
    dets.reserve(rows.size());
    for (const auto& r : rows) dets.push_back(detect(r.power_db, bank, cal.thresholds));

    BaselineComparison cmp = compare_with_baseline(rows, preds, dets, sim);

    fs::create_directories(c.out_dir);
    write_comparison_csv(cmp, (fs::path(c.out_dir) / "fig7_comparison.csv").string());
    save_json_file(thresholds_to_json(cal.thresholds),
                   (fs::path(c.out_dir) / "baseline_thresholds.json").string());

    json resolved;
    resolved["command"] = "compare";
    resolved["sim"] = sim_config_to_json(sim);
    resolved["model"] = model_path;
    resolved["shifted_dataset"] = shifted_dataset_path;
    resolved["calibration_dataset"] = calibration_dataset_path;
    resolved["calibration_balanced_accuracy"] = cal.balanced_accuracy;
    resolved["seed"] = sim.rng_seed;
    write_resolved_config(resolved, c.out_dir);

    std::cout << "gru_ae accuracy " << cmp.gruae_binary_accuracy << " vs baseline "
              << cmp.baseline_binary_accuracy << "; position rmse "
              << (cmp.gruae_pos_rmse_m ? std::to_string(*cmp.gruae_pos_rmse_m) : "n/a") << " vs "
              << (cmp.baseline_pos_rmse_m ? std::to_string(*cmp.baseline_pos_rmse_m) : "n/a")
              << " m\n";
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, double tolerance) {
    SimConfig sim;
    sim.rng_seed = seed;
    Rng rng(seed);

    // four random samples covering masked and unmasked labels
    const EventKind kinds[4] = {EventKind::NoEvent, EventKind::BadSplice, EventKind::Reflector,
                                EventKind::BrokenFiber};
    std::vector<ModelInput> inputs;
    std::vector<EventLabel> labels;
    for (int i = 0; i < 4; ++i) {
        Rng stream = rng.child(i);
        SequenceSample s = synth_sequence(kinds[i], 10.0 + 5.0 * i, sim, stream);
        DataRow row = row_from_sample(s);
        inputs.push_back(row_input(row));
        labels.push_back(row_label(row));
    }

    GruAeParams params = init_gru_ae(seed);
    TaskWeights weights;
    GruAeParams grads;
    std::vector<int> all = {0, 1, 2, 3};
    batch_gradient_serial(inputs, labels, all, params, weights, grads);

    auto loss_fn = [&]() {
        long double total = 0.0L;
        for (int i = 0; i < 4; ++i)
            total += sample_loss_precise(inputs[i], labels[i], params, weights);
        return total / 4.0L;
    };

    auto pblocks = params.blocks();
    auto gblocks = grads.blocks();
    auto names = params.block_names();
    std::vector<GradCheckBlock> blocks;
    for (size_t b = 0; b < pblocks.size(); ++b)
        blocks.push_back({names[b], pblocks[b], gblocks[b]});

    Rng check_rng(seed ^ 0xC4ECULL);
    GradCheckReport rep = grad_check(loss_fn, blocks, 50, check_rng);

    std::cout << "gradcheck: max relative error " << rep.max_rel_error << " in block "
              << rep.worst_block << " (tolerance " << tolerance << ")\n";
    if (!rep.passed(tolerance)) {
        for (const auto& [name, err] : rep.block_errors)
            if (err >= tolerance) std::cout << "  FAIL " << name << ": " << err << "\n";
        return 1;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"OTDR fault diagnosis: simulator, GRU autoencoder, and baseline comparison"};
    app.require_subcommand(0, 1);

    CommonOpts common;
    int n_per_class = 1000;
    bool shifted = false, use_true_snr = false;
    std::string dataset_path, model_path, split_tag = "test";
    std::string shifted_dataset_path, calibration_dataset_path;
    double tolerance = 1e-5;
    TrainConfig train;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "JSON config file");
        sub->add_option("--out", common.out_dir, "output directory");
        sub->add_option("--seed", common.seed_flag, "root seed (overrides config file)");
    };

    CLI::App* sim_cmd = app.add_subcommand("simulate", "synthesize a full OTDR trace");
    add_common(sim_cmd);

    CLI::App* build_cmd = app.add_subcommand("build-dataset", "build a labeled sequence dataset");
    add_common(build_cmd);
    build_cmd->add_option("--n-per-class", n_per_class, "samples per event class");
    build_cmd->add_flag("--shifted", shifted, "draw from the distribution-shifted ranges");
    build_cmd->add_flag("--use-true-snr", use_true_snr, "gamma from ground truth, not the estimator");

    CLI::App* train_cmd = app.add_subcommand("train", "train the GRU autoencoder");
    add_common(train_cmd);
    train_cmd->add_option("--dataset", dataset_path, "dataset CSV")->required();
    auto* lr_opt = train_cmd->add_option("--lr", train.lr, "learning rate");
    auto* lrd_opt = train_cmd->add_option("--lr-decay", train.lr_decay,
                                          "per-epoch learning-rate decay factor");
    auto* bs_opt = train_cmd->add_option("--batch-size", train.batch_size, "batch size");
    auto* ep_opt = train_cmd->add_option("--epochs", train.epochs, "max epochs");
    auto* pat_opt = train_cmd->add_option("--patience", train.patience, "early-stop patience");

    CLI::App* eval_cmd = app.add_subcommand("evaluate", "evaluate a trained model");
    add_common(eval_cmd);
    eval_cmd->add_option("--model", model_path, "model container")->required();
    eval_cmd->add_option("--dataset", dataset_path, "dataset CSV")->required();
    eval_cmd->add_option("--split", split_tag, "split tag to evaluate (default test)");

    CLI::App* cmp_cmd = app.add_subcommand("compare", "GRU-AE vs matched-template baseline");
    add_common(cmp_cmd);
    cmp_cmd->add_option("--model", model_path, "model container")->required();
    cmp_cmd->add_option("--shifted-dataset", shifted_dataset_path, "shifted test dataset CSV")
        ->required();
    cmp_cmd->add_option("--calibration-dataset", calibration_dataset_path,
                        "dataset whose train split calibrates the baseline")
        ->required();

    CLI::App* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    std::optional<std::uint64_t> gc_seed;
    gc_cmd->add_option("--seed", gc_seed, "seed");
    gc_cmd->add_option("--tolerance", tolerance, "max relative error");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (app.get_subcommands().empty()) {
        std::cout << app.help();
        return 0;
    }

    try {
        if (sim_cmd->parsed()) return cmd_simulate(common);
        if (build_cmd->parsed()) return cmd_build_dataset(common, n_per_class, shifted, use_true_snr);
        if (train_cmd->parsed()) {
            json cfg_json = load_config(common);
            TrainConfig resolved = cfg_json.contains("train")
                                       ? train_config_from_json(cfg_json.at("train"))
                                       : TrainConfig{};
            // flag > config file > default
            if (lr_opt->count()) resolved.lr = train.lr;
            if (lrd_opt->count()) resolved.lr_decay = train.lr_decay;
            if (bs_opt->count()) resolved.batch_size = train.batch_size;
            if (ep_opt->count()) resolved.epochs = train.epochs;
            if (pat_opt->count()) resolved.patience = train.patience;
            if (common.seed_flag.has_value()) resolved.seed = *common.seed_flag;
            return cmd_train(common, dataset_path, resolved);
        }
        if (eval_cmd->parsed()) return cmd_evaluate(common, model_path, dataset_path, split_tag);
        if (cmp_cmd->parsed())
            return cmd_compare(common, model_path, shifted_dataset_path, calibration_dataset_path);
        if (gc_cmd->parsed()) return cmd_gradcheck(gc_seed.value_or(1), tolerance);
    } catch (const std::exception& e) {
        const char* tag = sim_cmd->parsed()     ? "simulate"
                          : build_cmd->parsed() ? "build-dataset"
                          : train_cmd->parsed() ? "train"
                          : eval_cmd->parsed()  ? "evaluate"
                          : cmp_cmd->parsed()   ? "compare"
                                                : "gradcheck";
        std::cerr << "otdrnet " << tag << ": " << e.what() << "\n";
        return 1;
    }
    return 0;
}
