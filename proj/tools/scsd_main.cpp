#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "scsd/errors.hpp"
#include "scsd/experiment.hpp"
#include "scsd/synthetic.hpp"

namespace {

using namespace scsd;

template <typename T>
std::vector<T> parse_list(const std::string& text) {
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::istringstream is(item);
        T v{};
        if (!(is >> v) || !is.eof()) throw ParameterError("bad list element '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw ParameterError("empty list '" + text + "'");
    return out;
}

TrainConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
    TrainConfig cfg = path.empty() ? TrainConfig{} : load_config(path);
    for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ParameterError("--set expects key=value, got " + kv);
        set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

void print_epoch(const train::EpochRecord& e) {
    std::fprintf(stderr, "epoch %3zu  total %.5f  l_c %.5f  l_dis %.5f  l_rec %.5f  l_vq %.5f  util %.3f  val_ap %.4f\n",
                 e.epoch, e.total, e.l_c, e.l_dis, e.l_rec, e.l_vq, e.utilization, e.val_ap);
}

void print_metrics(const metrics::MetricReport& r) {
    for (const auto& [name, value] : r.items()) std::printf("%-14s %.4f\n", name.c_str(), value);
}

void print_suite(const std::vector<experiment::SuiteRow>& rows) {
    std::printf("%-22s %5s %16s %16s %16s\n", "row", "runs", "AP", "1-RL", "AUC");
    for (const auto& row : rows) {
        std::printf("%-22s %5zu %8.4f+-%.4f %8.4f+-%.4f %8.4f+-%.4f\n", row.label.c_str(),
                    row.runs.size(), row.mean.ap, row.std.ap, row.mean.one_minus_rl,
                    row.std.one_minus_rl, row.mean.auc, row.std.auc);
        for (const auto& f : row.failures) std::printf("  failed: %s\n", f.c_str());
    }
}

void run_suite(const std::vector<experiment::GridPoint>& grid, const std::string& data_dir,
               const std::vector<std::uint64_t>& seeds, const std::string& out_dir) {
    const data::MultiViewDataset full = data::load_dataset(data_dir);
    const auto rows = experiment::run_experiment_suite(
        grid, full, seeds,
        [](const experiment::GridPoint& p, std::uint64_t seed, const train::TrainResult* r,
           const std::string& error) {
            if (r) {
                std::fprintf(stderr, "%s seed %llu: AP %.4f (%zu epochs, %.1f s)\n", p.label.c_str(),
                             static_cast<unsigned long long>(seed), r->report.test->ap,
                             r->report.epochs.size(), r->report.seconds);
            } else {
                std::fprintf(stderr, "%s seed %llu failed: %s\n", p.label.c_str(),
                             static_cast<unsigned long long>(seed), error.c_str());
            }
        });
    std::filesystem::create_directories(out_dir);
    experiment::write_suite_csv(std::filesystem::path(out_dir) / "suite.csv", rows);
    print_suite(rows);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SCSD: incomplete multi-view multi-label classification"};
    app.require_subcommand(1);

    // data
    auto* data_cmd = app.add_subcommand("data", "Create or transform datasets");
    data_cmd->require_subcommand(1);

    data::SyntheticSpec synth;
    std::string synth_out;
    std::string synth_dims = "40,60";
    std::string synth_noise = "1.0,1.5";
    auto* synth_cmd = data_cmd->add_subcommand("synth", "Write a synthetic correlated dataset");
    synth_cmd->add_option("--out", synth_out, "Output directory")->required();
    synth_cmd->add_option("--n", synth.n, "Sample count")->capture_default_str();
    synth_cmd->add_option("--c", synth.c, "Label count")->capture_default_str();
    synth_cmd->add_option("--dims", synth_dims, "Comma-separated view widths")->capture_default_str();
    synth_cmd->add_option("--noise", synth_noise, "Comma-separated per-view noise std")->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed, "Random seed")->capture_default_str();

    std::string sim_in;
    std::string sim_out;
    data::MissingnessSpec sim;
    auto* sim_cmd = data_cmd->add_subcommand("simulate", "Apply view and label missingness");
    sim_cmd->add_option("--in,--data", sim_in, "Fully observed dataset directory")->required();
    sim_cmd->add_option("--out", sim_out, "Output directory")->required();
    sim_cmd->add_option("--view-missing", sim.view_missing_rate, "View missing rate")->capture_default_str();
    sim_cmd->add_option("--label-missing", sim.label_missing_rate, "Label missing rate")->capture_default_str();
    sim_cmd->add_option("--seed", sim.seed, "Random seed")->capture_default_str();

    // train
    std::string cfg_path;
    std::vector<std::string> overrides;
    std::string data_dir;
    std::string out_dir;
    auto* train_cmd = app.add_subcommand("train", "Train under the split protocol and evaluate");
    train_cmd->add_option("--config", cfg_path, "key = value configuration file");
    train_cmd->add_option("--set", overrides, "Override one key=value (repeatable)");
    train_cmd->add_option("--data", data_dir, "Dataset directory")->required();
    train_cmd->add_option("--out", out_dir, "Run directory")->required();

    // eval
    std::string ckpt_path;
    std::string report_path;
    std::string weight_mode;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    eval_cmd->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
    eval_cmd->add_option("--data", data_dir, "Dataset directory")->required();
    eval_cmd->add_option("--out", report_path, "report.json path")->required();
    eval_cmd->add_option("--weight-mode", weight_mode, "frozen_ema or per_batch (default: from checkpoint)");

    // ablate
    std::string variant;
    std::string seeds_text = "0";
    auto* ablate_cmd = app.add_subcommand("ablate", "Run one ablation variant or all seven rows");
    ablate_cmd->add_option("--variant", variant, "full, no_dis, no_dis_kl, no_rec, no_vq, no_cross_view_rec, avg_fusion or all")->required();
    ablate_cmd->add_option("--config", cfg_path, "key = value configuration file");
    ablate_cmd->add_option("--set", overrides, "Override one key=value (repeatable)");
    ablate_cmd->add_option("--data", data_dir, "Fully observed dataset directory")->required();
    ablate_cmd->add_option("--out", out_dir, "Output directory")->required();
    ablate_cmd->add_option("--seeds", seeds_text, "Comma-separated seeds")->capture_default_str();

    // sweep
    std::string axis;
    std::string values_text;
    auto* sweep_cmd = app.add_subcommand("sweep", "Sweep one protocol axis");
    sweep_cmd->add_option("--axis", axis, "view_missing, label_missing or train_ratio")->required();
    sweep_cmd->add_option("--values", values_text, "Comma-separated values")->required();
    sweep_cmd->add_option("--config", cfg_path, "key = value configuration file");
    sweep_cmd->add_option("--set", overrides, "Override one key=value (repeatable)");
    sweep_cmd->add_option("--data", data_dir, "Fully observed dataset directory")->required();
    sweep_cmd->add_option("--out", out_dir, "Output directory")->required();
    sweep_cmd->add_option("--seeds", seeds_text, "Comma-separated seeds")->capture_default_str();

    // inspect
    auto* inspect_cmd = app.add_subcommand("inspect", "Inspect a trained model");
    inspect_cmd->require_subcommand(1);
    auto* corr_cmd = inspect_cmd->add_subcommand("correlations", "Write correlation matrices as CSV");
    corr_cmd->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
    corr_cmd->add_option("--out", out_dir, "Output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth_cmd->parsed()) {
            synth.view_dims = parse_list<std::size_t>(synth_dims);
            synth.view_noise = parse_list<double>(synth_noise);
            const auto ds = data::make_synthetic(synth);
            data::save_dataset(ds, synth_out);
            std::printf("wrote %s: n=%zu m=%zu c=%zu\n", synth_out.c_str(), ds.n(), ds.m(), ds.c());
        } else if (sim_cmd->parsed()) {
            auto ds = data::load_dataset(sim_in);
            if (sim.view_missing_rate > 0.0) ds = data::simulate_missing_views(ds, sim);
            if (sim.label_missing_rate > 0.0) ds = data::simulate_missing_labels(ds, sim);
            data::save_dataset(ds, sim_out);
            std::printf("wrote %s\n", sim_out.c_str());
        } else if (train_cmd->parsed()) {
            const TrainConfig cfg = resolve_config(cfg_path, overrides);
            const data::MultiViewDataset full = data::load_dataset(data_dir);
            const train::ProtocolData split = train::prepare_protocol(full, cfg);
            train::TrainResult result =
                train::train(cfg, split.train, split.has_val ? &split.val : nullptr, print_epoch);
            result.report.test = train::evaluate(result.trained, split.test,
                                                 train::parse_weight_mode(cfg.weight_mode));
            train::write_run_directory(out_dir, result);
            data::save_dataset(split.test, std::filesystem::path(out_dir) / "test_data");
            print_metrics(*result.report.test);
        } else if (eval_cmd->parsed()) {
            const TrainedModel trained = load_checkpoint(ckpt_path);
            const auto mode = train::parse_weight_mode(weight_mode.empty() ? trained.config.weight_mode
                                                                           : weight_mode);
            const auto ds = data::load_dataset(data_dir);
            const auto report = train::evaluate(trained, ds, mode);
            train::ReportFields fields = train::metric_fields(report);
            fields.emplace_back("weight_mode", train::to_string(mode));
            fields.emplace_back("checkpoint", ckpt_path);
            fields.emplace_back("data", data_dir);
            train::write_report_json(report_path, fields);
            print_metrics(report);
        } else if (ablate_cmd->parsed()) {
            const TrainConfig cfg = resolve_config(cfg_path, overrides);
            auto grid = experiment::ablation_grid(cfg);
            if (variant != "all") {
                std::erase_if(grid, [&](const auto& p) { return p.label != variant; });
                if (grid.empty()) throw ParameterError("unknown variant '" + variant + "'");
            }
            run_suite(grid, data_dir, parse_list<std::uint64_t>(seeds_text), out_dir);
        } else if (sweep_cmd->parsed()) {
            const TrainConfig cfg = resolve_config(cfg_path, overrides);
            const auto grid = experiment::sweep_grid(cfg, axis, parse_list<double>(values_text));
            run_suite(grid, data_dir, parse_list<std::uint64_t>(seeds_text), out_dir);
        } else if (corr_cmd->parsed()) {
            const TrainedModel trained = load_checkpoint(ckpt_path);
            train::write_correlations(out_dir, trained);
            std::printf("wrote %s\n", out_dir.c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
