#include "scsd/experiment.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "scsd/errors.hpp"

namespace scsd::experiment {

namespace {

using metrics::MetricReport;

double* field(MetricReport& r, std::size_t k) {
    double* fields[] = {&r.ap, &r.one_minus_hl, &r.one_minus_rl,
                        &r.auc, &r.one_minus_oe, &r.one_minus_cov};
    return fields[k];
}

constexpr std::size_t kMetricCount = 6;

}  // namespace

std::vector<GridPoint> ablation_grid(const TrainConfig& base) {
    const char* rows[] = {"no_dis", "no_dis_kl", "no_rec", "full",
                          "no_vq", "no_cross_view_rec", "avg_fusion"};
    std::vector<GridPoint> grid;
    for (const char* name : rows) {
        GridPoint p{name, base};
        p.config.ablations = Ablations{};
        apply_variant(p.config.ablations, name);
        grid.push_back(std::move(p));
    }
    return grid;
}

std::vector<GridPoint> sweep_grid(const TrainConfig& base, const std::string& axis,
                                  const std::vector<double>& values) {
    std::vector<GridPoint> grid;
    for (double v : values) {
        GridPoint p{axis + "=" + train::format_real(v), base};
        if (axis == "view_missing") p.config.view_missing = v;
        else if (axis == "label_missing") p.config.label_missing = v;
        else if (axis == "train_ratio") p.config.train_ratio = v;
        else throw ParameterError("unknown sweep axis '" + axis + "'");
        p.config.validate();
        grid.push_back(std::move(p));
    }
    return grid;
}

train::TrainResult run_single(const TrainConfig& cfg, const data::MultiViewDataset& full,
                              const train::EpochCallback& on_epoch) {
    const train::ProtocolData data = train::prepare_protocol(full, cfg);
    train::TrainResult result =
        train::train(cfg, data.train, data.has_val ? &data.val : nullptr, on_epoch);
    result.report.test = train::evaluate(result.trained, data.test,
                                         train::parse_weight_mode(cfg.weight_mode));
    return result;
}

void summarize(SuiteRow& row) {
    row.mean = MetricReport{};
    row.std = MetricReport{};
    const auto n = static_cast<double>(row.runs.size());
    if (row.runs.empty()) return;
    for (std::size_t k = 0; k < kMetricCount; ++k) {
        double sum = 0.0;
        for (MetricReport& r : row.runs) sum += *field(r, k);
        const double mean = sum / n;
        double sq = 0.0;
        for (MetricReport& r : row.runs) sq += (*field(r, k) - mean) * (*field(r, k) - mean);
        *field(row.mean, k) = mean;
        *field(row.std, k) = row.runs.size() > 1 ? std::sqrt(sq / (n - 1.0)) : 0.0;
    }
    row.mean.n_eval = row.runs.front().n_eval;
}

std::vector<SuiteRow> run_experiment_suite(const std::vector<GridPoint>& grid,
                                           const data::MultiViewDataset& full,
                                           const std::vector<std::uint64_t>& seeds,
                                           const RunCallback& on_run) {
    std::vector<SuiteRow> rows;
    for (const GridPoint& point : grid) {
        SuiteRow row;
        row.label = point.label;
        for (std::uint64_t seed : seeds) {
            TrainConfig cfg = point.config;
            cfg.seed = seed;
            try {
                const train::TrainResult result = run_single(cfg, full);
                row.seeds.push_back(seed);
                row.runs.push_back(*result.report.test);
                if (on_run) on_run(point, seed, &result, "");
            } catch (const std::exception& e) {
                row.failures.push_back("seed " + std::to_string(seed) + ": " + e.what());
                if (on_run) on_run(point, seed, nullptr, e.what());
            }
        }
        summarize(row);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_suite_csv(const std::filesystem::path& path, const std::vector<SuiteRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw LoadError("cannot open " + path.string() + " for writing");
    out << "label,runs,failures";
    for (const auto& [name, value] : MetricReport{}.items()) out << ',' << name << "_mean," << name << "_std";
    out << '\n';
    for (const SuiteRow& row : rows) {
        out << row.label << ',' << row.runs.size() << ',' << row.failures.size();
        const auto means = row.mean.items();
        const auto stds = row.std.items();
        for (std::size_t k = 0; k < means.size(); ++k) {
            out << ',' << train::format_real(means[k].second) << ','
                << train::format_real(stds[k].second);
        }
        out << '\n';
    }
}

double random_baseline_ap(const BinaryMatrix& labels, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    Matrix scores(labels.rows(), labels.cols());
    for (Eigen::Index i = 0; i < scores.size(); ++i) scores.data()[i] = static_cast<Real>(dist(rng));
    return metrics::average_precision(scores, labels);
}

}  // namespace scsd::experiment
