#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "scsd/trainer.hpp"

namespace scsd::experiment {

struct GridPoint {
    std::string label;
    TrainConfig config;
};

/// The seven ablation rows: three loss removals, the full model and three
/// structural removals.
std::vector<GridPoint> ablation_grid(const TrainConfig& base);

/// One point per value of `axis` (view_missing, label_missing or train_ratio).
std::vector<GridPoint> sweep_grid(const TrainConfig& base, const std::string& axis,
                                  const std::vector<double>& values);

/// Protocol preparation, training and test evaluation for one config.
train::TrainResult run_single(const TrainConfig& cfg, const data::MultiViewDataset& full,
                              const train::EpochCallback& on_epoch = {});

struct SuiteRow {
    std::string label;
    std::vector<std::uint64_t> seeds;
    std::vector<metrics::MetricReport> runs;
    std::vector<std::string> failures;
    metrics::MetricReport mean;
    /// Sample standard deviation; zero with fewer than two runs.
    metrics::MetricReport std;
};

using RunCallback = std::function<void(const GridPoint&, std::uint64_t seed,
                                       const train::TrainResult* result, const std::string& error)>;

/// Runs every (grid point, seed) pair. A failing run is recorded in its
/// row's failures and the suite continues.
std::vector<SuiteRow> run_experiment_suite(const std::vector<GridPoint>& grid,
                                           const data::MultiViewDataset& full,
                                           const std::vector<std::uint64_t>& seeds,
                                           const RunCallback& on_run = {});

void summarize(SuiteRow& row);

/// label,runs,failures,<metric>_mean,<metric>_std,...
void write_suite_csv(const std::filesystem::path& path, const std::vector<SuiteRow>& rows);

/// AP of uniform random scores against the given labels.
double random_baseline_ap(const BinaryMatrix& labels, std::uint64_t seed);

}  // namespace scsd::experiment
