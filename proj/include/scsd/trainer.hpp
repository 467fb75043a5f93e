#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "scsd/checkpoint.hpp"
#include "scsd/config.hpp"
#include "scsd/dataset.hpp"
#include "scsd/fusion.hpp"
#include "scsd/metrics.hpp"
#include "scsd/objectives.hpp"

namespace scsd::train {

enum class WeightMode { kFrozenEma, kPerBatch };

WeightMode parse_weight_mode(const std::string& name);
std::string to_string(WeightMode mode);

nn::ModelConfig model_config(const TrainConfig& cfg, const data::MultiViewDataset& ds);

/// Global correlation of the training labels, symmetrized and row-normalized.
Matrix global_correlation(const TrainConfig& cfg, const data::MultiViewDataset& train);

/// Everything one batch produces on the way to the objective.
struct BatchOutput {
    nn::ForwardState state;
    std::vector<Real> quality;
    std::vector<bool> present;
    /// Normalized prediction correlation per view; zero for absent views.
    std::vector<Matrix> view_norm;
    Matrix weights;
    diff::Tensor fused;
    loss::LossReport losses;
};

/// Forward pass, fusion and the combined objective for one batch. Fusion
/// weights are computed from stop-gradient copies of the view predictions.
BatchOutput batch_objective(diff::Tape& tape, nn::Model& model, const data::Batch& batch,
                            const TrainConfig& cfg, const Matrix& s_global_norm,
                            bool count_usage = true);

struct EpochRecord {
    std::size_t epoch = 0;
    double l_c = 0.0;
    double l_dis = 0.0;
    double l_rec = 0.0;
    double l_vq = 0.0;
    double total = 0.0;
    /// Share of codebook rows selected on the validation pass (the training
    /// batches when there is no validation split); NaN without VQ.
    double utilization = 0.0;
    std::vector<double> q_ema;
    /// Validation AP; NaN when no validation split is used.
    double val_ap = 0.0;
};

struct ExperimentReport {
    TrainConfig config;
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    bool stopped_early = false;
    double seconds = 0.0;
    std::optional<metrics::MetricReport> test;
};

struct TrainResult {
    TrainedModel trained;
    ExperimentReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains from scratch. Early stopping watches AP on `val` when given and
/// cfg.patience > 0; the final parameters are those of the last epoch run.
TrainResult train(const TrainConfig& cfg, const data::MultiViewDataset& train_ds,
                  const data::MultiViewDataset* val = nullptr,
                  const EpochCallback& on_epoch = {});

struct Prediction {
    Matrix fused;
    /// n x c per view, zero on rows where the view is missing.
    std::vector<Matrix> views;
    Matrix weights;
};

/// Gradient-free inference. Throws LoadError when the dataset does not match
/// the model's view widths or label count.
Prediction predict(const TrainedModel& trained, const data::MultiViewDataset& ds,
                   WeightMode mode, std::size_t batch_size = 0);

/// Metrics of the fused predictions against Y * G.
metrics::MetricReport evaluate(const TrainedModel& trained, const data::MultiViewDataset& ds,
                               WeightMode mode);

/// Protocol splits derived from one dataset and seed.
struct ProtocolData {
    data::MultiViewDataset train;
    data::MultiViewDataset val;
    data::MultiViewDataset test;
    bool has_val = false;
};

/// View missingness on the whole set (when it is fully observed), a
/// train/test split, label missingness on the training part (when fully
/// observed) and an optional validation carve-out of the training part.
ProtocolData prepare_protocol(const data::MultiViewDataset& full, const TrainConfig& cfg);

/// Writes checkpoint.bin, losses.csv, utilization.csv, q_history.csv,
/// config.txt and report.json into `dir`.
void write_run_directory(const std::filesystem::path& dir, const TrainResult& result);

void write_losses_csv(const std::filesystem::path& path, const ExperimentReport& report);
void write_utilization_csv(const std::filesystem::path& path, const ExperimentReport& report);
void write_q_history_csv(const std::filesystem::path& path, const ExperimentReport& report);

using ReportValue = std::variant<bool, std::int64_t, double, std::string>;
using ReportFields = std::vector<std::pair<std::string, ReportValue>>;

/// Flat key/value JSON object, keys in the given order.
void write_report_json(const std::filesystem::path& path, const ReportFields& fields);
ReportFields metric_fields(const metrics::MetricReport& r);
ReportFields run_fields(const ExperimentReport& report);

/// Writes s_global.csv, s_view_<v>.csv and q_history.csv into `dir`.
void write_correlations(const std::filesystem::path& dir, const TrainedModel& trained);

std::string format_real(double x);

}  // namespace scsd::train
