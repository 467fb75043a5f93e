#include "scsd/trainer.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "scsd/errors.hpp"
#include "scsd/optimizer.hpp"

namespace scsd::train {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t epoch_shuffle_seed(std::uint64_t seed, std::size_t epoch) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), 0x5eedu};
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

// Forward pass and fusion; `frozen_quality` replaces the batch quality
// scores when set.
BatchOutput forward_and_fuse(diff::Tape& tape, nn::Model& model, const data::Batch& batch,
                             const TrainConfig& cfg, const Matrix& s_global_norm,
                             const nn::ForwardOptions& options,
                             const std::vector<Real>* frozen_quality) {
    BatchOutput out;
    out.state = nn::forward_pass(tape, batch, model, options);
    const std::size_t m = model.num_views();
    const auto c = static_cast<Eigen::Index>(model.config().num_labels);
    out.present.assign(m, false);
    out.view_norm.assign(m, Matrix::Zero(c, c));
    std::vector<diff::Tensor> scattered(m);
    for (std::size_t v = 0; v < m; ++v) {
        const nn::ViewForward& vf = out.state.views[v];
        if (vf.rows.empty()) continue;
        out.present[v] = true;
        const Matrix frozen = tape.stop_gradient(vf.predictions).to_matrix();
        out.view_norm[v] =
            fusion::normalize_correlation(fusion::batch_prediction_correlation(frozen));
        scattered[v] = tape.scatter_rows(vf.predictions, vf.rows, batch.size());
    }
    out.quality = fusion::quality_scores(out.view_norm, s_global_norm);
    if (cfg.ablations.avg_fusion) {
        out.weights = fusion::average_weights(batch.view_mask);
    } else {
        const std::vector<Real>& q = frozen_quality ? *frozen_quality : out.quality;
        out.weights = fusion::view_weights(q, batch.view_mask, static_cast<Real>(cfg.tau));
    }
    out.fused = fusion::fuse(tape, scattered, out.weights);
    return out;
}

void require_compatible(const TrainedModel& trained, const data::MultiViewDataset& ds) {
    const nn::ModelConfig& mc = trained.model.config();
    if (ds.m() != mc.view_dims.size()) {
        throw LoadError("dataset has " + std::to_string(ds.m()) + " views, checkpoint expects " +
                        std::to_string(mc.view_dims.size()));
    }
    for (std::size_t v = 0; v < ds.m(); ++v) {
        if (ds.view_dim(v) != mc.view_dims[v]) {
            throw LoadError("view " + std::to_string(v) + " has width " +
                            std::to_string(ds.view_dim(v)) + ", checkpoint expects " +
                            std::to_string(mc.view_dims[v]));
        }
    }
    if (ds.c() != mc.num_labels) {
        throw LoadError("dataset has " + std::to_string(ds.c()) + " labels, checkpoint expects " +
                        std::to_string(mc.num_labels));
    }
}

Prediction predict_with(const TrainedModel& trained, nn::Model& model,
                        const data::MultiViewDataset& ds, WeightMode mode,
                        std::size_t batch_size, bool count_usage);

bool all_ones(const BinaryMatrix& m) { return (m.array() != 0).all(); }

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw LoadError("cannot open " + path.string() + " for writing");
    return out;
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
    std::ofstream out = open_out(path);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            out << (j ? "," : "") << format_real(static_cast<double>(m(i, j)));
        }
        out << '\n';
    }
}

}  // namespace

WeightMode parse_weight_mode(const std::string& name) {
    if (name == "frozen_ema") return WeightMode::kFrozenEma;
    if (name == "per_batch") return WeightMode::kPerBatch;
    throw ParameterError("unknown weight mode '" + name + "'");
}

std::string to_string(WeightMode mode) {
    return mode == WeightMode::kFrozenEma ? "frozen_ema" : "per_batch";
}

std::string format_real(double x) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

nn::ModelConfig model_config(const TrainConfig& cfg, const data::MultiViewDataset& ds) {
    nn::ModelConfig mc;
    for (std::size_t v = 0; v < ds.m(); ++v) mc.view_dims.push_back(ds.view_dim(v));
    mc.num_labels = ds.c();
    mc.d_e = cfg.d_e;
    mc.groups = cfg.g;
    mc.codebook_size = cfg.k;
    mc.hidden = cfg.hidden;
    mc.use_vq = !cfg.ablations.no_vq;
    mc.seed = cfg.seed;
    return mc;
}

Matrix global_correlation(const TrainConfig& cfg, const data::MultiViewDataset& train) {
    const auto source = cfg.correlation == "observed_pairs"
                            ? fusion::CorrelationSource::kObservedPairs
                            : fusion::CorrelationSource::kMaskedLabels;
    return fusion::normalize_correlation(
        fusion::global_label_correlation(train.labels, train.label_mask, source));
}

BatchOutput batch_objective(diff::Tape& tape, nn::Model& model, const data::Batch& batch,
                            const TrainConfig& cfg, const Matrix& s_global_norm,
                            bool count_usage) {
    const Ablations& ab = cfg.ablations;
    nn::ForwardOptions options;
    options.cross_view = !ab.no_cross_view_rec;
    options.reconstruct = !ab.no_rec;
    options.count_usage = count_usage;
    BatchOutput out = forward_and_fuse(tape, model, batch, cfg, s_global_norm, options, nullptr);

    loss::LossParts parts;
    parts.l_c = loss::masked_bce(tape, out.fused, batch.labels, batch.label_mask);
    if (!ab.no_dis) {
        parts.l_dis = loss::distillation_loss(tape, out.fused, out.state.views, batch,
                                              {static_cast<Real>(cfg.lambda), !ab.no_dis_kl});
    }
    if (!ab.no_rec) {
        parts.l_rec = loss::reconstruction_loss(tape, out.state.reconstructions, batch);
    }
    if (!ab.no_vq) {
        parts.l_vq = loss::vq_batch_loss(tape, out.state.views, model.config().groups);
    }
    out.losses = loss::total_loss(tape, parts, static_cast<Real>(cfg.alpha));
    return out;
}

TrainResult train(const TrainConfig& cfg, const data::MultiViewDataset& train_ds,
                  const data::MultiViewDataset* val, const EpochCallback& on_epoch) {
    cfg.validate();
    train_ds.validate();
    if (val) {
        val->validate();
        if (val->m() != train_ds.m() || val->c() != train_ds.c()) {
            throw DimensionError("validation set does not match the training set");
        }
    }
    const auto start = std::chrono::steady_clock::now();
    const WeightMode mode = parse_weight_mode(cfg.weight_mode);

    TrainResult result;
    result.report.config = cfg;
    TrainedModel& tm = result.trained;
    tm.config = cfg;
    tm.model = nn::Model(model_config(cfg, train_ds));
    tm.s_global_norm = global_correlation(cfg, train_ds);
    const std::size_t m = train_ds.m();
    const auto c = static_cast<Eigen::Index>(train_ds.c());
    tm.view_norm.assign(m, Matrix::Zero(c, c));

    std::vector<diff::Tensor*> params;
    for (auto& entry : tm.model.named_parameters()) params.push_back(entry.second);
    optim::AdamWOptions opt_options;
    opt_options.lr = static_cast<Real>(cfg.lr);
    opt_options.weight_decay = static_cast<Real>(cfg.weight_decay);
    optim::AdamW optimizer(params, opt_options);
    fusion::QualityAverage q_average(static_cast<Real>(cfg.q_decay));

    const bool use_vq = !cfg.ablations.no_vq;
    const bool watch_val = val != nullptr && cfg.patience > 0;
    double best_ap = -std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (use_vq) tm.model.codebook().reset_usage();
        const auto order =
            data::batch_indices(train_ds.n(), cfg.batch_size, epoch_shuffle_seed(cfg.seed, epoch));
        EpochRecord rec;
        rec.epoch = epoch;
        for (std::size_t b = 0; b < order.size(); ++b) {
            const data::Batch batch = data::make_batch(train_ds, order[b]);
            diff::Tape tape;
            BatchOutput out;
            try {
                out = batch_objective(tape, tm.model, batch, cfg, tm.s_global_norm);
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(b) + ": " + e.what());
            }
            tape.backward(out.losses.total_tensor);
            optimizer.step();
            optimizer.zero_grad();
            q_average.update(out.quality, out.present);
            for (std::size_t v = 0; v < m; ++v) {
                if (out.present[v]) tm.view_norm[v] = out.view_norm[v];
            }
            rec.l_c += out.losses.l_c;
            rec.l_dis += out.losses.l_dis;
            rec.l_rec += out.losses.l_rec;
            rec.l_vq += out.losses.l_vq;
            rec.total += out.losses.total;
        }
        const auto batches = static_cast<double>(order.size());
        rec.l_c /= batches;
        rec.l_dis /= batches;
        rec.l_rec /= batches;
        rec.l_vq /= batches;
        rec.total /= batches;
        tm.q_ema = q_average.values();
        rec.q_ema.assign(tm.q_ema.begin(), tm.q_ema.end());
        tm.q_history.conservativeResize(static_cast<Eigen::Index>(epoch),
                                        static_cast<Eigen::Index>(m));
        for (std::size_t v = 0; v < m; ++v) {
            tm.q_history(static_cast<Eigen::Index>(epoch - 1), static_cast<Eigen::Index>(v)) =
                v < tm.q_ema.size() ? tm.q_ema[v] : Real(0);
        }
        rec.val_ap = kNaN;
        if (val) {
            // Utilization is measured on the validation forward pass when one exists.
            if (use_vq) tm.model.codebook().reset_usage();
            const Prediction p = predict_with(tm, tm.model, *val, mode, 0, true);
            const BinaryMatrix labels = (val->labels.array() * val->label_mask.array()).matrix();
            rec.val_ap = metrics::average_precision(p.fused, labels);
        }
        rec.utilization = use_vq ? tm.model.codebook().utilization() : kNaN;
        result.report.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (watch_val) {
            if (rec.val_ap > best_ap) {
                best_ap = rec.val_ap;
                result.report.best_epoch = epoch;
                since_best = 0;
            } else if (++since_best >= cfg.patience) {
                result.report.stopped_early = true;
                break;
            }
        } else {
            result.report.best_epoch = epoch;
        }
    }
    result.report.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

Prediction predict(const TrainedModel& trained, const data::MultiViewDataset& ds,
                   WeightMode mode, std::size_t batch_size) {
    nn::Model model = trained.model;
    return predict_with(trained, model, ds, mode, batch_size, false);
}

namespace {

Prediction predict_with(const TrainedModel& trained, nn::Model& model,
                        const data::MultiViewDataset& ds, WeightMode mode,
                        std::size_t batch_size, bool count_usage) {
    ds.validate();
    require_compatible(trained, ds);
    const TrainConfig& cfg = trained.config;
    if (model.config().use_vq && !model.codebook().initialized()) {
        throw StateError("model codebook was never initialized");
    }
    if (mode == WeightMode::kFrozenEma && !cfg.ablations.avg_fusion &&
        trained.q_ema.size() != ds.m()) {
        throw StateError("checkpoint holds no inference-time view quality");
    }
    const std::size_t n = ds.n();
    const std::size_t m = ds.m();
    const auto c = static_cast<Eigen::Index>(ds.c());
    Prediction p;
    p.fused = Matrix::Zero(static_cast<Eigen::Index>(n), c);
    p.views.assign(m, Matrix::Zero(static_cast<Eigen::Index>(n), c));
    p.weights = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));

    nn::ForwardOptions options;
    options.reconstruct = false;
    options.count_usage = count_usage;
    const std::vector<Real>* frozen = mode == WeightMode::kFrozenEma ? &trained.q_ema : nullptr;
    const std::size_t bs = batch_size ? batch_size : cfg.batch_size;
    for (const IndexList& rows : data::batch_indices(n, bs, std::nullopt)) {
        const data::Batch batch = data::make_batch(ds, rows);
        diff::Tape tape;
        tape.set_grad_enabled(false);
        const BatchOutput out =
            forward_and_fuse(tape, model, batch, cfg, trained.s_global_norm, options, frozen);
        const Matrix fused = out.fused.to_matrix();
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto i = static_cast<Eigen::Index>(rows[r]);
            p.fused.row(i) = fused.row(static_cast<Eigen::Index>(r));
            p.weights.row(i) = out.weights.row(static_cast<Eigen::Index>(r));
        }
        for (std::size_t v = 0; v < m; ++v) {
            const nn::ViewForward& vf = out.state.views[v];
            if (vf.rows.empty()) continue;
            const Matrix pv = vf.predictions.to_matrix();
            for (std::size_t r = 0; r < vf.rows.size(); ++r) {
                p.views[v].row(static_cast<Eigen::Index>(rows[vf.rows[r]])) =
                    pv.row(static_cast<Eigen::Index>(r));
            }
        }
    }
    return p;
}

}  // namespace

metrics::MetricReport evaluate(const TrainedModel& trained, const data::MultiViewDataset& ds,
                               WeightMode mode) {
    const Prediction p = predict(trained, ds, mode);
    const BinaryMatrix labels = (ds.labels.array() * ds.label_mask.array()).matrix();
    return metrics::evaluate_all(p.fused, labels);
}

ProtocolData prepare_protocol(const data::MultiViewDataset& full, const TrainConfig& cfg) {
    full.validate();
    data::MultiViewDataset ds = full;
    if (cfg.view_missing > 0.0 && all_ones(ds.view_mask)) {
        ds = data::simulate_missing_views(ds, {cfg.view_missing, 0.0, cfg.seed});
    }
    auto [train_part, test_part] = data::split(ds, cfg.train_ratio, cfg.seed);
    if (cfg.label_missing > 0.0 && all_ones(train_part.label_mask)) {
        train_part = data::simulate_missing_labels(train_part, {0.0, cfg.label_missing, cfg.seed});
    }
    ProtocolData out;
    out.test = std::move(test_part);
    if (cfg.val_fraction > 0.0 && cfg.patience > 0) {
        auto [fit, held] = data::split(train_part, 1.0 - cfg.val_fraction, cfg.seed + 1);
        out.train = std::move(fit);
        out.val = std::move(held);
        out.has_val = true;
    } else {
        out.train = std::move(train_part);
    }
    return out;
}

void write_losses_csv(const std::filesystem::path& path, const ExperimentReport& report) {
    std::ofstream out = open_out(path);
    out << "epoch,l_c,l_dis,l_rec,l_vq,total\n";
    for (const EpochRecord& e : report.epochs) {
        out << e.epoch << ',' << format_real(e.l_c) << ',' << format_real(e.l_dis) << ','
            << format_real(e.l_rec) << ',' << format_real(e.l_vq) << ',' << format_real(e.total)
            << '\n';
    }
}

void write_utilization_csv(const std::filesystem::path& path, const ExperimentReport& report) {
    std::ofstream out = open_out(path);
    out << "epoch,utilization\n";
    for (const EpochRecord& e : report.epochs) {
        out << e.epoch << ',' << format_real(e.utilization) << '\n';
    }
}

void write_q_history_csv(const std::filesystem::path& path, const ExperimentReport& report) {
    std::ofstream out = open_out(path);
    out << "epoch";
    const std::size_t m = report.epochs.empty() ? 0 : report.epochs.front().q_ema.size();
    for (std::size_t v = 0; v < m; ++v) out << ",q_" << v;
    out << '\n';
    for (const EpochRecord& e : report.epochs) {
        out << e.epoch;
        for (double q : e.q_ema) out << ',' << format_real(q);
        out << '\n';
    }
}

void write_report_json(const std::filesystem::path& path, const ReportFields& fields) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [key, value] : fields) {
        std::visit(
            [&](const auto& v) {
                using T = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<T, double>) {
                    if (std::isfinite(v)) j[key] = v;
                    else j[key] = nullptr;
                } else {
                    j[key] = v;
                }
            },
            value);
    }
    std::ofstream out = open_out(path);
    out << j.dump(2) << '\n';
}

ReportFields metric_fields(const metrics::MetricReport& r) {
    ReportFields f;
    for (const auto& [name, value] : r.items()) f.emplace_back(name, value);
    f.emplace_back("n_eval", static_cast<std::int64_t>(r.n_eval));
    return f;
}

ReportFields run_fields(const ExperimentReport& report) {
    const TrainConfig& cfg = report.config;
    ReportFields f;
    f.emplace_back("format", std::string("scsd-report"));
    f.emplace_back("seed", static_cast<std::int64_t>(cfg.seed));
    f.emplace_back("epochs_run", static_cast<std::int64_t>(report.epochs.size()));
    f.emplace_back("best_epoch", static_cast<std::int64_t>(report.best_epoch));
    f.emplace_back("stopped_early", report.stopped_early);
    f.emplace_back("seconds", report.seconds);
    f.emplace_back("weight_mode", cfg.weight_mode);
    f.emplace_back("precision", cfg.precision);
    if (!report.epochs.empty()) {
        const EpochRecord& last = report.epochs.back();
        f.emplace_back("final_total_loss", last.total);
        f.emplace_back("final_utilization", last.utilization);
    }
    if (report.test) {
        for (auto& entry : metric_fields(*report.test)) f.push_back(std::move(entry));
    }
    return f;
}

void write_run_directory(const std::filesystem::path& dir, const TrainResult& result) {
    std::filesystem::create_directories(dir);
    save_checkpoint(dir / "checkpoint.bin", result.trained);
    write_losses_csv(dir / "losses.csv", result.report);
    write_utilization_csv(dir / "utilization.csv", result.report);
    write_q_history_csv(dir / "q_history.csv", result.report);
    {
        std::ofstream out = open_out(dir / "config.txt");
        out << result.report.config.to_text();
    }
    write_report_json(dir / "report.json", run_fields(result.report));
}

void write_correlations(const std::filesystem::path& dir, const TrainedModel& trained) {
    std::filesystem::create_directories(dir);
    write_matrix_csv(dir / "s_global.csv", trained.s_global_norm);
    for (std::size_t v = 0; v < trained.view_norm.size(); ++v) {
        write_matrix_csv(dir / ("s_view_" + std::to_string(v) + ".csv"), trained.view_norm[v]);
    }
    std::ofstream out = open_out(dir / "q_history.csv");
    out << "epoch";
    for (Eigen::Index v = 0; v < trained.q_history.cols(); ++v) out << ",q_" << v;
    out << '\n';
    for (Eigen::Index e = 0; e < trained.q_history.rows(); ++e) {
        out << e + 1;
        for (Eigen::Index v = 0; v < trained.q_history.cols(); ++v) {
            out << ',' << format_real(static_cast<double>(trained.q_history(e, v)));
        }
        out << '\n';
    }
}

}  // namespace scsd::train
