#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scsd/types.hpp"

namespace scsd {

struct Ablations {
    bool no_dis = false;
    bool no_dis_kl = false;
    bool no_rec = false;
    bool no_vq = false;
    bool no_cross_view_rec = false;
    bool avg_fusion = false;
};

/// Names accepted by apply_variant: "full" plus one per Ablations flag.
const std::vector<std::string>& variant_names();
/// Sets the flag named by `variant`; "full" clears nothing. Throws
/// ParameterError for an unknown name.
void apply_variant(Ablations& ablations, const std::string& variant);

struct TrainConfig {
    double alpha = 1.0;
    double lambda = 0.1;
    double tau = 1.0;
    double lr = 1e-3;
    double weight_decay = 1e-3;
    std::size_t batch_size = 128;
    std::size_t epochs = 100;
    /// Epochs without validation AP improvement before stopping; 0 disables.
    std::size_t patience = 20;
    std::uint64_t seed = 0;
    std::size_t d_e = 512;
    std::size_t g = 128;
    std::size_t k = 2048;
    std::vector<std::size_t> hidden = {512, 512};
    double q_decay = 0.9;
    /// "masked_labels" or "observed_pairs".
    std::string correlation = "masked_labels";
    /// "frozen_ema" or "per_batch".
    std::string weight_mode = "frozen_ema";
    std::string precision = kPrecisionName;
    Ablations ablations;

    // Data protocol used by the experiment harness.
    double view_missing = 0.5;
    double label_missing = 0.5;
    double train_ratio = 0.7;
    /// Share of the training split held out for early stopping; 0 disables
    /// early stopping.
    double val_fraction = 0.1;

    /// Throws ParameterError naming the first invalid field.
    void validate() const;
    std::string to_text() const;
};

/// Parses flat `key = value` lines. Blank lines and `#` comments are
/// ignored; unknown keys and malformed values raise ParameterError.
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path);
/// Applies one `key=value` assignment.
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);

}  // namespace scsd
