#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "scsd/dataset.hpp"
#include "scsd/diffcore.hpp"
#include "scsd/quantizer.hpp"

namespace scsd::nn {

inline constexpr Real kProbFloor = Real(1e-7);
inline constexpr Real kProbCeil = Real(1) - Real(1e-7);

struct Linear {
    diff::Tensor weight;  // in x out
    diff::Tensor bias;    // 1 x out

    std::size_t in_dim() const { return weight.rows(); }
    std::size_t out_dim() const { return weight.cols(); }
    diff::Tensor forward(diff::Tape& tape, const diff::Tensor& x) const;
};

/// Affine layers with ReLU between them (none after the last).
struct Mlp {
    std::vector<Linear> layers;

    std::size_t in_dim() const { return layers.front().in_dim(); }
    std::size_t out_dim() const { return layers.back().out_dim(); }
    diff::Tensor forward(diff::Tape& tape, const diff::Tensor& x) const;
};

/// widths = {input, hidden..., output}. Hidden layers use Kaiming-uniform
/// fan-in bounds sqrt(6 / fan_in); the output layer uses 1 / sqrt(fan_in).
/// Biases start at zero.
Mlp make_mlp(const std::vector<std::size_t>& widths, std::mt19937_64& rng);

struct ViewBranch {
    Mlp encoder;     // d_v -> d_e
    Mlp decoder;     // d_e -> d_v
    Linear classifier;  // d_e -> c
};

struct ModelConfig {
    std::vector<std::size_t> view_dims;
    std::size_t num_labels = 0;
    std::size_t d_e = 512;
    std::size_t groups = 128;
    std::size_t codebook_size = 2048;
    std::vector<std::size_t> hidden = {512, 512};
    bool use_vq = true;
    std::uint64_t seed = 0;

    std::size_t d_c() const { return groups ? d_e / groups : 0; }
    /// Throws ParameterError on inconsistent sizes (e.g. g * d_c != d_e).
    void validate() const;
};

class Model {
public:
    Model() = default;
    explicit Model(ModelConfig cfg);

    /// Deep copy; a plain copy shares parameter storage with the original.
    Model clone() const;

    const ModelConfig& config() const { return cfg_; }
    std::size_t num_views() const { return branches_.size(); }
    ViewBranch& branch(std::size_t v) { return branches_[v]; }
    const ViewBranch& branch(std::size_t v) const { return branches_[v]; }
    vq::Codebook& codebook() { return codebook_; }
    const vq::Codebook& codebook() const { return codebook_; }

    /// Every learnable tensor with a stable name, in a fixed order. The
    /// codebook is listed only when vector quantization is enabled.
    std::vector<std::pair<std::string, diff::Tensor*>> named_parameters();
    std::vector<std::pair<std::string, const diff::Tensor*>> named_parameters() const;
    void zero_grad();

private:
    ModelConfig cfg_;
    std::vector<ViewBranch> branches_;
    vq::Codebook codebook_;
};

diff::Tensor encode(diff::Tape& tape, const diff::Tensor& x, const ViewBranch& branch);
diff::Tensor decode_cross_view(diff::Tape& tape, const diff::Tensor& z_hat,
                               const ViewBranch& target);
/// Sigmoid of the affine classifier, clamped to [1e-7, 1 - 1e-7].
diff::Tensor classify(diff::Tape& tape, const diff::Tensor& z_hat, const ViewBranch& branch);

/// Per-view results restricted to the batch rows where the view is observed.
struct ViewForward {
    IndexList rows;
    diff::Tensor z;
    /// Decoder/classifier input: quantized features, or z when VQ is off.
    diff::Tensor z_hat;
    std::optional<vq::QuantizationOutput> quant;
    diff::Tensor predictions;  // rows.size() x c
};

/// X_hat^(target, source) for the batch rows where both views are observed.
struct Reconstruction {
    std::size_t target = 0;
    std::size_t source = 0;
    IndexList rows;
    diff::Tensor x_hat;
};

struct ForwardState {
    std::size_t batch_size = 0;
    std::vector<ViewForward> views;
    std::vector<Reconstruction> reconstructions;
};

struct ForwardOptions {
    bool cross_view = true;
    bool reconstruct = true;
    bool count_usage = true;
};

/// Encodes, quantizes, decodes and classifies one batch. Only observed
/// (sample, view) rows enter the graph. An uninitialized codebook is
/// initialized by k-means over this batch's segments.
ForwardState forward_pass(diff::Tape& tape, const data::Batch& batch, Model& model,
                          const ForwardOptions& options = {});

}  // namespace scsd::nn
