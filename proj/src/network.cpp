#include "scsd/network.hpp"

#include <cmath>

#include "scsd/errors.hpp"

namespace scsd::nn {

namespace {

Linear make_linear(std::size_t in, std::size_t out, Real bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-static_cast<double>(bound),
                                                static_cast<double>(bound));
    std::vector<Real> w(in * out);
    for (Real& x : w) x = static_cast<Real>(dist(rng));
    return {diff::Tensor::from_values({in, out}, std::move(w), true),
            diff::Tensor::zeros({1, out}, true)};
}

diff::Tensor constant_rows(const Matrix& m, const IndexList& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
    }
    return diff::Tensor::from_matrix(out);
}

}  // namespace

diff::Tensor Linear::forward(diff::Tape& tape, const diff::Tensor& x) const {
    return tape.add_row(tape.matmul(x, weight), bias);
}

diff::Tensor Mlp::forward(diff::Tape& tape, const diff::Tensor& x) const {
    if (x.rank() != 2 || x.cols() != in_dim()) {
        throw DimensionError("mlp input width " + std::to_string(x.rank() == 2 ? x.cols() : 0) +
                             " does not match " + std::to_string(in_dim()));
    }
    diff::Tensor h = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        h = layers[l].forward(tape, h);
        if (l + 1 < layers.size()) h = tape.relu(h);
    }
    return h;
}

Mlp make_mlp(const std::vector<std::size_t>& widths, std::mt19937_64& rng) {
    if (widths.size() < 2) {
        throw ParameterError("an MLP needs input and output widths");
    }
    Mlp mlp;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const auto fan_in = static_cast<Real>(widths[l]);
        const bool last = l + 2 == widths.size();
        const Real bound = last ? Real(1) / std::sqrt(fan_in) : std::sqrt(Real(6) / fan_in);
        mlp.layers.push_back(make_linear(widths[l], widths[l + 1], bound, rng));
    }
    return mlp;
}

void ModelConfig::validate() const {
    if (view_dims.empty()) throw ParameterError("model needs at least one view");
    if (num_labels == 0) throw ParameterError("model needs at least one label");
    if (d_e == 0 || groups == 0 || d_e % groups != 0) {
        throw ParameterError("d_e = " + std::to_string(d_e) + " is not divisible into g = " +
                             std::to_string(groups) + " groups");
    }
    if (use_vq && codebook_size == 0) throw ParameterError("codebook size must be positive");
    for (std::size_t d : view_dims) {
        if (d == 0) throw ParameterError("view dimensions must be positive");
    }
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.seed);
    for (std::size_t d_v : cfg_.view_dims) {
        ViewBranch b;
        std::vector<std::size_t> enc{d_v};
        enc.insert(enc.end(), cfg_.hidden.begin(), cfg_.hidden.end());
        enc.push_back(cfg_.d_e);
        std::vector<std::size_t> dec(enc.rbegin(), enc.rend());
        b.encoder = make_mlp(enc, rng);
        b.decoder = make_mlp(dec, rng);
        b.classifier = make_linear(cfg_.d_e, cfg_.num_labels,
                                   Real(1) / std::sqrt(static_cast<Real>(cfg_.d_e)), rng);
        branches_.push_back(std::move(b));
    }
    if (cfg_.use_vq) {
        codebook_ = vq::Codebook(cfg_.codebook_size, cfg_.d_c(), cfg_.groups);
    }
}

std::vector<std::pair<std::string, diff::Tensor*>> Model::named_parameters() {
    std::vector<std::pair<std::string, diff::Tensor*>> out;
    auto add_mlp = [&out](const std::string& prefix, Mlp& mlp) {
        for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
            out.emplace_back(prefix + "." + std::to_string(l) + ".weight", &mlp.layers[l].weight);
            out.emplace_back(prefix + "." + std::to_string(l) + ".bias", &mlp.layers[l].bias);
        }
    };
    for (std::size_t v = 0; v < branches_.size(); ++v) {
        const std::string p = "view" + std::to_string(v);
        add_mlp(p + ".encoder", branches_[v].encoder);
        add_mlp(p + ".decoder", branches_[v].decoder);
        out.emplace_back(p + ".classifier.weight", &branches_[v].classifier.weight);
        out.emplace_back(p + ".classifier.bias", &branches_[v].classifier.bias);
    }
    if (cfg_.use_vq) {
        out.emplace_back("codebook.embeddings", &codebook_.embeddings());
    }
    return out;
}

std::vector<std::pair<std::string, const diff::Tensor*>> Model::named_parameters() const {
    std::vector<std::pair<std::string, const diff::Tensor*>> out;
    for (auto& [name, t] : const_cast<Model*>(this)->named_parameters()) out.emplace_back(name, t);
    return out;
}

Model Model::clone() const {
    Model out = *this;
    auto src = named_parameters();
    auto dst = out.named_parameters();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->clone();
    return out;
}

void Model::zero_grad() {
    for (auto& entry : named_parameters()) entry.second->zero_grad();
}

diff::Tensor encode(diff::Tape& tape, const diff::Tensor& x, const ViewBranch& branch) {
    return branch.encoder.forward(tape, x);
}

diff::Tensor decode_cross_view(diff::Tape& tape, const diff::Tensor& z_hat,
                               const ViewBranch& target) {
    return target.decoder.forward(tape, z_hat);
}

diff::Tensor classify(diff::Tape& tape, const diff::Tensor& z_hat, const ViewBranch& branch) {
    if (z_hat.rank() != 2 || z_hat.cols() != branch.classifier.in_dim()) {
        throw DimensionError("classifier input width mismatch");
    }
    return tape.clamp(tape.sigmoid(branch.classifier.forward(tape, z_hat)), kProbFloor, kProbCeil);
}

ForwardState forward_pass(diff::Tape& tape, const data::Batch& batch, Model& model,
                          const ForwardOptions& options) {
    const std::size_t m = model.num_views();
    if (batch.views.size() != m) {
        throw DimensionError("batch has " + std::to_string(batch.views.size()) +
                             " views, model expects " + std::to_string(m));
    }
    ForwardState state;
    state.batch_size = batch.size();
    state.views.resize(m);

    for (std::size_t v = 0; v < m; ++v) {
        ViewForward& vf = state.views[v];
        vf.rows = batch.available_rows(v);
        if (vf.rows.empty()) continue;
        vf.z = encode(tape, constant_rows(batch.views[v], vf.rows), model.branch(v));
    }

    const bool use_vq = model.config().use_vq;
    if (use_vq && !model.codebook().initialized()) {
        std::size_t total = 0;
        for (const auto& vf : state.views) total += vf.rows.size() * model.config().groups;
        if (total == 0) throw StateError("first batch holds no observed view to initialize the codebook");
        const std::size_t d_c = model.config().d_c();
        Matrix segments(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(d_c));
        std::size_t offset = 0;
        for (const auto& vf : state.views) {
            if (vf.rows.empty()) continue;
            std::copy(vf.z.values().begin(), vf.z.values().end(), segments.data() + offset);
            offset += vf.z.size();
        }
        model.codebook().initialize_kmeans(segments, model.config().seed);
    }

    for (std::size_t v = 0; v < m; ++v) {
        ViewForward& vf = state.views[v];
        if (vf.rows.empty()) continue;
        if (use_vq) {
            vf.quant = vq::quantize_batch(tape, vf.z, model.codebook(), options.count_usage);
            vf.z_hat = vf.quant->quantized;
        } else {
            vf.z_hat = vf.z;
        }
        vf.predictions = classify(tape, vf.z_hat, model.branch(v));
    }

    if (!options.reconstruct) return state;
    for (std::size_t v = 0; v < m; ++v) {
        const ViewForward& src = state.views[v];
        if (src.rows.empty()) continue;
        for (std::size_t j = 0; j < m; ++j) {
            if (j != v && !options.cross_view) continue;
            IndexList local;
            IndexList rows;
            for (std::size_t r = 0; r < src.rows.size(); ++r) {
                const auto i = static_cast<Eigen::Index>(src.rows[r]);
                if (batch.view_mask(i, static_cast<Eigen::Index>(j))) {
                    local.push_back(r);
                    rows.push_back(src.rows[r]);
                }
            }
            if (rows.empty()) continue;
            const diff::Tensor input =
                local.size() == src.rows.size() ? src.z_hat : tape.gather_rows(src.z_hat, local);
            state.reconstructions.push_back(
                {j, v, std::move(rows), decode_cross_view(tape, input, model.branch(j))});
        }
    }
    return state;
}

}  // namespace scsd::nn
