#include "scsd/synthetic.hpp"

#include <cmath>
#include <random>

#include "scsd/errors.hpp"

namespace scsd::data {

MultiViewDataset make_synthetic(const SyntheticSpec& spec) {
    if (spec.view_dims.empty() || spec.view_dims.size() != spec.view_noise.size()) {
        throw ParameterError("synthetic spec needs one noise level per view");
    }
    if (spec.n == 0 || spec.c == 0) {
        throw ParameterError("synthetic spec needs n > 0 and c > 0");
    }
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const std::size_t r = spec.latent_factors;
    std::vector<std::vector<double>> loadings(spec.c, std::vector<double>(r));
    std::vector<double> thresholds(spec.c);
    for (std::size_t j = 0; j < spec.c; ++j) {
        double sq = 0;
        for (double& a : loadings[j]) {
            a = gauss(rng);
            sq += a * a;
        }
        thresholds[j] = spec.label_threshold * std::sqrt(sq + spec.label_noise * spec.label_noise);
    }

    const std::size_t m = spec.view_dims.size();
    std::vector<Matrix> prototypes;
    for (std::size_t v = 0; v < m; ++v) {
        Matrix p(spec.c, spec.view_dims[v]);
        for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = static_cast<Real>(gauss(rng));
        prototypes.push_back(std::move(p));
    }

    BinaryMatrix labels = BinaryMatrix::Zero(spec.n, spec.c);
    std::vector<double> latent(r);
    for (std::size_t i = 0; i < spec.n; ++i) {
        for (double& z : latent) z = gauss(rng);
        for (std::size_t j = 0; j < spec.c; ++j) {
            double s = spec.label_noise * gauss(rng);
            for (std::size_t f = 0; f < r; ++f) s += loadings[j][f] * latent[f];
            labels(i, j) = s > thresholds[j] ? 1 : 0;
        }
    }

    std::vector<Matrix> views;
    for (std::size_t v = 0; v < m; ++v) {
        Matrix x(spec.n, spec.view_dims[v]);
        for (std::size_t i = 0; i < spec.n; ++i) {
            for (std::size_t d = 0; d < spec.view_dims[v]; ++d) {
                double value = spec.view_noise[v] * gauss(rng);
                for (std::size_t j = 0; j < spec.c; ++j) {
                    if (labels(i, j)) value += prototypes[v](j, d);
                }
                x(i, d) = static_cast<Real>(static_cast<float>(value));
            }
        }
        views.push_back(std::move(x));
    }
    MultiViewDataset ds = make_dataset(std::move(views), std::move(labels));
    for (std::size_t v = 0; v < m; ++v) ds.view_names.push_back("view" + std::to_string(v));
    for (std::size_t j = 0; j < spec.c; ++j) ds.label_names.push_back("label" + std::to_string(j));
    return ds;
}

}  // namespace scsd::data
