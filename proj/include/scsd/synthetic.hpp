#pragma once

#include <cstdint>
#include <vector>

#include "scsd/dataset.hpp"

namespace scsd::data {

/// Correlated multi-label data with view-specific Gaussian class prototypes.
///
/// Labels come from a shared low-rank latent factor, so label pairs are
/// correlated. Each view's features are the sum of that view's prototypes
/// of the sample's positive labels plus isotropic noise. Values are rounded
/// to float32 so the dataset round-trips through the native format exactly.
struct SyntheticSpec {
    std::size_t n = 2000;
    std::size_t c = 8;
    std::vector<std::size_t> view_dims = {40, 60};
    std::vector<double> view_noise = {1.0, 1.5};
    std::size_t latent_factors = 3;
    double label_noise = 0.5;
    /// Threshold in latent standard deviations; larger means sparser labels.
    double label_threshold = 0.7;
    std::uint64_t seed = 0;
};

MultiViewDataset make_synthetic(const SyntheticSpec& spec);

}  // namespace scsd::data
