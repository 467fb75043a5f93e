#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "scsd/config.hpp"
#include "scsd/dataset.hpp"
#include "scsd/diffcore.hpp"
#include "scsd/network.hpp"

namespace scsd::testing {

using LossFn = std::function<diff::Tensor(diff::Tape&)>;

struct GradCheckResult {
    /// Worst per-tensor ||analytic - numeric|| / max(||analytic||, ||numeric||).
    double max_relative_error = 0.0;
    std::string worst_tensor;
};

/// Compares tape gradients of `loss` with central differences. The first
/// evaluation records a freeze trace; every perturbed evaluation replays it.
GradCheckResult check_gradients(const LossFn& loss,
                                const std::vector<std::pair<std::string, diff::Tensor*>>& params,
                                double step = 1e-6);

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0);
BinaryMatrix random_binary(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double p = 0.5);

/// Random dataset with the given masks density; every row keeps a view and
/// masked entries are zero-filled.
data::MultiViewDataset random_dataset(std::size_t n, const std::vector<std::size_t>& dims,
                                      std::size_t c, std::mt19937_64& rng,
                                      double view_keep = 0.7, double label_keep = 0.6);

/// Copy of `ds` with every W = 0 feature row and every G = 0 label entry
/// overwritten by fresh random values (labels stay binary). Masks unchanged.
data::MultiViewDataset scramble_masked(const data::MultiViewDataset& ds, std::mt19937_64& rng);

/// Small configuration for fast tests.
TrainConfig tiny_config();

// Exhaustive-enumeration references for the multi-label metrics.
namespace oracle {
double average_precision(const Matrix& s, const BinaryMatrix& y);
double hamming(const Matrix& s, const BinaryMatrix& y, double threshold);
double ranking_loss(const Matrix& s, const BinaryMatrix& y);
double auc(const Matrix& s, const BinaryMatrix& y);
double one_error(const Matrix& s, const BinaryMatrix& y);
double coverage(const Matrix& s, const BinaryMatrix& y);
/// Brute-force normalized nearest code with ties to the smallest index.
std::size_t nearest_code(const std::vector<Real>& z, const Matrix& codebook);
}  // namespace oracle

}  // namespace scsd::testing
