#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "scsd/diffcore.hpp"

namespace scsd::vq {

/// Splits a row of width d_e into g contiguous segments of width d_e / g.
std::vector<std::vector<Real>> segment(std::span<const Real> z_row, std::size_t groups);

/// Unit-norm copy of v; the zero vector maps to itself.
std::vector<Real> l2_normalized(std::span<const Real> v);

/// k-means++ seeding followed by at most max_iterations Lloyd steps over the
/// rows of points. When the data has fewer distinct rows than k, the missing
/// centroids are copies of found centroids plus Gaussian jitter of
/// 1e-3 times the data RMS.
Matrix kmeans(const Matrix& points, std::size_t k, std::uint64_t seed,
              std::size_t max_iterations = 10);

/// Shared learnable table of k embeddings of width d_c, used by g segments
/// per sample (g * d_c = d_e). Row indices are stable identities.
class Codebook {
public:
    Codebook() = default;
    Codebook(std::size_t k, std::size_t d_c, std::size_t groups);

    std::size_t k() const { return k_; }
    std::size_t d_c() const { return d_c_; }
    std::size_t groups() const { return groups_; }
    std::size_t d_e() const { return d_c_ * groups_; }
    bool initialized() const { return initialized_; }

    diff::Tensor& embeddings() { return embeddings_; }
    const diff::Tensor& embeddings() const { return embeddings_; }

    /// Replaces the table with k-means centroids of the given segments.
    void initialize_kmeans(const Matrix& segments, std::uint64_t seed);
    /// Installs an explicit table (checkpoint load, tests).
    void set_embeddings(const Matrix& table);

    /// Index minimizing ||l2(z) - l2(e_j)||^2; ties go to the smallest index.
    std::size_t nearest(std::span<const Real> z) const;
    /// nearest() for every row of a (rows x d_c) segment matrix.
    std::vector<std::size_t> nearest_rows(std::span<const Real> segments, std::size_t rows) const;

    /// nearest() plus the chosen embedding; counts the selection as usage.
    std::pair<std::size_t, std::vector<Real>> lookup(std::span<const Real> z);

    void record_usage(std::span<const std::size_t> indices);
    void reset_usage();
    const std::vector<std::uint64_t>& usage_counts() const { return usage_; }
    /// Fraction of rows selected at least once since the last reset.
    double utilization() const;

private:
    void require_initialized() const;

    std::size_t k_ = 0;
    std::size_t d_c_ = 0;
    std::size_t groups_ = 0;
    bool initialized_ = false;
    diff::Tensor embeddings_;
    std::vector<std::uint64_t> usage_;
    std::uint64_t recorded_selections_ = 0;
};

struct QuantizationOutput {
    /// rows * g indices, row-major (sample-major, then segment).
    std::vector<std::size_t> indices;
    /// Straight-through output: forward value is the reassembled codes,
    /// gradient flows to the continuous input.
    diff::Tensor quantized;
    /// Continuous input and gathered codebook rows as (rows * g) x d_c.
    diff::Tensor z_segments;
    diff::Tensor code_segments;
};

/// Quantizes every row of z (rows x d_e). When the tape carries a freeze
/// trace the chosen indices are recorded or replayed through it.
QuantizationOutput quantize_batch(diff::Tape& tape, const diff::Tensor& z, Codebook& cb,
                                  bool count_usage = true);

/// The two terms of the codebook objective, each as a rows x 1 column:
/// codebook term sum_t ||sg[l2(z_t)] - l2(zhat_t)||^2 and
/// commitment term sum_t ||l2(z_t) - sg[l2(zhat_t)]||^2.
std::pair<diff::Tensor, diff::Tensor> vq_loss_terms(diff::Tape& tape,
                                                    const diff::Tensor& z_segments,
                                                    const diff::Tensor& code_segments,
                                                    std::size_t groups);

/// Per-sample codebook objective (sum of both terms), rows x 1.
diff::Tensor vq_loss(diff::Tape& tape, const diff::Tensor& z_segments,
                     const diff::Tensor& code_segments, std::size_t groups);

}  // namespace scsd::vq
