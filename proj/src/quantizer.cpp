#include "scsd/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "scsd/errors.hpp"

namespace scsd::vq {

std::vector<std::vector<Real>> segment(std::span<const Real> z_row, std::size_t groups) {
    if (groups == 0 || z_row.size() % groups != 0) {
        throw ParameterError("cannot split width " + std::to_string(z_row.size()) + " into " +
                             std::to_string(groups) + " equal segments");
    }
    const std::size_t width = z_row.size() / groups;
    std::vector<std::vector<Real>> out;
    out.reserve(groups);
    for (std::size_t t = 0; t < groups; ++t) {
        out.emplace_back(z_row.begin() + static_cast<std::ptrdiff_t>(t * width),
                         z_row.begin() + static_cast<std::ptrdiff_t>((t + 1) * width));
    }
    return out;
}

std::vector<Real> l2_normalized(std::span<const Real> v) {
    Real ss = 0;
    for (Real x : v) ss += x * x;
    const Real norm = std::sqrt(ss);
    std::vector<Real> out(v.begin(), v.end());
    if (norm > Real(0)) {
        for (Real& x : out) x /= norm;
    }
    return out;
}

// ---------------------------------------------------------------------------
// k-means

namespace {

Real squared_distance(const Real* a, const Real* b, std::size_t d) {
    Real s = 0;
    for (std::size_t t = 0; t < d; ++t) {
        const Real diff = a[t] - b[t];
        s += diff * diff;
    }
    return s;
}

}  // namespace

Matrix kmeans(const Matrix& points, std::size_t k, std::uint64_t seed,
              std::size_t max_iterations) {
    const auto n = static_cast<std::size_t>(points.rows());
    const auto d = static_cast<std::size_t>(points.cols());
    if (n == 0 || k == 0) {
        throw StateError("k-means needs at least one point and one centroid");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const Real* data = points.data();

    // k-means++ seeding; stops early once every point coincides with a centroid.
    std::vector<std::size_t> seeds;
    seeds.push_back(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
    std::vector<Real> best(n);
    for (std::size_t i = 0; i < n; ++i) best[i] = squared_distance(data + i * d, data + seeds[0] * d, d);
    while (seeds.size() < std::min(k, n)) {
        double total = 0;
        for (Real b : best) total += static_cast<double>(b);
        if (total <= 0.0) break;
        const double target = unit(rng) * total;
        double acc = 0;
        std::size_t chosen = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
            acc += static_cast<double>(best[i]);
            if (acc > target && best[i] > Real(0)) {
                chosen = i;
                break;
            }
        }
        while (best[chosen] <= Real(0)) --chosen;  // guard rounding at the tail
        seeds.push_back(chosen);
        for (std::size_t i = 0; i < n; ++i) {
            best[i] = std::min(best[i], squared_distance(data + i * d, data + chosen * d, d));
        }
    }

    const std::size_t found = seeds.size();
    Matrix centroids(static_cast<Eigen::Index>(found), static_cast<Eigen::Index>(d));
    for (std::size_t c = 0; c < found; ++c) centroids.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(seeds[c]));

    std::vector<std::size_t> assign(n, std::numeric_limits<std::size_t>::max());
    for (std::size_t iter = 0; iter < max_iterations; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t arg = 0;
            Real arg_d = std::numeric_limits<Real>::infinity();
            for (std::size_t c = 0; c < found; ++c) {
                const Real dist = squared_distance(data + i * d, centroids.data() + c * d, d);
                if (dist < arg_d) {
                    arg_d = dist;
                    arg = c;
                }
            }
            changed = changed || assign[i] != arg;
            assign[i] = arg;
        }
        if (!changed) break;
        Matrix sums = Matrix::Zero(static_cast<Eigen::Index>(found), static_cast<Eigen::Index>(d));
        std::vector<std::size_t> counts(found, 0);
        for (std::size_t i = 0; i < n; ++i) {
            sums.row(static_cast<Eigen::Index>(assign[i])) += points.row(static_cast<Eigen::Index>(i));
            ++counts[assign[i]];
        }
        for (std::size_t c = 0; c < found; ++c) {
            if (counts[c] > 0) {
                centroids.row(static_cast<Eigen::Index>(c)) =
                    sums.row(static_cast<Eigen::Index>(c)) / static_cast<Real>(counts[c]);
            }
        }
    }

    if (found == k) {
        return centroids;
    }
    Real scale = std::sqrt(points.squaredNorm() / static_cast<Real>(points.size()));
    if (!(scale > Real(0))) scale = Real(1);
    std::normal_distribution<double> jitter(0.0, 1e-3 * static_cast<double>(scale));
    Matrix full(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
    full.topRows(static_cast<Eigen::Index>(found)) = centroids;
    for (std::size_t c = found; c < k; ++c) {
        const auto src = static_cast<Eigen::Index>(c % found);
        for (std::size_t t = 0; t < d; ++t) {
            full(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)) =
                centroids(src, static_cast<Eigen::Index>(t)) + static_cast<Real>(jitter(rng));
        }
    }
    return full;
}

// ---------------------------------------------------------------------------
// Codebook

Codebook::Codebook(std::size_t k, std::size_t d_c, std::size_t groups)
    : k_(k), d_c_(d_c), groups_(groups), usage_(k, 0) {
    if (k == 0 || d_c == 0 || groups == 0) {
        throw ParameterError("codebook sizes must be positive");
    }
    embeddings_ = diff::Tensor::zeros({k, d_c}, true);
}

void Codebook::initialize_kmeans(const Matrix& segments, std::uint64_t seed) {
    if (static_cast<std::size_t>(segments.cols()) != d_c_) {
        throw DimensionError("k-means segments have width " + std::to_string(segments.cols()) +
                             ", codebook expects " + std::to_string(d_c_));
    }
    set_embeddings(kmeans(segments, k_, seed));
}

void Codebook::set_embeddings(const Matrix& table) {
    if (static_cast<std::size_t>(table.rows()) != k_ ||
        static_cast<std::size_t>(table.cols()) != d_c_) {
        throw DimensionError("codebook table must be " + std::to_string(k_) + " x " +
                             std::to_string(d_c_));
    }
    if (!table.allFinite()) {
        throw NumericError("codebook table holds non-finite values");
    }
    std::copy_n(table.data(), table.size(), embeddings_.mutable_values().data());
    initialized_ = true;
}

void Codebook::require_initialized() const {
    if (!initialized_) {
        throw StateError("codebook lookup before initialization");
    }
}

std::size_t Codebook::nearest(std::span<const Real> z) const {
    require_initialized();
    if (z.size() != d_c_) {
        throw DimensionError("lookup vector has width " + std::to_string(z.size()));
    }
    return nearest_rows(z, 1).front();
}

std::vector<std::size_t> Codebook::nearest_rows(std::span<const Real> segments,
                                                std::size_t rows) const {
    require_initialized();
    if (segments.size() != rows * d_c_) {
        throw DimensionError("segment matrix does not have width d_c");
    }
    // Normalized table stored column-major (d_c x k) so the inner loop runs over k.
    std::vector<Real> table(k_ * d_c_);
    const Real* e = embeddings_.values().data();
    for (std::size_t j = 0; j < k_; ++j) {
        const auto unit = l2_normalized({e + j * d_c_, d_c_});
        for (std::size_t t = 0; t < d_c_; ++t) table[t * k_ + j] = unit[t];
    }
    std::vector<std::size_t> out(rows);
    std::vector<Real> dist(k_);
    for (std::size_t r = 0; r < rows; ++r) {
        const auto unit = l2_normalized(segments.subspan(r * d_c_, d_c_));
        std::fill(dist.begin(), dist.end(), Real(0));
        for (std::size_t t = 0; t < d_c_; ++t) {
            const Real a = unit[t];
            const Real* col = table.data() + t * k_;
            for (std::size_t j = 0; j < k_; ++j) {
                const Real diff = a - col[j];
                dist[j] += diff * diff;
            }
        }
        std::size_t arg = 0;
        for (std::size_t j = 1; j < k_; ++j) {
            if (dist[j] < dist[arg]) arg = j;
        }
        out[r] = arg;
    }
    return out;
}

std::pair<std::size_t, std::vector<Real>> Codebook::lookup(std::span<const Real> z) {
    const std::size_t idx = nearest(z);
    const std::size_t one[] = {idx};
    record_usage(one);
    const Real* row = embeddings_.values().data() + idx * d_c_;
    return {idx, std::vector<Real>(row, row + d_c_)};
}

void Codebook::record_usage(std::span<const std::size_t> indices) {
    for (std::size_t i : indices) {
        if (i >= k_) throw DimensionError("usage index out of range");
        ++usage_[i];
    }
    recorded_selections_ += indices.size();
}

void Codebook::reset_usage() {
    std::fill(usage_.begin(), usage_.end(), 0);
    recorded_selections_ = 0;
}

double Codebook::utilization() const {
    if (recorded_selections_ == 0) {
        throw StateError("utilization requested before any forward pass was recorded");
    }
    const auto used = std::count_if(usage_.begin(), usage_.end(), [](auto c) { return c > 0; });
    return static_cast<double>(used) / static_cast<double>(k_);
}

// ---------------------------------------------------------------------------
// Batch quantization and loss terms

QuantizationOutput quantize_batch(diff::Tape& tape, const diff::Tensor& z, Codebook& cb,
                                  bool count_usage) {
    if (z.rank() != 2 || z.cols() != cb.d_e()) {
        throw DimensionError("quantize_batch: input width does not match d_e = " +
                             std::to_string(cb.d_e()));
    }
    const std::size_t rows = z.rows();
    const std::size_t segs = rows * cb.groups();
    QuantizationOutput out;
    out.indices = cb.nearest_rows(z.values(), segs);
    if (tape.trace()) {
        out.indices = tape.trace()->pass_indices(std::move(out.indices));
    }
    if (count_usage) {
        cb.record_usage(out.indices);
    }
    out.z_segments = tape.reshape(z, {segs, cb.d_c()});
    out.code_segments = tape.gather_rows(cb.embeddings(), out.indices);
    const diff::Tensor codes = tape.reshape(out.code_segments, {rows, cb.d_e()});
    out.quantized = tape.straight_through(z, codes);
    return out;
}

std::pair<diff::Tensor, diff::Tensor> vq_loss_terms(diff::Tape& tape,
                                                    const diff::Tensor& z_segments,
                                                    const diff::Tensor& code_segments,
                                                    std::size_t groups) {
    if (z_segments.shape() != code_segments.shape()) {
        throw DimensionError("vq_loss: segment count mismatch");
    }
    if (groups == 0 || z_segments.rows() % groups != 0) {
        throw DimensionError("vq_loss: segment rows are not a multiple of the group count");
    }
    const std::size_t samples = z_segments.rows() / groups;
    const std::size_t width = groups * z_segments.cols();
    const diff::Tensor nz = tape.l2_normalize_rows(z_segments);
    const diff::Tensor ne = tape.l2_normalize_rows(code_segments);
    const diff::Tensor codebook_term = tape.square(tape.sub(tape.stop_gradient(nz), ne));
    const diff::Tensor commit_term = tape.square(tape.sub(nz, tape.stop_gradient(ne)));
    return {tape.row_sum(tape.reshape(codebook_term, {samples, width})),
            tape.row_sum(tape.reshape(commit_term, {samples, width}))};
}

diff::Tensor vq_loss(diff::Tape& tape, const diff::Tensor& z_segments,
                     const diff::Tensor& code_segments, std::size_t groups) {
    auto [codebook_term, commit_term] = vq_loss_terms(tape, z_segments, code_segments, groups);
    return tape.add(codebook_term, commit_term);
}

}  // namespace scsd::vq
