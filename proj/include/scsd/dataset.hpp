#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scsd/types.hpp"

namespace scsd::data {

/// Incomplete multi-view multi-label data.
///
/// views[v] is n x d_v, labels is n x c, view_mask (W) is n x m and
/// label_mask (G) is n x c. Missing views and labels are stored as zeros.
struct MultiViewDataset {
    std::vector<Matrix> views;
    BinaryMatrix labels;
    BinaryMatrix view_mask;
    BinaryMatrix label_mask;
    std::vector<std::string> view_names;
    std::vector<std::string> label_names;

    std::size_t n() const { return static_cast<std::size_t>(labels.rows()); }
    std::size_t m() const { return views.size(); }
    std::size_t c() const { return static_cast<std::size_t>(labels.cols()); }
    std::size_t view_dim(std::size_t v) const { return static_cast<std::size_t>(views[v].cols()); }

    /// Throws ContractError describing the first broken invariant. Values
    /// under a zero mask are not inspected; computation never reads them.
    void validate() const;
    /// validate() plus zero-filled masked feature rows and labels, as
    /// required of stored datasets.
    void validate_stored() const;

private:
    void check(bool zero_filled) const;
};

/// Builds a fully observed dataset (all-ones masks) from raw matrices.
MultiViewDataset make_dataset(std::vector<Matrix> views, BinaryMatrix labels);

struct MissingnessSpec {
    double view_missing_rate = 0.0;
    double label_missing_rate = 0.0;
    std::uint64_t seed = 0;
};

/// One mini-batch. labels already carry the label mask (Y * G).
struct Batch {
    IndexList indices;
    std::vector<Matrix> views;
    Matrix labels;
    BinaryMatrix view_mask;
    BinaryMatrix label_mask;

    std::size_t size() const { return indices.size(); }
    /// Rows of this batch whose view v is observed, in ascending order.
    IndexList available_rows(std::size_t v) const;
};

MultiViewDataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const MultiViewDataset& ds, const std::filesystem::path& dir);

/// Drops views at the requested global rate while every row keeps at least
/// one view. Each row keeps one uniformly chosen view and drops every other
/// view independently with probability rate * m / (m - 1), capped at 1.
MultiViewDataset simulate_missing_views(const MultiViewDataset& ds, const MissingnessSpec& spec);

/// Independent Bernoulli(rate) removal of every (sample, label) entry.
MultiViewDataset simulate_missing_labels(const MultiViewDataset& ds, const MissingnessSpec& spec);

/// Rows listed in `rows`, in that order.
MultiViewDataset subset(const MultiViewDataset& ds, const IndexList& rows);

/// Disjoint random partition; the first part holds floor(fraction * n) rows.
/// Each part keeps ascending sample order.
std::pair<MultiViewDataset, MultiViewDataset> split(const MultiViewDataset& ds,
                                                    double train_fraction, std::uint64_t seed);
std::pair<IndexList, IndexList> split_indices(std::size_t n, double train_fraction,
                                              std::uint64_t seed);

Batch make_batch(const MultiViewDataset& ds, const IndexList& rows);

/// Index lists of one epoch; natural order when shuffle_seed is empty.
std::vector<IndexList> batch_indices(std::size_t n, std::size_t batch_size,
                                     std::optional<std::uint64_t> shuffle_seed);

/// Single-consumer epoch iterator over a dataset.
class BatchIterator {
public:
    BatchIterator(const MultiViewDataset& ds, std::size_t batch_size,
                  std::optional<std::uint64_t> shuffle_seed);
    std::optional<Batch> next();
    std::size_t batch_count() const { return order_.size(); }

private:
    const MultiViewDataset* ds_;
    std::vector<IndexList> order_;
    std::size_t cursor_ = 0;
};

inline BatchIterator iterate_batches(const MultiViewDataset& ds, std::size_t batch_size,
                                     std::optional<std::uint64_t> shuffle_seed) {
    return BatchIterator(ds, batch_size, shuffle_seed);
}

}  // namespace scsd::data
