#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "scsd/config.hpp"
#include "scsd/diffcore.hpp"
#include "scsd/network.hpp"

namespace scsd {

// Binary layout (all integers little-endian):
//   "SCSDCKPT" | u32 version | u64 header length | header bytes (UTF-8 text)
//   u64 tensor count | per tensor:
//     u64 name length | name | u64 rank | rank x u64 dims | f64 values (row-major)

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    diff::Shape shape;
    std::vector<double> values;
};

struct Archive {
    std::string header;
    std::vector<NamedTensor> tensors;

    const NamedTensor* find(const std::string& name) const;
    /// Throws LoadError when the tensor is absent.
    const NamedTensor& at(const std::string& name) const;
};

void write_archive(const std::filesystem::path& path, const Archive& archive);
/// Throws LoadError naming the file on a bad magic, version or truncation.
Archive read_archive(const std::filesystem::path& path);

/// Everything needed to run inference after training.
struct TrainedModel {
    TrainConfig config;
    nn::Model model;
    /// Normalized global label correlation of the training split.
    Matrix s_global_norm;
    /// Inference-time per-view quality (moving average over training batches).
    std::vector<Real> q_ema;
    /// Last normalized batch correlation seen for each view.
    std::vector<Matrix> view_norm;
    /// epochs x m, one row of moving-average quality per finished epoch.
    Matrix q_history;
};

void save_checkpoint(const std::filesystem::path& path, const TrainedModel& trained);
TrainedModel load_checkpoint(const std::filesystem::path& path);

}  // namespace scsd
