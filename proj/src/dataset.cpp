#include "scsd/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "scsd/errors.hpp"

namespace scsd::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kViewStream = 0x5653;   // "VS"
constexpr std::uint64_t kLabelStream = 0x4c53;  // "LS"
constexpr std::uint64_t kSplitStream = 0x5350;  // "SP"

std::mt19937_64 seeded_engine(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    return std::mt19937_64(seq);
}

void check_rate(double rate, const char* what) {
    if (!(rate >= 0.0) || !(rate < 1.0)) {
        throw ParameterError(std::string(what) + " must lie in [0, 1), got " + std::to_string(rate));
    }
}

std::vector<char> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw LoadError("cannot open " + path.string());
    }
    return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const fs::path& path, const void* data, std::size_t bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw LoadError("cannot write " + path.string());
    }
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
}

Matrix read_f32(const fs::path& path, std::size_t rows, std::size_t cols) {
    const std::vector<char> raw = read_file(path);
    if (raw.size() != rows * cols * sizeof(float)) {
        throw LoadError(path.filename().string() + ": expected " + std::to_string(rows) + "x" +
                        std::to_string(cols) + " float32 values, file holds " +
                        std::to_string(raw.size()) + " bytes");
    }
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows * cols; ++i) {
        std::uint32_t bits = 0;
        std::memcpy(&bits, raw.data() + i * 4, 4);
        if constexpr (std::endian::native == std::endian::big) {
            bits = __builtin_bswap32(bits);
        }
        float f = 0;
        std::memcpy(&f, &bits, 4);
        if (!std::isfinite(f)) {
            throw LoadError(path.filename().string() + ": non-finite value at index " +
                            std::to_string(i));
        }
        m.data()[i] = static_cast<Real>(f);
    }
    return m;
}

void write_f32(const fs::path& path, const Matrix& m) {
    std::vector<char> raw(static_cast<std::size_t>(m.size()) * 4);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        const float f = static_cast<float>(m.data()[i]);
        std::uint32_t bits = 0;
        std::memcpy(&bits, &f, 4);
        if constexpr (std::endian::native == std::endian::big) {
            bits = __builtin_bswap32(bits);
        }
        std::memcpy(raw.data() + i * 4, &bits, 4);
    }
    write_file(path, raw.data(), raw.size());
}

BinaryMatrix read_u8(const fs::path& path, std::size_t rows, std::size_t cols) {
    const std::vector<char> raw = read_file(path);
    if (raw.size() != rows * cols) {
        throw LoadError(path.filename().string() + ": expected " + std::to_string(rows) + "x" +
                        std::to_string(cols) + " bytes, file holds " + std::to_string(raw.size()));
    }
    BinaryMatrix m(rows, cols);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const auto b = static_cast<std::uint8_t>(raw[i]);
        if (b > 1) {
            throw LoadError(path.filename().string() + ": non-binary entry " + std::to_string(b) +
                            " at index " + std::to_string(i));
        }
        m.data()[i] = b;
    }
    return m;
}

void write_u8(const fs::path& path, const BinaryMatrix& m) {
    write_file(path, m.data(), static_cast<std::size_t>(m.size()));
}

}  // namespace

// ---------------------------------------------------------------------------

void MultiViewDataset::validate() const { check(false); }

void MultiViewDataset::validate_stored() const { check(true); }

void MultiViewDataset::check(bool zero_filled) const {
    const auto rows = static_cast<Eigen::Index>(n());
    if (views.empty()) {
        throw ContractError("dataset has no views");
    }
    if (view_mask.rows() != rows || view_mask.cols() != static_cast<Eigen::Index>(m())) {
        throw ContractError("view mask must be n x m");
    }
    if (label_mask.rows() != rows || label_mask.cols() != labels.cols()) {
        throw ContractError("label mask must be n x c");
    }
    for (std::size_t v = 0; v < m(); ++v) {
        if (views[v].rows() != rows) {
            throw ContractError("view " + std::to_string(v) + " has " +
                                std::to_string(views[v].rows()) + " rows, expected " +
                                std::to_string(rows));
        }
    }
    for (Eigen::Index i = 0; i < rows; ++i) {
        bool any = false;
        for (std::size_t v = 0; v < m(); ++v) {
            const auto w = view_mask(i, static_cast<Eigen::Index>(v));
            if (w > 1) throw ContractError("view mask is not binary");
            any = any || w == 1;
            if (zero_filled && w == 0 && !views[v].row(i).isZero(0)) {
                throw ContractError("sample " + std::to_string(i) + " view " + std::to_string(v) +
                                    " is masked but not zero-filled");
            }
        }
        if (!any) {
            throw ContractError("sample " + std::to_string(i) + " has no available view");
        }
        for (Eigen::Index j = 0; j < labels.cols(); ++j) {
            if (labels(i, j) > 1 || label_mask(i, j) > 1) {
                throw ContractError("labels and label mask must be binary");
            }
            if (zero_filled && label_mask(i, j) == 0 && labels(i, j) != 0) {
                throw ContractError("sample " + std::to_string(i) + " label " + std::to_string(j) +
                                    " is masked but not zero-filled");
            }
        }
    }
}

MultiViewDataset make_dataset(std::vector<Matrix> views, BinaryMatrix labels) {
    MultiViewDataset ds;
    const auto n = labels.rows();
    ds.view_mask = BinaryMatrix::Ones(n, static_cast<Eigen::Index>(views.size()));
    ds.label_mask = BinaryMatrix::Ones(n, labels.cols());
    ds.views = std::move(views);
    ds.labels = std::move(labels);
    ds.validate();
    return ds;
}

IndexList Batch::available_rows(std::size_t v) const {
    IndexList rows;
    for (Eigen::Index i = 0; i < view_mask.rows(); ++i) {
        if (view_mask(i, static_cast<Eigen::Index>(v))) rows.push_back(static_cast<std::size_t>(i));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Native format

MultiViewDataset load_dataset(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest";
    json manifest;
    {
        std::ifstream in(manifest_path);
        if (!in) {
            throw LoadError("cannot open " + manifest_path.string());
        }
        try {
            in >> manifest;
        } catch (const json::exception& e) {
            throw LoadError("manifest: " + std::string(e.what()));
        }
    }
    MultiViewDataset ds;
    std::size_t n = 0, m = 0, c = 0;
    try {
        n = manifest.at("n").get<std::size_t>();
        m = manifest.at("m").get<std::size_t>();
        c = manifest.at("c").get<std::size_t>();
        const auto& views = manifest.at("views");
        if (views.size() != m) {
            throw LoadError("manifest: m=" + std::to_string(m) + " but " +
                            std::to_string(views.size()) + " view entries");
        }
        for (const auto& view : views) {
            const auto dim = view.at("dim").get<std::size_t>();
            const auto file = view.at("file").get<std::string>();
            ds.views.push_back(read_f32(dir / file, n, dim));
            ds.view_names.push_back(view.value("name", file));
        }
        const auto& labels = manifest.at("labels");
        ds.labels = read_u8(dir / labels.at("file").get<std::string>(), n, c);
        if (labels.contains("names")) {
            ds.label_names = labels.at("names").get<std::vector<std::string>>();
        }
        ds.view_mask = manifest.contains("view_mask")
                           ? read_u8(dir / manifest.at("view_mask").get<std::string>(), n, m)
                           : BinaryMatrix::Ones(n, m);
        ds.label_mask = manifest.contains("label_mask")
                            ? read_u8(dir / manifest.at("label_mask").get<std::string>(), n, c)
                            : BinaryMatrix::Ones(n, c);
    } catch (const json::exception& e) {
        throw LoadError("manifest: " + std::string(e.what()));
    }
    try {
        ds.validate_stored();
    } catch (const ContractError& e) {
        throw LoadError(dir.string() + ": " + e.what());
    }
    return ds;
}

void save_dataset(const MultiViewDataset& ds, const fs::path& dir) {
    ds.validate_stored();
    fs::create_directories(dir);
    json manifest;
    manifest["format"] = "scsd-dataset";
    manifest["version"] = 1;
    manifest["n"] = ds.n();
    manifest["m"] = ds.m();
    manifest["c"] = ds.c();
    manifest["views"] = json::array();
    for (std::size_t v = 0; v < ds.m(); ++v) {
        const std::string file = "view_" + std::to_string(v) + ".f32";
        json entry{{"dim", ds.view_dim(v)}, {"file", file}};
        if (v < ds.view_names.size()) entry["name"] = ds.view_names[v];
        manifest["views"].push_back(entry);
        write_f32(dir / file, ds.views[v]);
    }
    manifest["labels"] = json{{"file", "labels.u8"}};
    if (!ds.label_names.empty()) manifest["labels"]["names"] = ds.label_names;
    write_u8(dir / "labels.u8", ds.labels);
    manifest["view_mask"] = "view_mask.u8";
    write_u8(dir / "view_mask.u8", ds.view_mask);
    manifest["label_mask"] = "label_mask.u8";
    write_u8(dir / "label_mask.u8", ds.label_mask);

    std::ofstream out(dir / "manifest", std::ios::trunc);
    out << manifest.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Missingness

MultiViewDataset simulate_missing_views(const MultiViewDataset& ds, const MissingnessSpec& spec) {
    check_rate(spec.view_missing_rate, "view missing rate");
    if ((ds.view_mask.array() != 1).any()) {
        throw ContractError("simulate_missing_views expects fully observed views");
    }
    MultiViewDataset out = ds;
    const std::size_t m = ds.m();
    if (spec.view_missing_rate == 0.0 || m < 2) {
        if (spec.view_missing_rate > 0.0) {
            log_warning("single-view dataset: no view can be dropped");
        }
        return out;
    }
    const double max_rate = static_cast<double>(m - 1) / static_cast<double>(m);
    if (spec.view_missing_rate > max_rate) {
        log_warning("view missing rate " + std::to_string(spec.view_missing_rate) +
                    " exceeds the one-view-per-sample ceiling " + std::to_string(max_rate));
    }
    const double drop_p =
        std::min(1.0, spec.view_missing_rate * static_cast<double>(m) / static_cast<double>(m - 1));

    auto rng = seeded_engine(spec.seed, kViewStream);
    std::uniform_int_distribution<std::size_t> pick(0, m - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const std::size_t keep = pick(rng);
        for (std::size_t v = 0; v < m; ++v) {
            const double u = unit(rng);
            if (v != keep && u < drop_p) {
                out.view_mask(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(v)) = 0;
                out.views[v].row(static_cast<Eigen::Index>(i)).setZero();
            }
        }
    }
    return out;
}

MultiViewDataset simulate_missing_labels(const MultiViewDataset& ds, const MissingnessSpec& spec) {
    check_rate(spec.label_missing_rate, "label missing rate");
    if ((ds.label_mask.array() != 1).any()) {
        throw ContractError("simulate_missing_labels expects fully observed labels");
    }
    MultiViewDataset out = ds;
    if (spec.label_missing_rate == 0.0) {
        return out;
    }
    auto rng = seeded_engine(spec.seed, kLabelStream);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (Eigen::Index i = 0; i < out.labels.rows(); ++i) {
        for (Eigen::Index j = 0; j < out.labels.cols(); ++j) {
            if (unit(rng) < spec.label_missing_rate) {
                out.label_mask(i, j) = 0;
                out.labels(i, j) = 0;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Splits and batches

MultiViewDataset subset(const MultiViewDataset& ds, const IndexList& rows) {
    MultiViewDataset out;
    out.view_names = ds.view_names;
    out.label_names = ds.label_names;
    const auto n = static_cast<Eigen::Index>(rows.size());
    out.labels.resize(n, ds.labels.cols());
    out.label_mask.resize(n, ds.label_mask.cols());
    out.view_mask.resize(n, ds.view_mask.cols());
    for (const Matrix& v : ds.views) out.views.emplace_back(n, v.cols());
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto src = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]);
        if (src >= static_cast<Eigen::Index>(ds.n())) {
            throw DimensionError("subset: row " + std::to_string(src) + " out of range");
        }
        out.labels.row(r) = ds.labels.row(src);
        out.label_mask.row(r) = ds.label_mask.row(src);
        out.view_mask.row(r) = ds.view_mask.row(src);
        for (std::size_t v = 0; v < ds.m(); ++v) out.views[v].row(r) = ds.views[v].row(src);
    }
    return out;
}

std::pair<IndexList, IndexList> split_indices(std::size_t n, double train_fraction,
                                              std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ParameterError("train fraction must lie in (0, 1)");
    }
    const auto n_train =
        static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 1e-9));
    if (n_train == 0 || n_train == n) {
        throw ParameterError("split of " + std::to_string(n) + " samples at fraction " +
                             std::to_string(train_fraction) + " leaves one side empty");
    }
    IndexList perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    auto rng = seeded_engine(seed, kSplitStream);
    std::shuffle(perm.begin(), perm.end(), rng);
    IndexList train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    IndexList test(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {std::move(train), std::move(test)};
}

std::pair<MultiViewDataset, MultiViewDataset> split(const MultiViewDataset& ds,
                                                    double train_fraction, std::uint64_t seed) {
    auto [train, test] = split_indices(ds.n(), train_fraction, seed);
    return {subset(ds, train), subset(ds, test)};
}

Batch make_batch(const MultiViewDataset& ds, const IndexList& rows) {
    Batch b;
    b.indices = rows;
    const auto n = static_cast<Eigen::Index>(rows.size());
    b.labels.resize(n, ds.labels.cols());
    b.label_mask.resize(n, ds.label_mask.cols());
    b.view_mask.resize(n, ds.view_mask.cols());
    for (const Matrix& v : ds.views) b.views.emplace_back(n, v.cols());
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto src = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]);
        b.label_mask.row(r) = ds.label_mask.row(src);
        b.view_mask.row(r) = ds.view_mask.row(src);
        for (Eigen::Index j = 0; j < ds.labels.cols(); ++j) {
            b.labels(r, j) = (ds.labels(src, j) & ds.label_mask(src, j)) ? Real(1) : Real(0);
        }
        for (std::size_t v = 0; v < ds.m(); ++v) b.views[v].row(r) = ds.views[v].row(src);
    }
    return b;
}

std::vector<IndexList> batch_indices(std::size_t n, std::size_t batch_size,
                                     std::optional<std::uint64_t> shuffle_seed) {
    if (batch_size == 0) {
        throw ParameterError("batch size must be at least 1");
    }
    IndexList order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (shuffle_seed) {
        std::mt19937_64 rng(*shuffle_seed);
        std::shuffle(order.begin(), order.end(), rng);
    }
    std::vector<IndexList> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

BatchIterator::BatchIterator(const MultiViewDataset& ds, std::size_t batch_size,
                             std::optional<std::uint64_t> shuffle_seed)
    : ds_(&ds), order_(batch_indices(ds.n(), batch_size, shuffle_seed)) {}

std::optional<Batch> BatchIterator::next() {
    if (cursor_ >= order_.size()) {
        return std::nullopt;
    }
    return make_batch(*ds_, order_[cursor_++]);
}

}  // namespace scsd::data
