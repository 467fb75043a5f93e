#include "scsd/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "scsd/errors.hpp"

namespace scsd {

namespace {

constexpr char kMagic[8] = {'S', 'C', 'S', 'D', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
public:
    Reader(std::istream& in, std::string file) : in_(in), file_(std::move(file)) {}

    template <typename T>
    T get() {
        T v{};
        bytes(reinterpret_cast<char*>(&v), sizeof(T));
        return v;
    }

    void bytes(char* dst, std::size_t count) {
        in_.read(dst, static_cast<std::streamsize>(count));
        if (static_cast<std::size_t>(in_.gcount()) != count) fail("truncated file");
    }

    std::string string(std::uint64_t limit = 1u << 30) {
        const auto len = get<std::uint64_t>();
        if (len > limit) fail("implausible string length");
        std::string s(len, '\0');
        bytes(s.data(), len);
        return s;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw LoadError(file_ + ": " + what);
    }

private:
    std::istream& in_;
    std::string file_;
};

NamedTensor from_matrix(std::string name, const Matrix& m) {
    NamedTensor t{std::move(name),
                  {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                  {}};
    t.values.assign(m.data(), m.data() + m.size());
    return t;
}

Matrix to_matrix(const NamedTensor& t) {
    if (t.shape.size() != 2) throw LoadError("tensor " + t.name + " is not a matrix");
    Matrix m(static_cast<Eigen::Index>(t.shape[0]), static_cast<Eigen::Index>(t.shape[1]));
    for (std::size_t i = 0; i < t.values.size(); ++i) m.data()[i] = static_cast<Real>(t.values[i]);
    return m;
}

NamedTensor from_vector(std::string name, const std::vector<double>& v) {
    return {std::move(name), {v.size()}, v};
}

}  // namespace

const NamedTensor* Archive::find(const std::string& name) const {
    const auto it = std::find_if(tensors.begin(), tensors.end(),
                                 [&](const NamedTensor& t) { return t.name == name; });
    return it == tensors.end() ? nullptr : &*it;
}

const NamedTensor& Archive::at(const std::string& name) const {
    if (const NamedTensor* t = find(name)) return *t;
    throw LoadError("checkpoint has no tensor named " + name);
}

void write_archive(const std::filesystem::path& path, const Archive& archive) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError("cannot open " + path.string() + " for writing");
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, archive.header.size());
    out.write(archive.header.data(), static_cast<std::streamsize>(archive.header.size()));
    put<std::uint64_t>(out, archive.tensors.size());
    for (const NamedTensor& t : archive.tensors) {
        if (diff::shape_size(t.shape) != t.values.size()) {
            throw DimensionError("tensor " + t.name + " has inconsistent shape and value count");
        }
        put<std::uint64_t>(out, t.name.size());
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put<std::uint64_t>(out, t.shape.size());
        for (std::size_t d : t.shape) put<std::uint64_t>(out, d);
        out.write(reinterpret_cast<const char*>(t.values.data()),
                  static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    }
    if (!out) throw LoadError("write failed for " + path.string());
}

Archive read_archive(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open checkpoint " + path.string());
    Reader r(in, path.string());
    char magic[sizeof(kMagic)];
    r.bytes(magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) r.fail("not a checkpoint file");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        r.fail("unsupported checkpoint version " + std::to_string(version));
    }
    Archive a;
    a.header = r.string();
    const auto count = r.get<std::uint64_t>();
    for (std::uint64_t k = 0; k < count; ++k) {
        NamedTensor t;
        t.name = r.string(1u << 16);
        const auto rank = r.get<std::uint64_t>();
        if (rank > 8) r.fail("implausible rank for tensor " + t.name);
        for (std::uint64_t d = 0; d < rank; ++d) t.shape.push_back(r.get<std::uint64_t>());
        t.values.resize(diff::shape_size(t.shape));
        r.bytes(reinterpret_cast<char*>(t.values.data()), t.values.size() * sizeof(double));
        a.tensors.push_back(std::move(t));
    }
    return a;
}

void save_checkpoint(const std::filesystem::path& path, const TrainedModel& trained) {
    const nn::ModelConfig& mc = trained.model.config();
    Archive a;
    a.header = trained.config.to_text();
    std::vector<double> dims(mc.view_dims.begin(), mc.view_dims.end());
    a.tensors.push_back(from_vector("meta.view_dims", dims));
    a.tensors.push_back(from_vector("meta.num_labels", {static_cast<double>(mc.num_labels)}));
    a.tensors.push_back(from_vector(
        "meta.codebook_initialized",
        {mc.use_vq && trained.model.codebook().initialized() ? 1.0 : 0.0}));
    for (const auto& [name, t] : trained.model.named_parameters()) {
        a.tensors.push_back({"param." + name, t->shape(), {t->values().begin(), t->values().end()}});
    }
    a.tensors.push_back(from_matrix("fusion.s_global_norm", trained.s_global_norm));
    std::vector<double> q(trained.q_ema.begin(), trained.q_ema.end());
    a.tensors.push_back(from_vector("fusion.q_ema", q));
    for (std::size_t v = 0; v < trained.view_norm.size(); ++v) {
        a.tensors.push_back(
            from_matrix("fusion.view_norm." + std::to_string(v), trained.view_norm[v]));
    }
    if (trained.q_history.size() > 0) {
        a.tensors.push_back(from_matrix("fusion.q_history", trained.q_history));
    }
    write_archive(path, a);
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
    const Archive a = read_archive(path);
    TrainedModel out;
    try {
        out.config = parse_config(a.header);
    } catch (const ParameterError& e) {
        throw LoadError(path.string() + ": bad configuration header: " + e.what());
    }
    const TrainConfig& cfg = out.config;
    nn::ModelConfig mc;
    for (double d : a.at("meta.view_dims").values) mc.view_dims.push_back(static_cast<std::size_t>(d));
    mc.num_labels = static_cast<std::size_t>(a.at("meta.num_labels").values.at(0));
    mc.d_e = cfg.d_e;
    mc.groups = cfg.g;
    mc.codebook_size = cfg.k;
    mc.hidden = cfg.hidden;
    mc.use_vq = !cfg.ablations.no_vq;
    mc.seed = cfg.seed;
    out.model = nn::Model(mc);
    for (auto& [name, t] : out.model.named_parameters()) {
        const NamedTensor& stored = a.at("param." + name);
        if (stored.shape != t->shape()) {
            throw LoadError(path.string() + ": tensor " + name + " has the wrong shape");
        }
        auto dst = t->mutable_values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<Real>(stored.values[i]);
    }
    if (mc.use_vq && a.at("meta.codebook_initialized").values.at(0) != 0.0) {
        out.model.codebook().set_embeddings(out.model.codebook().embeddings().to_matrix());
    }
    out.s_global_norm = to_matrix(a.at("fusion.s_global_norm"));
    for (double q : a.at("fusion.q_ema").values) out.q_ema.push_back(static_cast<Real>(q));
    for (std::size_t v = 0; v < mc.view_dims.size(); ++v) {
        if (const NamedTensor* t = a.find("fusion.view_norm." + std::to_string(v))) {
            out.view_norm.push_back(to_matrix(*t));
        }
    }
    if (const NamedTensor* t = a.find("fusion.q_history")) out.q_history = to_matrix(*t);
    return out;
}

}  // namespace scsd
