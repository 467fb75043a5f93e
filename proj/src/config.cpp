#include "scsd/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "scsd/errors.hpp"

namespace scsd {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw ParameterError("config key " + key + ": not a number: '" + v + "'");
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    std::uint64_t x = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ParameterError("config key " + key + ": not a non-negative integer: '" + v + "'");
    }
    return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ParameterError("config key " + key + ": not a boolean: '" + v + "'");
}

std::string format_double(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

struct FlagEntry {
    const char* name;
    bool Ablations::*flag;
};

constexpr FlagEntry kFlags[] = {
    {"no_dis", &Ablations::no_dis},
    {"no_dis_kl", &Ablations::no_dis_kl},
    {"no_rec", &Ablations::no_rec},
    {"no_vq", &Ablations::no_vq},
    {"no_cross_view_rec", &Ablations::no_cross_view_rec},
    {"avg_fusion", &Ablations::avg_fusion},
};

}  // namespace

const std::vector<std::string>& variant_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out{"full"};
        for (const auto& f : kFlags) out.emplace_back(f.name);
        return out;
    }();
    return names;
}

void apply_variant(Ablations& ablations, const std::string& variant) {
    if (variant == "full") return;
    for (const auto& f : kFlags) {
        if (variant == f.name) {
            ablations.*f.flag = true;
            return;
        }
    }
    throw ParameterError("unknown variant '" + variant + "'");
}

void TrainConfig::validate() const {
    if (lambda < 0.0 || lambda > 1.0) throw ParameterError("lambda must lie in [0, 1]");
    if (alpha < 0.0) throw ParameterError("alpha must be non-negative");
    if (!(tau > 0.0)) throw ParameterError("tau must be positive");
    if (!(lr > 0.0)) throw ParameterError("lr must be positive");
    if (weight_decay < 0.0) throw ParameterError("weight_decay must be non-negative");
    if (batch_size == 0) throw ParameterError("batch_size must be positive");
    if (epochs == 0) throw ParameterError("epochs must be positive");
    if (g == 0 || d_e == 0 || d_e % g != 0) {
        throw ParameterError("g = " + std::to_string(g) + " does not divide d_e = " +
                             std::to_string(d_e));
    }
    if (k == 0) throw ParameterError("k must be positive");
    if (q_decay < 0.0 || q_decay >= 1.0) throw ParameterError("q_decay must lie in [0, 1)");
    if (correlation != "masked_labels" && correlation != "observed_pairs") {
        throw ParameterError("correlation must be masked_labels or observed_pairs");
    }
    if (weight_mode != "frozen_ema" && weight_mode != "per_batch") {
        throw ParameterError("weight_mode must be frozen_ema or per_batch");
    }
    if (precision != kPrecisionName) {
        throw ParameterError("precision '" + precision + "' requested but this build computes in " +
                             std::string(kPrecisionName));
    }
    if (view_missing < 0.0 || view_missing >= 1.0) {
        throw ParameterError("view_missing must lie in [0, 1)");
    }
    if (label_missing < 0.0 || label_missing >= 1.0) {
        throw ParameterError("label_missing must lie in [0, 1)");
    }
    if (!(train_ratio > 0.0 && train_ratio < 1.0)) {
        throw ParameterError("train_ratio must lie in (0, 1)");
    }
    if (val_fraction < 0.0 || val_fraction >= 1.0) {
        throw ParameterError("val_fraction must lie in [0, 1)");
    }
}

std::string TrainConfig::to_text() const {
    std::ostringstream os;
    os << "alpha = " << format_double(alpha) << '\n'
       << "lambda = " << format_double(lambda) << '\n'
       << "tau = " << format_double(tau) << '\n'
       << "lr = " << format_double(lr) << '\n'
       << "weight_decay = " << format_double(weight_decay) << '\n'
       << "batch_size = " << batch_size << '\n'
       << "epochs = " << epochs << '\n'
       << "patience = " << patience << '\n'
       << "seed = " << seed << '\n'
       << "d_e = " << d_e << '\n'
       << "g = " << g << '\n'
       << "k = " << k << '\n'
       << "hidden = ";
    for (std::size_t i = 0; i < hidden.size(); ++i) os << (i ? "," : "") << hidden[i];
    os << '\n'
       << "q_decay = " << format_double(q_decay) << '\n'
       << "correlation = " << correlation << '\n'
       << "weight_mode = " << weight_mode << '\n'
       << "precision = " << precision << '\n';
    for (const auto& f : kFlags) os << f.name << " = " << (ablations.*f.flag ? "true" : "false") << '\n';
    os << "view_missing = " << format_double(view_missing) << '\n'
       << "label_missing = " << format_double(label_missing) << '\n'
       << "train_ratio = " << format_double(train_ratio) << '\n'
       << "val_fraction = " << format_double(val_fraction) << '\n';
    return os.str();
}

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "alpha") cfg.alpha = parse_double(key, value);
    else if (key == "lambda") cfg.lambda = parse_double(key, value);
    else if (key == "tau") cfg.tau = parse_double(key, value);
    else if (key == "lr") cfg.lr = parse_double(key, value);
    else if (key == "weight_decay") cfg.weight_decay = parse_double(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_uint(key, value);
    else if (key == "epochs") cfg.epochs = parse_uint(key, value);
    else if (key == "patience") cfg.patience = parse_uint(key, value);
    else if (key == "seed") cfg.seed = parse_uint(key, value);
    else if (key == "d_e") cfg.d_e = parse_uint(key, value);
    else if (key == "g") cfg.g = parse_uint(key, value);
    else if (key == "k") cfg.k = parse_uint(key, value);
    else if (key == "q_decay") cfg.q_decay = parse_double(key, value);
    else if (key == "correlation") cfg.correlation = value;
    else if (key == "weight_mode") cfg.weight_mode = value;
    else if (key == "precision") cfg.precision = value;
    else if (key == "view_missing") cfg.view_missing = parse_double(key, value);
    else if (key == "label_missing") cfg.label_missing = parse_double(key, value);
    else if (key == "train_ratio") cfg.train_ratio = parse_double(key, value);
    else if (key == "val_fraction") cfg.val_fraction = parse_double(key, value);
    else if (key == "hidden") {
        cfg.hidden.clear();
        std::stringstream ss(value);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty()) cfg.hidden.push_back(parse_uint(key, item));
        }
    } else {
        for (const auto& f : kFlags) {
            if (key == f.name) {
                cfg.ablations.*f.flag = parse_bool(key, value);
                return;
            }
        }
        throw ParameterError("unknown config key '" + key + "'");
    }
}

TrainConfig parse_config(const std::string& text, TrainConfig base) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParameterError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    base.validate();
    return base;
}

TrainConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

}  // namespace scsd
