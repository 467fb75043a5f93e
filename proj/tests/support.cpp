#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace scsd::testing {

GradCheckResult check_gradients(const LossFn& loss,
                                const std::vector<std::pair<std::string, diff::Tensor*>>& params,
                                double step) {
    diff::FreezeTrace trace;
    trace.start_record();
    for (auto& [name, p] : params) p->zero_grad();
    {
        diff::Tape tape(&trace);
        const diff::Tensor l = loss(tape);
        tape.backward(l);
    }
    GradCheckResult result;
    for (auto& [name, p] : params) {
        const std::vector<Real> analytic(p->grad().begin(), p->grad().end());
        std::vector<double> numeric(p->size());
        auto values = p->mutable_values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const Real saved = values[i];
            values[i] = saved + static_cast<Real>(step);
            trace.start_replay();
            double up = 0.0;
            {
                diff::Tape tape(&trace);
                up = static_cast<double>(loss(tape).item());
            }
            values[i] = saved - static_cast<Real>(step);
            trace.start_replay();
            double down = 0.0;
            {
                diff::Tape tape(&trace);
                down = static_cast<double>(loss(tape).item());
            }
            values[i] = saved;
            numeric[i] = (up - down) / (2.0 * step);
        }
        double diff2 = 0.0;
        double a2 = 0.0;
        double n2 = 0.0;
        for (std::size_t i = 0; i < numeric.size(); ++i) {
            const double a = analytic.empty() ? 0.0 : static_cast<double>(analytic[i]);
            diff2 += (a - numeric[i]) * (a - numeric[i]);
            a2 += a * a;
            n2 += numeric[i] * numeric[i];
        }
        const double scale = std::max({std::sqrt(a2), std::sqrt(n2), 1e-10});
        const double rel = std::sqrt(diff2) / scale;
        if (rel > result.max_relative_error || result.worst_tensor.empty()) {
            if (rel >= result.max_relative_error) {
                result.max_relative_error = rel;
                result.worst_tensor = name;
            }
        }
    }
    return result;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> dist(0.0, scale);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Real>(dist(rng));
    return m;
}

BinaryMatrix random_binary(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double p) {
    std::bernoulli_distribution dist(p);
    BinaryMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng) ? 1 : 0;
    return m;
}

data::MultiViewDataset random_dataset(std::size_t n, const std::vector<std::size_t>& dims,
                                      std::size_t c, std::mt19937_64& rng, double view_keep,
                                      double label_keep) {
    std::vector<Matrix> views;
    for (std::size_t d : dims) views.push_back(random_matrix(n, d, rng));
    data::MultiViewDataset ds = data::make_dataset(std::move(views), random_binary(n, c, rng));
    ds.view_mask = random_binary(n, dims.size(), rng, view_keep);
    std::uniform_int_distribution<std::size_t> pick(0, dims.size() - 1);
    for (Eigen::Index i = 0; i < ds.view_mask.rows(); ++i) {
        if (ds.view_mask.row(i).cast<int>().sum() == 0) {
            ds.view_mask(i, static_cast<Eigen::Index>(pick(rng))) = 1;
        }
    }
    ds.label_mask = random_binary(n, c, rng, label_keep);
    for (std::size_t v = 0; v < dims.size(); ++v) {
        for (Eigen::Index i = 0; i < ds.views[v].rows(); ++i) {
            if (!ds.view_mask(i, static_cast<Eigen::Index>(v))) ds.views[v].row(i).setZero();
        }
    }
    ds.labels = (ds.labels.array() * ds.label_mask.array()).matrix();
    return ds;
}

data::MultiViewDataset scramble_masked(const data::MultiViewDataset& ds, std::mt19937_64& rng) {
    data::MultiViewDataset out = ds;
    std::normal_distribution<double> feat(0.0, 3.0);
    std::bernoulli_distribution coin(0.5);
    for (std::size_t v = 0; v < out.m(); ++v) {
        for (Eigen::Index i = 0; i < out.views[v].rows(); ++i) {
            if (out.view_mask(i, static_cast<Eigen::Index>(v))) continue;
            for (Eigen::Index j = 0; j < out.views[v].cols(); ++j) {
                out.views[v](i, j) = static_cast<Real>(feat(rng));
            }
        }
    }
    for (Eigen::Index i = 0; i < out.labels.size(); ++i) {
        if (!out.label_mask.data()[i]) out.labels.data()[i] = coin(rng) ? 1 : 0;
    }
    return out;
}

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.d_e = 8;
    cfg.g = 4;
    cfg.k = 16;
    cfg.hidden = {16};
    cfg.batch_size = 16;
    cfg.epochs = 3;
    cfg.patience = 0;
    cfg.val_fraction = 0.0;
    return cfg;
}

namespace oracle {

namespace {

// 1-based rank of label j in row i: labels scoring higher, plus equal
// scores at smaller indices, come first.
std::size_t rank_of(const Matrix& s, Eigen::Index i, Eigen::Index j) {
    std::size_t ahead = 0;
    for (Eigen::Index l = 0; l < s.cols(); ++l) {
        if (s(i, l) > s(i, j) || (s(i, l) == s(i, j) && l < j)) ++ahead;
    }
    return ahead + 1;
}

}  // namespace

double average_precision(const Matrix& s, const BinaryMatrix& y) {
    double total = 0.0;
    int rows = 0;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        // Precision terms keyed by rank so they are summed top-down.
        std::vector<std::pair<std::size_t, double>> terms;
        for (Eigen::Index j = 0; j < s.cols(); ++j) {
            if (!y(i, j)) continue;
            const std::size_t rj = rank_of(s, i, j);
            int better = 0;
            for (Eigen::Index k = 0; k < s.cols(); ++k) {
                if (y(i, k) && rank_of(s, i, k) <= rj) ++better;
            }
            terms.emplace_back(rj, static_cast<double>(better) / static_cast<double>(rj));
        }
        const int pos = static_cast<int>(terms.size());
        if (pos == 0) continue;
        std::sort(terms.begin(), terms.end());
        double row = 0.0;
        for (const auto& t : terms) row += t.second;
        total += row / pos;
        ++rows;
    }
    return rows ? total / rows : std::numeric_limits<double>::quiet_NaN();
}

double hamming(const Matrix& s, const BinaryMatrix& y, double threshold) {
    int wrong = 0;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        for (Eigen::Index j = 0; j < s.cols(); ++j) {
            const int pred = static_cast<double>(s(i, j)) >= threshold ? 1 : 0;
            if (pred != y(i, j)) ++wrong;
        }
    }
    return 1.0 - static_cast<double>(wrong) / static_cast<double>(s.size());
}

double ranking_loss(const Matrix& s, const BinaryMatrix& y) {
    double total = 0.0;
    int rows = 0;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        double bad = 0.0;
        int pairs = 0;
        for (Eigen::Index a = 0; a < s.cols(); ++a) {
            for (Eigen::Index b = 0; b < s.cols(); ++b) {
                if (!y(i, a) || y(i, b)) continue;
                ++pairs;
                if (s(i, a) < s(i, b)) bad += 1.0;
                else if (s(i, a) == s(i, b)) bad += 0.5;
            }
        }
        if (pairs == 0) continue;
        total += bad / pairs;
        ++rows;
    }
    return rows ? 1.0 - total / rows : std::numeric_limits<double>::quiet_NaN();
}

double auc(const Matrix& s, const BinaryMatrix& y) {
    double total = 0.0;
    int labels = 0;
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
        double good = 0.0;
        int pairs = 0;
        for (Eigen::Index a = 0; a < s.rows(); ++a) {
            for (Eigen::Index b = 0; b < s.rows(); ++b) {
                if (!y(a, j) || y(b, j)) continue;
                ++pairs;
                if (s(a, j) > s(b, j)) good += 1.0;
                else if (s(a, j) == s(b, j)) good += 0.5;
            }
        }
        if (pairs == 0) continue;
        total += good / pairs;
        ++labels;
    }
    return labels ? total / labels : std::numeric_limits<double>::quiet_NaN();
}

double one_error(const Matrix& s, const BinaryMatrix& y) {
    int miss = 0;
    int rows = 0;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        if (y.row(i).cast<int>().sum() == 0) continue;
        ++rows;
        for (Eigen::Index j = 0; j < s.cols(); ++j) {
            if (rank_of(s, i, j) == 1 && !y(i, j)) ++miss;
        }
    }
    return rows ? 1.0 - static_cast<double>(miss) / rows : std::numeric_limits<double>::quiet_NaN();
}

double coverage(const Matrix& s, const BinaryMatrix& y) {
    double total = 0.0;
    int rows = 0;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        std::size_t deepest = 0;
        for (Eigen::Index j = 0; j < s.cols(); ++j) {
            if (y(i, j)) deepest = std::max(deepest, rank_of(s, i, j));
        }
        if (deepest == 0) continue;
        total += static_cast<double>(deepest - 1) / static_cast<double>(s.cols());
        ++rows;
    }
    return rows ? 1.0 - total / rows : std::numeric_limits<double>::quiet_NaN();
}

std::size_t nearest_code(const std::vector<Real>& z, const Matrix& codebook) {
    auto unit = [](std::vector<Real> v) {
        Real n = 0;
        for (Real x : v) n += x * x;
        n = std::sqrt(n);
        if (n > 0) for (Real& x : v) x /= n;
        return v;
    };
    const std::vector<Real> zu = unit(z);
    std::size_t best = 0;
    Real best_d = std::numeric_limits<Real>::infinity();
    for (Eigen::Index j = 0; j < codebook.rows(); ++j) {
        std::vector<Real> e(codebook.row(j).data(), codebook.row(j).data() + codebook.cols());
        e = unit(e);
        Real d = 0;
        for (std::size_t t = 0; t < e.size(); ++t) d += (zu[t] - e[t]) * (zu[t] - e[t]);
        if (d < best_d) {
            best_d = d;
            best = static_cast<std::size_t>(j);
        }
    }
    return best;
}

}  // namespace oracle

}  // namespace scsd::testing
