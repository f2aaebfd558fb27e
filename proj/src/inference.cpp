#include "bandppp/inference.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>

namespace bandppp {

BandIndexMap::BandIndexMap(Index p, Index k) : p_(p), k_(k) {
    if (p < 1 || k < 0 || k > p - 1) throw InvalidArgument("BandIndexMap: need p >= 1 and 0 <= k <= p - 1");
    for (Index j = 0; j < p; ++j) {
        for (Index i = std::max<Index>(0, j - k); i <= j; ++i) pairs_.emplace_back(i, j);
    }
}

std::optional<Index> BandIndexMap::index_of(Index i, Index j) const {
    if (i > j) std::swap(i, j);
    if (i < 0 || j >= p_ || j - i > k_) return std::nullopt;
    // Column j contributes min(j, k) + 1 pairs.
    Index offset = 0;
    for (Index c = 0; c < j; ++c) offset += std::min(c, k_) + 1;
    return offset + (i - std::max<Index>(0, j - k_));
}

Vector BandIndexMap::vecb(const Matrix& sigma) const {
    if (sigma.rows() != p_ || sigma.cols() != p_) throw InvalidArgument("vecb: dimension mismatch");
    Vector out(p_star());
    for (Index c = 0; c < p_star(); ++c) out(c) = sigma(pairs_[c].first, pairs_[c].second);
    return out;
}

Matrix BandIndexMap::unvecb(const Vector& theta) const {
    if (theta.size() != p_star()) throw InvalidArgument("unvecb: length mismatch");
    Matrix out = Matrix::Zero(p_, p_);
    for (Index c = 0; c < p_star(); ++c) {
        const auto [i, j] = pairs_[c];
        out(i, j) = theta(c);
        out(j, i) = theta(c);
    }
    return out;
}

std::string to_string(IntervalMethod m) {
    switch (m) {
        case IntervalMethod::quantile: return "quantile";
        case IntervalMethod::hpd: return "hpd";
        case IntervalMethod::delta: return "delta";
    }
    return "unknown";
}

namespace {

void require_head(const CovarianceMatrix& sigma, const Vector& x_head) {
    if (sigma.rows() < 2 || sigma.rows() != sigma.cols()) throw InvalidArgument("conditional_mean: need p >= 2");
    if (x_head.size() != sigma.rows() - 1) throw InvalidArgument("conditional_mean: x_head must have length p - 1");
}

}  // namespace

double conditional_mean(const CovarianceMatrix& sigma, const Vector& x_head) {
    require_head(sigma, x_head);
    const Index m = sigma.rows() - 1;
    Eigen::LLT<Matrix> llt(sigma.topLeftCorner(m, m));
    if (llt.info() != Eigen::Success) throw NumericError("conditional_mean: leading block is not positive definite");
    return sigma.row(m).head(m).dot(llt.solve(x_head));
}

Vector conditional_mean_gradient(const CovarianceMatrix& sigma, const Vector& x_head, const BandIndexMap& map) {
    require_head(sigma, x_head);
    const Index m = sigma.rows() - 1;
    Eigen::LLT<Matrix> llt(sigma.topLeftCorner(m, m));
    if (llt.info() != Eigen::Success) throw NumericError("conditional_mean: leading block is not positive definite");
    const Vector w = llt.solve(x_head);
    const Vector beta = llt.solve(sigma.col(m).head(m));
    Vector g = Vector::Zero(map.p_star());
    for (Index c = 0; c < map.p_star(); ++c) {
        const auto [i, j] = map.pairs()[c];
        if (j == m && i < m) {
            g(c) = w(i);
        } else if (j < m) {
            g(c) = (i == j) ? -beta(i) * w(i) : -(beta(i) * w(j) + beta(j) * w(i));
        }
    }
    return g;
}

Functional conditional_mean_functional() {
    return Functional("conditional_mean", conditional_mean, conditional_mean_gradient);
}

Functional entry_functional(Index i, Index j) {
    return Functional("sigma_" + std::to_string(i) + "_" + std::to_string(j),
                      [i, j](const CovarianceMatrix& s, const Vector&) { return s(i, j); });
}

Functional log_det_functional() {
    return Functional("log_det", [](const CovarianceMatrix& s, const Vector&) {
        Eigen::LLT<Matrix> llt(s);
        if (llt.info() != Eigen::Success) throw NumericError("log_det: matrix is not positive definite");
        return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    });
}

Eigen::SparseMatrix<double> q_matrix(const BandIndexMap& map) {
    const Index p = map.p();
    std::vector<Eigen::Triplet<double>> entries;
    for (Index c = 0; c < map.p_star(); ++c) {
        const auto [i, j] = map.pairs()[c];
        entries.emplace_back(i + j * p, c, 1.0);
        if (i != j) entries.emplace_back(j + i * p, c, 1.0);
    }
    Eigen::SparseMatrix<double> q(p * p, map.p_star());
    q.setFromTriplets(entries.begin(), entries.end());
    return q;
}

Matrix fisher_block(const CovarianceMatrix& sigma, const BandIndexMap& map) {
    if (sigma.rows() != map.p()) throw InvalidArgument("fisher_block: dimension mismatch");
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("fisher_block: sigma is not positive definite");
    Matrix k = llt.solve(Matrix::Identity(map.p(), map.p()));
    k = ((k + k.transpose()) / 2.0).eval();

    // (K kron K)[(r,s),(u,v)] = K_su K_rv in column-major vec order; each
    // off-diagonal band pair owns both (i,j) and (j,i).
    const auto& pairs = map.pairs();
    const Index n = map.p_star();
    Matrix f(n, n);
    for (Index a = 0; a < n; ++a) {
        const auto [i, j] = pairs[a];
        for (Index b = 0; b <= a; ++b) {
            const auto [u, v] = pairs[b];
            double val = k(j, v) * k(i, u);
            if (u != v) val += k(j, u) * k(i, v);
            if (i != j) {
                val += k(i, v) * k(j, u);
                if (u != v) val += k(i, u) * k(j, v);
            }
            f(a, b) = val;
            f(b, a) = val;
        }
    }
    return f;
}

namespace {

void check_values(const std::vector<double>& values, double level) {
    if (values.size() < 2) throw InvalidArgument("interval: need at least two values");
    if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("interval: level must lie in (0, 1)");
}

double type7_quantile(const std::vector<double>& sorted, double q) {
    const double h = static_cast<double>(sorted.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

IntervalEstimate quantile_credible_interval(std::vector<double> values, double level) {
    check_values(values, level);
    std::sort(values.begin(), values.end());
    const double alpha = 1.0 - level;
    return {type7_quantile(values, alpha / 2.0), type7_quantile(values, 1.0 - alpha / 2.0), level,
            IntervalMethod::quantile};
}

IntervalEstimate hpd_interval(std::vector<double> values, double level) {
    check_values(values, level);
    std::sort(values.begin(), values.end());
    const std::size_t s = values.size();
    auto m = static_cast<std::size_t>(std::ceil(level * static_cast<double>(s) - 1e-9));
    m = std::clamp<std::size_t>(m, 1, s);
    std::size_t best = 0;
    double width = values[m - 1] - values[0];
    for (std::size_t i = 1; i + m <= s; ++i) {
        const double w = values[i + m - 1] - values[i];
        if (w < width) {
            width = w;
            best = i;
        }
    }
    return {values[best], values[best + m - 1], level, IntervalMethod::hpd};
}

double normal_quantile(double prob) {
    if (!(prob > 0.0 && prob < 1.0)) throw InvalidArgument("normal_quantile: probability must lie in (0, 1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(), prob);
}

Vector functional_gradient_fd(const Functional& functional, const Vector& point, const BandIndexMap& map,
                              const Vector& x_head) {
    if (point.size() != map.p_star()) throw InvalidArgument("functional_gradient_fd: point length mismatch");
    Vector g(point.size());
    Vector probe = point;
    for (Index c = 0; c < point.size(); ++c) {
        const double h = std::max(1e-6, 1e-6 * std::abs(point(c)));
        probe(c) = point(c) + h;
        const double up = functional(map.unvecb(probe), x_head);
        probe(c) = point(c) - h;
        const double down = functional(map.unvecb(probe), x_head);
        probe(c) = point(c);
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw NumericError("functional_gradient_fd: non-finite functional value");
        }
        g(c) = (up - down) / (2.0 * h);
    }
    return g;
}

IntervalEstimate delta_method_ci(const CovarianceMatrix& sigma_hat, const BandIndexMap& map, Index n,
                                 const Functional& functional, double level, const Vector& x_head) {
    if (n < 1) throw InvalidArgument("delta_method_ci: n must be positive");
    if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("delta_method_ci: level must lie in (0, 1)");
    if (!is_banded(sigma_hat, map.k())) throw InvalidArgument("delta_method_ci: sigma_hat is not banded at k");
    const Matrix f = fisher_block(sigma_hat, map);
    Eigen::LLT<Matrix> f_llt(f);
    if (f_llt.info() != Eigen::Success) throw NumericError("delta_method_ci: singular Fisher block");
    const Vector g = functional.has_gradient() ? functional.gradient(sigma_hat, x_head, map)
                                               : functional_gradient_fd(functional, map.vecb(sigma_hat), map, x_head);
    const double var = 2.0 * g.dot(f_llt.solve(g));
    if (!(var >= 0.0) || !std::isfinite(var)) throw NumericError("delta_method_ci: invalid variance");
    const double center = functional(sigma_hat, x_head);
    const double half = normal_quantile(1.0 - (1.0 - level) / 2.0) * std::sqrt(var / static_cast<double>(n));
    return {center - half, center + half, level, IntervalMethod::delta};
}

}  // namespace bandppp
