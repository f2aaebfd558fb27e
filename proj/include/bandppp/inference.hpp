#pragma once

// Scalar functionals of covariance matrices and their interval estimates:
// quantile and HPD credible intervals from posterior draws, and delta-method
// confidence intervals from the banded Gaussian Fisher information.

#include <Eigen/SparseCore>

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bandppp/band_linalg.hpp"

namespace bandppp {

// In-band upper-triangle pairs (i <= j, j - i <= k) in column-major order of
// the upper triangle; vecb() stacks the corresponding entries.
class BandIndexMap {
public:
    BandIndexMap(Index p, Index k);

    Index p() const { return p_; }
    Index k() const { return k_; }
    Index p_star() const { return static_cast<Index>(pairs_.size()); }
    const std::vector<std::pair<Index, Index>>& pairs() const { return pairs_; }
    std::optional<Index> index_of(Index i, Index j) const;

    Vector vecb(const Matrix& sigma) const;
    // Symmetric p x p matrix with the given in-band entries, zero elsewhere.
    Matrix unvecb(const Vector& theta) const;

private:
    Index p_;
    Index k_;
    std::vector<std::pair<Index, Index>> pairs_;
};

// Named scalar map phi(Sigma; x), optionally carrying an analytic gradient in
// vecb coordinates.
class Functional {
public:
    using Eval = std::function<double(const CovarianceMatrix&, const Vector&)>;
    using Gradient = std::function<Vector(const CovarianceMatrix&, const Vector&, const BandIndexMap&)>;

    Functional(std::string name, Eval eval, Gradient gradient = {})
        : name_(std::move(name)), eval_(std::move(eval)), gradient_(std::move(gradient)) {}

    const std::string& name() const { return name_; }
    double operator()(const CovarianceMatrix& sigma, const Vector& x = {}) const { return eval_(sigma, x); }
    bool has_gradient() const { return static_cast<bool>(gradient_); }
    Vector gradient(const CovarianceMatrix& sigma, const Vector& x, const BandIndexMap& map) const {
        return gradient_(sigma, x, map);
    }

private:
    std::string name_;
    Eval eval_;
    Gradient gradient_;
};

enum class IntervalMethod { quantile, hpd, delta };

std::string to_string(IntervalMethod m);

struct IntervalEstimate {
    double lower = 0.0;
    double upper = 0.0;
    double level = 0.95;
    IntervalMethod method = IntervalMethod::quantile;

    double length() const { return upper - lower; }
    bool contains(double x) const { return lower <= x && x <= upper; }
};

// Gaussian predictor of the last coordinate given the first p - 1:
// Sigma_{p,-p} Sigma_{-p,-p}^{-1} x_head.
double conditional_mean(const CovarianceMatrix& sigma, const Vector& x_head);

// Analytic gradient of conditional_mean with respect to vecb(sigma).
Vector conditional_mean_gradient(const CovarianceMatrix& sigma, const Vector& x_head, const BandIndexMap& map);

Functional conditional_mean_functional();
Functional entry_functional(Index i, Index j);
Functional log_det_functional();

// 0/1 matrix Q (p^2 x p*) with vec(Sigma) = Q vecb(Sigma) for banded Sigma.
Eigen::SparseMatrix<double> q_matrix(const BandIndexMap& map);

// Q^T (K kron K) Q with K = sigma^{-1}, assembled entrywise without forming
// the Kronecker product.
Matrix fisher_block(const CovarianceMatrix& sigma, const BandIndexMap& map);

// Equal-tailed interval from type-7 (linear interpolation) quantiles.
IntervalEstimate quantile_credible_interval(std::vector<double> values, double level);

// Shortest interval holding ceil(level * S) of the sorted values.
IntervalEstimate hpd_interval(std::vector<double> values, double level);

double normal_quantile(double prob);

// Central differences in vecb coordinates, step max(1e-6, 1e-6 |theta_j|).
Vector functional_gradient_fd(const Functional& functional, const Vector& point, const BandIndexMap& map,
                              const Vector& x_head);

// phi(Sigma_hat) +- z_{alpha/2} sqrt(2 g^T F^{-1} g / n) with F the Fisher block.
IntervalEstimate delta_method_ci(const CovarianceMatrix& sigma_hat, const BandIndexMap& map, Index n,
                                 const Functional& functional, double level, const Vector& x_head);

}  // namespace bandppp
