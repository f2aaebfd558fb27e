#pragma once

// Frequentist covariance estimators for the banded model.

#include <cstddef>
#include <vector>

#include "bandppp/band_linalg.hpp"

namespace bandppp {

struct SolverOptions {
    double tol = 1e-8;
    std::size_t max_iter = 500;
};

struct SolverResult {
    CovarianceMatrix estimate;
    double residual = 0.0;
    std::size_t iterations = 0;
    // Objective after each sweep (mle_icf only).
    std::vector<double> objective_trace;
};

// Zero-mean second moment n^{-1} sum_i x_i x_i^T; no centering.
CovarianceMatrix sample_cov(const DataMatrix& data);

// band(sample_cov(data), k). Not necessarily positive definite.
Matrix banded_sample_cov(const DataMatrix& data, const BandSpec& spec);

CovarianceMatrix ridge_adjusted_cov(const DataMatrix& data, double eps);

// Banded A with (A^{-1})_ij = (target^{-1})_ij on the band and zeros off it.
// Solved as a Gaussian concentration-graph MLE with covariance and precision
// exchanged: iterative proportional fitting over the (k+1)-windows with
// target^{-1} as the input second-moment matrix.
SolverResult dual_mle_fit(const CovarianceMatrix& target, const BandSpec& spec, const SolverOptions& opts = {});
CovarianceMatrix dual_mle(const CovarianceMatrix& target, const BandSpec& spec, const SolverOptions& opts = {});

// Max |(A^{-1})_ij - (target^{-1})_ij| over the band.
double dual_residual(const CovarianceMatrix& a, const CovarianceMatrix& target, const BandSpec& spec);

// Banded Gaussian MLE by iterative conditional fitting. `s` must be positive
// definite; ridge it first when p >= n.
SolverResult mle_icf_fit(const CovarianceMatrix& s, const BandSpec& spec, const SolverOptions& opts = {});
CovarianceMatrix mle_icf(const CovarianceMatrix& s, const BandSpec& spec, const SolverOptions& opts = {});

// tr(sigma^{-1} s) + log|sigma|, the Gaussian negative log-likelihood up to
// factor n/2 and constants.
double gaussian_objective(const CovarianceMatrix& sigma, const CovarianceMatrix& s);

// Gradient sigma^{-1} - sigma^{-1} s sigma^{-1} of gaussian_objective with
// respect to a symmetric perturbation (per entry, before symmetry weighting).
Matrix gaussian_objective_gradient(const CovarianceMatrix& sigma, const CovarianceMatrix& s);

// Max |gradient_ij| over the band.
double kkt_residual(const CovarianceMatrix& sigma, const CovarianceMatrix& s, const BandSpec& spec);

}  // namespace bandppp
