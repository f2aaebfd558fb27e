#pragma once

// Leave-one-out cross-validation for the eigenvalue floor eps and the
// bandwidth k. Bayesian scores reuse one set of full-data posterior draws and
// reweight them with closed-form ratios of leave-one-out to full-data
// inverse-Wishart posteriors; frequentist scores refit n times.
//
// Both scores are log-predictive densities and are maximized.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "bandppp/ppp.hpp"

namespace bandppp {

struct CVGrid {
    std::vector<double> epsilon_values;
    std::vector<Index> bandwidth_values;

    // 10 log-spaced eps in [1e-3, 1]; k in {0, ..., min(20, p - 1)}.
    static CVGrid defaults(Index p);
    // Throws InvalidArgument unless each non-empty list is strictly increasing
    // (and eps positive).
    void validate() const;
};

enum class CVKind { epsilon, bandwidth, frequentist };

struct CVReport {
    CVKind kind = CVKind::epsilon;
    std::vector<double> candidates;
    std::vector<double> scores;
    double selected = 0.0;
    std::size_t selected_index = 0;
    // log of the mean weighted predictive density, one per observation, at
    // the selected candidate.
    std::vector<double> per_observation_terms;
    // Bandwidth selection only: eps used for each candidate k.
    std::vector<double> resolved_eps;
    std::string policy = "maximize-log-predictive";
};

// log pi(sigma | X_{-i}) - log pi(sigma | X), both normalized inverse-Wishart
// posteriors under `prior`. `i` is zero-based.
double loo_log_weight(const CovarianceMatrix& sigma, const DataMatrix& data, Index i, const IWParams& prior);

// All loo_log_weight values for a draw set: rows are draws, columns observations.
Matrix loo_log_weights(const std::vector<CovarianceMatrix>& draws, const DataMatrix& data, const IWParams& prior,
                       std::size_t threads = 1);

// Per-observation terms log S^{-1} sum_s p(x_i | B_k^eps(Sigma_s)) w_si for
// each eps in `eps_values`; rows follow eps_values, columns observations.
Matrix log_predictive_terms(const std::vector<CovarianceMatrix>& draws, const DataMatrix& data, Index k,
                            const std::vector<double>& eps_values, const Matrix& log_weights,
                            std::size_t threads = 1);

// R(eps) = sum_i log S^{-1} sum_s p(x_i | B_k^eps(Sigma_s)) w_si. `s` must be
// unprocessed draws from the full-data posterior.
double estimated_log_predictive_eps(const PosteriorSampleSet& s, const DataMatrix& data, const BandSpec& spec,
                                    double eps, const IWParams& prior);

CVReport select_epsilon(const PosteriorSampleSet& s, const DataMatrix& data, const BandSpec& spec,
                        const CVGrid& grid, const IWParams& prior, std::size_t threads = 1);

struct EpsPolicy {
    enum class Mode { cross_validate, theoretical, fixed };
    Mode mode = Mode::cross_validate;
    double value = 0.0;  // fixed mode only

    static EpsPolicy cross_validated() { return {Mode::cross_validate, 0.0}; }
    static EpsPolicy theoretical_default() { return {Mode::theoretical, 0.0}; }
    static EpsPolicy fixed_value(double eps) { return {Mode::fixed, eps}; }
};

CVReport select_bandwidth(const PosteriorSampleSet& s, const DataMatrix& data, const CVGrid& grid,
                          const IWParams& prior, const EpsPolicy& eps_policy, std::size_t threads = 1);

// h(X_{-i}; tuning); must return a positive-definite matrix.
using FrequentistEstimator = std::function<CovarianceMatrix(const DataMatrix&, double)>;

// sum_i log p(x_i | h(X_{-i}; tuning)) by n refits.
double frequentist_loo_score(const FrequentistEstimator& estimator, const DataMatrix& data, double tuning);

// Maximizes frequentist_loo_score over `candidates` (ties to the smallest).
CVReport select_frequentist(const FrequentistEstimator& estimator, const DataMatrix& data,
                            const std::vector<double>& candidates);

// Rows of `data` other than i.
DataMatrix drop_row(const DataMatrix& data, Index i);

}  // namespace bandppp
