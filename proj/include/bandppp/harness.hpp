#pragma once

// Monte Carlo experiments: true banded covariances, point-estimation error
// tables, interval coverage tables, posterior loss and timing summaries.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bandppp/inference.hpp"
#include "bandppp/ppp.hpp"
#include "bandppp/selection.hpp"

namespace bandppp {

enum class TrueCovKind { sigma1, sigma2, sigma3 };

struct TrueCovSpec {
    TrueCovKind kind = TrueCovKind::sigma1;
    Index p = 100;
    Index k0 = 5;
    double rho = 0.6;          // sigma1
    double alpha_decay = 0.1;  // sigma1
    std::uint64_t seed = 0;    // sigma3
    double lambda_floor = 0.5;

    void validate() const;
    std::string label() const;
};

// Band of rho |i-j|^{-(alpha+1)} off the diagonal, unit diagonal, shifted to
// lambda_min = lambda_floor.
CovarianceMatrix make_sigma1(const TrueCovSpec& spec);
// Triangular taper max(1 - |i-j|/(k0+1), 0), shifted to lambda_min = lambda_floor.
CovarianceMatrix make_sigma2(const TrueCovSpec& spec);
// L D L^T with unit lower-banded L (N(0,1) band entries) and inverse-gamma(5, 1)
// diagonal D, shifted to lambda_min = lambda_floor.
CovarianceMatrix make_sigma3(const TrueCovSpec& spec);
CovarianceMatrix make_true_cov(const TrueCovSpec& spec);

enum class EstimatorId { ppp, dual_ppp, iw_posterior, banded_sample, sample, dual_mle, mle_icf, oracle };

std::string to_string(EstimatorId id);
EstimatorId parse_estimator(const std::string& name);
std::string to_string(TrueCovKind kind);
TrueCovKind parse_true_cov_kind(const std::string& name);

enum class BandwidthPolicy { known, cross_validate };

struct ExperimentConfig {
    std::vector<TrueCovSpec> truths;
    std::vector<Index> n_values;
    std::size_t replications = 100;
    std::vector<EstimatorId> estimators;
    std::size_t posterior_draws = 500;
    BandwidthPolicy bandwidth_policy = BandwidthPolicy::known;
    // Eigenvalue floor for the banding post-processing.
    EpsPolicy eps_policy = EpsPolicy::cross_validated();
    // Ridge for dual-mle / mle-icf inputs: cross-validated by frequentist LOO
    // when unset.
    std::optional<double> freq_eps;
    CVGrid grid;  // empty lists fall back to CVGrid::defaults(p)
    double level = 0.95;
    IntervalMethod credible_method = IntervalMethod::quantile;
    bool record_ploss = false;
    SolverOptions solver;
    std::uint64_t seed = 20240521;
    std::size_t threads = 0;

    void validate() const;
};

struct ReplicationRecord {
    std::size_t replication = 0;
    bool failed = false;
    std::string error;
    double spectral_error = 0.0;
    // Interval experiments.
    double truth_value = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    bool covered = false;
    // Posterior-based estimators with record_ploss.
    double ploss = 0.0;
    double ploss_sq = 0.0;
    double eps = 0.0;
    Index bandwidth = 0;
    double seconds = 0.0;
};

struct TimingSummary {
    double q1 = 0.0;
    double mean = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double total = 0.0;
};

TimingSummary summarize_timings(const std::vector<double>& seconds);

struct CellResult {
    std::string truth;
    Index n = 0;
    EstimatorId estimator = EstimatorId::ppp;
    std::vector<ReplicationRecord> records;
    std::size_t failures = 0;
    bool incomplete = false;
    double mean_error = 0.0;
    double coverage = 0.0;
    double mean_length = 0.0;
    double mean_ploss = 0.0;
    double mean_ploss_sq = 0.0;
    TimingSummary timing;
};

struct ExperimentResult {
    std::string kind;  // "point", "interval" or "timing"
    std::vector<CellResult> cells;

    const CellResult* find(const std::string& truth, Index n, EstimatorId id) const;
};

// Recomputes the summary fields of a cell from its replication records.
void summarize_cell(CellResult& cell, const std::string& kind);

// Monte Carlo estimate of E(||Sigma_0 - Sigma|| | X) over the draws.
double posterior_ploss(const PosteriorSampleSet& s, const CovarianceMatrix& truth);
double posterior_ploss_squared(const PosteriorSampleSet& s, const CovarianceMatrix& truth);

// Mean spectral error of posterior means / point estimates, per (truth, n, estimator).
ExperimentResult run_point_estimation(const ExperimentConfig& config);

// Coverage and mean length of level-`config.level` intervals for `functional`
// evaluated at x_head, the first p - 1 coordinates of a fresh N(0, Sigma_0)
// draw per replication.
ExperimentResult run_interval_experiment(const ExperimentConfig& config, const Functional& functional);

// Same fits as run_point_estimation, reported as wall-clock summaries.
ExperimentResult timing_summary(const ExperimentConfig& config);

struct FitSettings {
    std::optional<Index> bandwidth;  // unset: cross-validated over grid
    EpsPolicy eps_policy = EpsPolicy::cross_validated();
    std::optional<double> freq_eps;
    CVGrid grid;
    std::size_t posterior_draws = 500;
    SolverOptions solver;
    std::uint64_t seed = 20240521;
    std::size_t threads = 0;
};

struct DatasetFit {
    CovarianceMatrix estimate;
    Index bandwidth = 0;
    double eps = 0.0;
    // Processed draws for posterior-based estimators.
    std::optional<PosteriorSampleSet> samples;
};

// One estimator on one dataset with the harness tuning rules. Initial draws
// use stream SeedSpec{seed, 0}.substream(1).
DatasetFit fit_dataset(EstimatorId id, const DataMatrix& data, const FitSettings& settings);

}  // namespace bandppp
