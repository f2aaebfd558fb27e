#include "bandppp/selection.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "bandppp/parallel.hpp"

namespace bandppp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log of the inverse-Wishart normalizing constant for (scale, df) given log|scale|.
double iw_log_normalizer(double log_det_scale, double df, Index p) {
    const double m = standard_df(df, p);
    const double pd = static_cast<double>(p);
    return 0.5 * m * log_det_scale - 0.5 * m * pd * std::numbers::ln2 - log_multivariate_gamma(p, m / 2.0);
}

std::size_t argmax_first(const std::vector<double>& scores) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < scores.size(); ++j) {
        if (scores[j] > scores[best]) best = j;
    }
    return best;
}

}  // namespace

CVGrid CVGrid::defaults(Index p) {
    CVGrid g;
    for (int j = 0; j < 10; ++j) g.epsilon_values.push_back(std::pow(10.0, -3.0 + 3.0 * j / 9.0));
    for (Index k = 0; k <= std::min<Index>(20, p - 1); ++k) g.bandwidth_values.push_back(k);
    return g;
}

void CVGrid::validate() const {
    for (std::size_t j = 0; j < epsilon_values.size(); ++j) {
        if (!(epsilon_values[j] > 0.0) || !std::isfinite(epsilon_values[j])) {
            throw InvalidArgument("CVGrid: eps values must be positive and finite");
        }
        if (j > 0 && !(epsilon_values[j] > epsilon_values[j - 1])) {
            throw InvalidArgument("CVGrid: eps values must be strictly increasing");
        }
    }
    for (std::size_t j = 0; j < bandwidth_values.size(); ++j) {
        if (bandwidth_values[j] < 0) throw InvalidArgument("CVGrid: negative bandwidth");
        if (j > 0 && !(bandwidth_values[j] > bandwidth_values[j - 1])) {
            throw InvalidArgument("CVGrid: bandwidth values must be strictly increasing");
        }
    }
}

DataMatrix drop_row(const DataMatrix& data, Index i) {
    DataMatrix out(data.rows() - 1, data.cols());
    if (i > 0) out.topRows(i) = data.topRows(i);
    if (i < data.rows() - 1) out.bottomRows(data.rows() - 1 - i) = data.bottomRows(data.rows() - 1 - i);
    return out;
}

double loo_log_weight(const CovarianceMatrix& sigma, const DataMatrix& data, Index i, const IWParams& prior) {
    if (i < 0 || i >= data.rows()) throw InvalidArgument("loo_log_weight: observation index out of range");
    const IWParams full = conjugate_update(prior, data);
    const IWParams loo = conjugate_update(prior, drop_row(data, i));
    return iw_log_density(sigma, loo) - iw_log_density(sigma, full);
}

Matrix loo_log_weights(const std::vector<CovarianceMatrix>& draws, const DataMatrix& data, const IWParams& prior,
                       std::size_t threads) {
    const Index n = data.rows();
    const Index p = data.cols();
    const IWParams full = conjugate_update(prior, data);
    Eigen::LLT<Matrix> scale_llt(full.scale);
    const double log_det_full = 2.0 * scale_llt.matrixLLT().diagonal().array().log().sum();
    const double log_c_full = iw_log_normalizer(log_det_full, full.df, p);

    // Removing x_i: log|scale - x x^T| = log|scale| + log(1 - x^T scale^{-1} x).
    Vector c(n);
    const Matrix z = scale_llt.matrixL().solve(data.transpose());
    for (Index i = 0; i < n; ++i) {
        const double h = z.col(i).squaredNorm();
        if (!(h < 1.0)) throw NumericError("loo_log_weights: leave-one-out scale not positive definite");
        c(i) = iw_log_normalizer(log_det_full + std::log1p(-h), full.df - 1.0, p) - log_c_full;
    }

    // log pi(S|X_{-i}) - log pi(S|X) = c_i + log|S|/2 + x_i^T S^{-1} x_i / 2.
    Matrix w(static_cast<Index>(draws.size()), n);
    parallel_for(
        draws.size(),
        [&](std::size_t s) {
            Eigen::LLT<Matrix> llt(draws[s]);
            if (llt.info() != Eigen::Success) throw NotPositiveDefinite("loo_log_weights: draw is not positive definite");
            const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
            const Matrix y = llt.matrixL().solve(data.transpose());
            const Vector quad = y.colwise().squaredNorm().transpose();
            w.row(static_cast<Index>(s)) = (c.array() + 0.5 * log_det + 0.5 * quad.array()).transpose();
        },
        threads);
    return w;
}

Matrix log_predictive_terms(const std::vector<CovarianceMatrix>& draws, const DataMatrix& data, Index k,
                            const std::vector<double>& eps_values, const Matrix& log_weights,
                            std::size_t threads) {
    const Index n = data.rows();
    const Index p = data.cols();
    const Index s_count = static_cast<Index>(draws.size());
    const Index e_count = static_cast<Index>(eps_values.size());
    if (s_count == 0) throw InvalidArgument("log_predictive_terms: no draws");
    if (log_weights.rows() != s_count || log_weights.cols() != n) {
        throw InvalidArgument("log_predictive_terms: weight matrix shape mismatch");
    }
    const double log_2pi = std::log(2.0 * std::numbers::pi);

    // terms[e](s, i) = log p(x_i | B_k^eps(Sigma_s)) + w_si.
    std::vector<Matrix> terms(static_cast<std::size_t>(e_count), Matrix(s_count, n));
    parallel_for(
        draws.size(),
        [&](std::size_t s) {
            const Matrix banded = band(draws[s], k);
            Eigen::SelfAdjointEigenSolver<Matrix> eig(banded);
            if (eig.info() != Eigen::Success) throw NumericError("log_predictive_terms: eigensolver failed");
            const Vector& lambda = eig.eigenvalues();
            const Matrix y2 = (data * eig.eigenvectors()).array().square().matrix();
            for (Index e = 0; e < e_count; ++e) {
                const double eps = eps_values[static_cast<std::size_t>(e)];
                const double shift = floor_shift(lambda(0), lambda(p - 1), eps, p);
                const Vector lam = lambda.array() + shift;
                const double log_det = lam.array().log().sum();
                const Vector quad = y2 * lam.cwiseInverse();
                terms[static_cast<std::size_t>(e)].row(static_cast<Index>(s)) =
                    (-0.5 * (static_cast<double>(p) * log_2pi + log_det) - 0.5 * quad.array()).transpose() +
                    log_weights.row(static_cast<Index>(s)).array();
            }
        },
        threads);

    Matrix out(e_count, n);
    const double log_s = std::log(static_cast<double>(s_count));
    for (Index e = 0; e < e_count; ++e) {
        const Matrix& t = terms[static_cast<std::size_t>(e)];
        for (Index i = 0; i < n; ++i) {
            const double mx = t.col(i).maxCoeff();
            if (!std::isfinite(mx)) {
                throw DegeneracyError("log-predictive weights degenerate", static_cast<std::size_t>(i));
            }
            out(e, i) = mx + std::log((t.col(i).array() - mx).exp().sum()) - log_s;
        }
    }
    return out;
}

namespace {

void require_unprocessed(const PosteriorSampleSet& s, const char* who) {
    if (s.processed()) throw InvalidState(std::string(who) + ": needs unprocessed initial-posterior draws");
    if (s.draws.empty()) throw InvalidArgument(std::string(who) + ": empty sample set");
}

}  // namespace

double estimated_log_predictive_eps(const PosteriorSampleSet& s, const DataMatrix& data, const BandSpec& spec,
                                    double eps, const IWParams& prior) {
    require_unprocessed(s, "estimated_log_predictive_eps");
    if (spec.p != data.cols()) throw InvalidArgument("estimated_log_predictive_eps: dimension mismatch");
    if (!(eps > 0.0)) throw InvalidArgument("estimated_log_predictive_eps: eps must be positive");
    const Matrix w = loo_log_weights(s.draws, data, prior);
    return log_predictive_terms(s.draws, data, spec.k, {eps}, w).sum();
}

CVReport select_epsilon(const PosteriorSampleSet& s, const DataMatrix& data, const BandSpec& spec,
                        const CVGrid& grid, const IWParams& prior, std::size_t threads) {
    require_unprocessed(s, "select_epsilon");
    grid.validate();
    if (grid.epsilon_values.empty()) throw InvalidArgument("select_epsilon: empty eps grid");
    if (spec.p != data.cols()) throw InvalidArgument("select_epsilon: dimension mismatch");
    const Matrix w = loo_log_weights(s.draws, data, prior, threads);
    const Matrix terms = log_predictive_terms(s.draws, data, spec.k, grid.epsilon_values, w, threads);

    CVReport report;
    report.kind = CVKind::epsilon;
    report.candidates = grid.epsilon_values;
    for (Index e = 0; e < terms.rows(); ++e) report.scores.push_back(terms.row(e).sum());
    report.selected_index = argmax_first(report.scores);
    report.selected = report.candidates[report.selected_index];
    const Vector best = terms.row(static_cast<Index>(report.selected_index)).transpose();
    report.per_observation_terms.assign(best.data(), best.data() + best.size());
    return report;
}

CVReport select_bandwidth(const PosteriorSampleSet& s, const DataMatrix& data, const CVGrid& grid,
                          const IWParams& prior, const EpsPolicy& eps_policy, std::size_t threads) {
    require_unprocessed(s, "select_bandwidth");
    grid.validate();
    if (grid.bandwidth_values.empty()) throw InvalidArgument("select_bandwidth: empty bandwidth grid");
    const Index p = data.cols();
    const Index n = data.rows();
    for (Index k : grid.bandwidth_values) {
        if (k > p - 1) throw InvalidArgument("select_bandwidth: bandwidth exceeds p - 1");
    }
    if (eps_policy.mode == EpsPolicy::Mode::cross_validate && grid.epsilon_values.empty()) {
        throw InvalidArgument("select_bandwidth: nested eps selection needs an eps grid");
    }
    if (eps_policy.mode == EpsPolicy::Mode::fixed && !(eps_policy.value > 0.0)) {
        throw InvalidArgument("select_bandwidth: fixed eps must be positive");
    }

    const Matrix w = loo_log_weights(s.draws, data, prior, threads);
    CVReport report;
    report.kind = CVKind::bandwidth;
    std::vector<Vector> per_obs;
    for (Index k : grid.bandwidth_values) {
        std::vector<double> eps_values;
        switch (eps_policy.mode) {
            case EpsPolicy::Mode::cross_validate: eps_values = grid.epsilon_values; break;
            case EpsPolicy::Mode::theoretical: eps_values = {default_epsilon(k, p, n)}; break;
            case EpsPolicy::Mode::fixed: eps_values = {eps_policy.value}; break;
        }
        const Matrix terms = log_predictive_terms(s.draws, data, k, eps_values, w, threads);
        std::vector<double> eps_scores;
        for (Index e = 0; e < terms.rows(); ++e) eps_scores.push_back(terms.row(e).sum());
        const std::size_t best = argmax_first(eps_scores);
        report.candidates.push_back(static_cast<double>(k));
        report.scores.push_back(eps_scores[best]);
        report.resolved_eps.push_back(eps_values[best]);
        per_obs.push_back(terms.row(static_cast<Index>(best)).transpose());
    }
    report.selected_index = argmax_first(report.scores);
    report.selected = report.candidates[report.selected_index];
    const Vector& best = per_obs[report.selected_index];
    report.per_observation_terms.assign(best.data(), best.data() + best.size());
    return report;
}

double frequentist_loo_score(const FrequentistEstimator& estimator, const DataMatrix& data, double tuning) {
    const Index n = data.rows();
    if (n < 2) throw InvalidArgument("frequentist_loo_score: need at least two observations");
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
        CovarianceMatrix fit;
        try {
            fit = estimator(drop_row(data, i), tuning);
        } catch (const std::exception& e) {
            throw FoldFailure(e.what(), static_cast<std::size_t>(i));
        }
        Eigen::LLT<Matrix> llt(fit);
        if (llt.info() != Eigen::Success || !fit.allFinite()) {
            throw FoldFailure("estimator returned a non-positive-definite matrix", static_cast<std::size_t>(i));
        }
        total += mvn_log_density(data.row(i).transpose(), llt);
    }
    return total;
}

CVReport select_frequentist(const FrequentistEstimator& estimator, const DataMatrix& data,
                            const std::vector<double>& candidates) {
    if (candidates.empty()) throw InvalidArgument("select_frequentist: no candidates");
    CVReport report;
    report.kind = CVKind::frequentist;
    report.candidates = candidates;
    for (double t : candidates) report.scores.push_back(frequentist_loo_score(estimator, data, t));
    report.selected_index = argmax_first(report.scores);
    report.selected = candidates[report.selected_index];
    return report;
}

}  // namespace bandppp
