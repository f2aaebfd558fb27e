#include "bandppp/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>

#include "bandppp/estimators.hpp"
#include "bandppp/parallel.hpp"

namespace bandppp {

void TrueCovSpec::validate() const {
    if (p < 2) throw InvalidArgument("TrueCovSpec: p must be at least 2");
    if (k0 < 0 || k0 > p - 1) throw InvalidArgument("TrueCovSpec: k0 must lie in [0, p - 1]");
    if (!(rho > -1.0 && rho < 1.0)) throw InvalidArgument("TrueCovSpec: rho must lie in (-1, 1)");
    if (!(lambda_floor > 0.0)) throw InvalidArgument("TrueCovSpec: lambda_floor must be positive");
}

std::string TrueCovSpec::label() const { return to_string(kind); }

namespace {

CovarianceMatrix shift_to_floor(const Matrix& m, double floor) {
    Matrix out = m;
    out.diagonal().array() += floor - min_eigenvalue(m);
    return out;
}

}  // namespace

CovarianceMatrix make_sigma1(const TrueCovSpec& spec) {
    spec.validate();
    Matrix raw(spec.p, spec.p);
    for (Index j = 0; j < spec.p; ++j) {
        for (Index i = 0; i < spec.p; ++i) {
            const double d = static_cast<double>(std::abs(i - j));
            raw(i, j) = i == j ? 1.0 : spec.rho * std::pow(d, -(spec.alpha_decay + 1.0));
        }
    }
    return shift_to_floor(band(raw, spec.k0), spec.lambda_floor);
}

CovarianceMatrix make_sigma2(const TrueCovSpec& spec) {
    spec.validate();
    Matrix raw(spec.p, spec.p);
    const double width = static_cast<double>(spec.k0 + 1);
    for (Index j = 0; j < spec.p; ++j) {
        for (Index i = 0; i < spec.p; ++i) {
            raw(i, j) = std::max(1.0 - static_cast<double>(std::abs(i - j)) / width, 0.0);
        }
    }
    return shift_to_floor(raw, spec.lambda_floor);
}

CovarianceMatrix make_sigma3(const TrueCovSpec& spec) {
    spec.validate();
    Rng rng(SeedSpec{spec.seed, 0});
    Matrix l = Matrix::Identity(spec.p, spec.p);
    for (Index i = 0; i < spec.p; ++i) {
        for (Index j = std::max<Index>(0, i - spec.k0); j < i; ++j) l(i, j) = rng.normal();
    }
    Vector d(spec.p);
    // Inverse-gamma(shape 5, scale 1): reciprocal of Gamma(shape 5, scale 1).
    for (Index i = 0; i < spec.p; ++i) d(i) = 1.0 / rng.gamma(5.0, 1.0);
    Matrix raw = l * d.asDiagonal() * l.transpose();
    raw = band((raw + raw.transpose()) / 2.0, spec.k0);
    return shift_to_floor(raw, spec.lambda_floor);
}

CovarianceMatrix make_true_cov(const TrueCovSpec& spec) {
    switch (spec.kind) {
        case TrueCovKind::sigma1: return make_sigma1(spec);
        case TrueCovKind::sigma2: return make_sigma2(spec);
        case TrueCovKind::sigma3: return make_sigma3(spec);
    }
    throw InvalidArgument("make_true_cov: unknown kind");
}

std::string to_string(EstimatorId id) {
    switch (id) {
        case EstimatorId::ppp: return "ppp";
        case EstimatorId::dual_ppp: return "dual-ppp";
        case EstimatorId::iw_posterior: return "iw-posterior";
        case EstimatorId::banded_sample: return "banded-sample";
        case EstimatorId::sample: return "sample";
        case EstimatorId::dual_mle: return "dual-mle";
        case EstimatorId::mle_icf: return "mle-icf";
        case EstimatorId::oracle: return "oracle";
    }
    return "unknown";
}

EstimatorId parse_estimator(const std::string& name) {
    static const std::map<std::string, EstimatorId> registry = {
        {"ppp", EstimatorId::ppp},
        {"dual-ppp", EstimatorId::dual_ppp},
        {"iw-posterior", EstimatorId::iw_posterior},
        {"banded-sample", EstimatorId::banded_sample},
        {"sample", EstimatorId::sample},
        {"dual-mle", EstimatorId::dual_mle},
        {"mle-icf", EstimatorId::mle_icf},
        {"oracle", EstimatorId::oracle},
    };
    const auto it = registry.find(name);
    if (it == registry.end()) throw InvalidArgument("unknown estimator '" + name + "'");
    return it->second;
}

std::string to_string(TrueCovKind kind) {
    switch (kind) {
        case TrueCovKind::sigma1: return "sigma1";
        case TrueCovKind::sigma2: return "sigma2";
        case TrueCovKind::sigma3: return "sigma3";
    }
    return "unknown";
}

TrueCovKind parse_true_cov_kind(const std::string& name) {
    if (name == "sigma1") return TrueCovKind::sigma1;
    if (name == "sigma2") return TrueCovKind::sigma2;
    if (name == "sigma3") return TrueCovKind::sigma3;
    throw InvalidArgument("unknown true covariance kind '" + name + "'");
}

void ExperimentConfig::validate() const {
    if (truths.empty()) throw InvalidArgument("ExperimentConfig: no true covariances");
    for (const auto& t : truths) t.validate();
    if (n_values.empty()) throw InvalidArgument("ExperimentConfig: no sample sizes");
    for (Index n : n_values) {
        if (n < 2) throw InvalidArgument("ExperimentConfig: sample sizes must be at least 2");
    }
    if (replications < 1) throw InvalidArgument("ExperimentConfig: replications must be at least 1");
    if (estimators.empty()) throw InvalidArgument("ExperimentConfig: no estimators");
    if (posterior_draws < 1) throw InvalidArgument("ExperimentConfig: posterior_draws must be positive");
    if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("ExperimentConfig: level must lie in (0, 1)");
    if (freq_eps && !(*freq_eps > 0.0)) throw InvalidArgument("ExperimentConfig: freq_eps must be positive");
    grid.validate();
}

TimingSummary summarize_timings(const std::vector<double>& seconds) {
    TimingSummary t;
    if (seconds.empty()) return t;
    std::vector<double> v = seconds;
    std::sort(v.begin(), v.end());
    auto q = [&](double prob) {
        const double h = static_cast<double>(v.size() - 1) * prob;
        const auto lo = static_cast<std::size_t>(std::floor(h));
        if (lo + 1 >= v.size()) return v.back();
        return v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
    };
    t.q1 = q(0.25);
    t.median = q(0.5);
    t.q3 = q(0.75);
    for (double s : v) t.total += s;
    t.mean = t.total / static_cast<double>(v.size());
    return t;
}

const CellResult* ExperimentResult::find(const std::string& truth, Index n, EstimatorId id) const {
    for (const auto& c : cells) {
        if (c.truth == truth && c.n == n && c.estimator == id) return &c;
    }
    return nullptr;
}

void summarize_cell(CellResult& cell, const std::string& kind) {
    cell.failures = 0;
    double err = 0.0, len = 0.0, ploss = 0.0, ploss_sq = 0.0;
    std::size_t covered = 0, ok = 0;
    std::vector<double> secs;
    for (const auto& r : cell.records) {
        if (r.failed) {
            ++cell.failures;
            continue;
        }
        ++ok;
        err += r.spectral_error;
        len += r.upper - r.lower;
        ploss += r.ploss;
        ploss_sq += r.ploss_sq;
        if (r.covered) ++covered;
        secs.push_back(r.seconds);
    }
    const double denom = ok > 0 ? static_cast<double>(ok) : std::nan("");
    cell.mean_error = kind == "interval" ? 0.0 : err / denom;
    cell.coverage = kind == "interval" ? static_cast<double>(covered) / denom : 0.0;
    cell.mean_length = kind == "interval" ? len / denom : 0.0;
    cell.mean_ploss = ploss / denom;
    cell.mean_ploss_sq = ploss_sq / denom;
    cell.incomplete = static_cast<double>(cell.failures) > 0.05 * static_cast<double>(cell.records.size());
    cell.timing = summarize_timings(secs);
}

double posterior_ploss(const PosteriorSampleSet& s, const CovarianceMatrix& truth) {
    if (s.draws.empty()) throw InvalidArgument("posterior_ploss: empty sample set");
    double acc = 0.0;
    for (const auto& d : s.draws) {
        if (d.rows() != truth.rows()) throw InvalidArgument("posterior_ploss: dimension mismatch");
        acc += spectral_norm(Matrix(truth - d));
    }
    return acc / static_cast<double>(s.draws.size());
}

double posterior_ploss_squared(const PosteriorSampleSet& s, const CovarianceMatrix& truth) {
    if (s.draws.empty()) throw InvalidArgument("posterior_ploss_squared: empty sample set");
    double acc = 0.0;
    for (const auto& d : s.draws) {
        const double e = spectral_norm(Matrix(truth - d));
        acc += e * e;
    }
    return acc / static_cast<double>(s.draws.size());
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

bool is_posterior_based(EstimatorId id) {
    return id == EstimatorId::ppp || id == EstimatorId::dual_ppp || id == EstimatorId::iw_posterior;
}

// Everything one replication needs to fit any registered estimator.
struct Replication {
    const ExperimentConfig& config;
    const CovarianceMatrix& truth;
    Index k0;
    DataMatrix data;
    SeedSpec seed;
    CVGrid grid;
    IWParams prior;
    std::optional<PosteriorSampleSet> initial;
    double draw_seconds = 0.0;
    std::size_t threads = 1;

    const PosteriorSampleSet& draws() {
        if (!initial) {
            const auto start = Clock::now();
            initial = draw_initial_samples(conjugate_update(prior, data), config.posterior_draws, seed.substream(1),
                                           threads);
            draw_seconds = seconds_since(start);
        }
        return *initial;
    }
};

struct Fit {
    CovarianceMatrix estimate;
    std::optional<PosteriorSampleSet> processed;
    double eps = 0.0;
    Index k = 0;
};

Index p_of(const Replication& rep) { return rep.data.cols(); }

// Bandwidth and eps for the banding post-processing.
std::pair<Index, double> resolve_ppp_tuning(Replication& rep) {
    const auto& cfg = rep.config;
    const Index p = p_of(rep);
    const Index n = rep.data.rows();
    if (cfg.bandwidth_policy == BandwidthPolicy::cross_validate) {
        const CVReport r = select_bandwidth(rep.draws(), rep.data, rep.grid, rep.prior, cfg.eps_policy, rep.threads);
        return {static_cast<Index>(r.selected), r.resolved_eps[r.selected_index]};
    }
    const Index k = rep.k0;
    switch (cfg.eps_policy.mode) {
        case EpsPolicy::Mode::cross_validate:
            return {k, select_epsilon(rep.draws(), rep.data, BandSpec(k, p), rep.grid, rep.prior, rep.threads).selected};
        case EpsPolicy::Mode::theoretical: return {k, default_epsilon(k, p, n)};
        case EpsPolicy::Mode::fixed: return {k, cfg.eps_policy.value};
    }
    return {k, 0.0};
}

Index resolve_bayes_bandwidth(Replication& rep) {
    if (rep.config.bandwidth_policy == BandwidthPolicy::known) return rep.k0;
    return resolve_ppp_tuning(rep).first;
}

FrequentistEstimator ridge_solver(EstimatorId id, Index k, const SolverOptions& opts) {
    return [id, k, opts](const DataMatrix& x, double eps) {
        const CovarianceMatrix s = ridge_adjusted_cov(x, eps);
        const BandSpec spec(k, s.rows());
        return id == EstimatorId::dual_mle ? dual_mle(s, spec, opts) : mle_icf(s, spec, opts);
    };
}

// Like select_frequentist, but a candidate whose refits fail scores -inf.
CVReport select_frequentist_tolerant(const FrequentistEstimator& est, const DataMatrix& data,
                                     const std::vector<double>& candidates) {
    CVReport report;
    report.kind = CVKind::frequentist;
    report.candidates = candidates;
    bool any = false;
    for (double c : candidates) {
        try {
            report.scores.push_back(frequentist_loo_score(est, data, c));
            any = true;
        } catch (const FoldFailure&) {
            report.scores.push_back(-std::numeric_limits<double>::infinity());
        }
    }
    if (!any) throw NumericError("frequentist cross-validation: every candidate failed");
    report.selected_index = 0;
    for (std::size_t j = 1; j < report.scores.size(); ++j) {
        if (report.scores[j] > report.scores[report.selected_index]) report.selected_index = j;
    }
    report.selected = candidates[report.selected_index];
    return report;
}

Index resolve_freq_bandwidth(Replication& rep, const FrequentistEstimator& est_for_k) {
    if (rep.config.bandwidth_policy == BandwidthPolicy::known) return rep.k0;
    std::vector<double> ks(rep.grid.bandwidth_values.begin(), rep.grid.bandwidth_values.end());
    return static_cast<Index>(select_frequentist_tolerant(est_for_k, rep.data, ks).selected);
}

Fit fit_estimator(EstimatorId id, Replication& rep) {
    const auto& cfg = rep.config;
    const Index p = p_of(rep);
    Fit fit;
    switch (id) {
        case EstimatorId::oracle:
            fit.estimate = rep.truth;
            fit.k = rep.k0;
            break;
        case EstimatorId::sample:
            fit.estimate = sample_cov(rep.data);
            fit.k = p - 1;
            break;
        case EstimatorId::banded_sample: {
            fit.k = resolve_freq_bandwidth(rep, [](const DataMatrix& x, double k) {
                return banded_sample_cov(x, BandSpec(static_cast<Index>(k), x.cols()));
            });
            fit.estimate = banded_sample_cov(rep.data, BandSpec(fit.k, p));
            break;
        }
        case EstimatorId::iw_posterior:
            fit.estimate = iw_mean(rep.draws().posterior);
            fit.processed = rep.draws();
            fit.k = p - 1;
            break;
        case EstimatorId::ppp: {
            const auto [k, eps] = resolve_ppp_tuning(rep);
            fit.k = k;
            fit.eps = eps;
            fit.processed = banding_post_process(rep.draws(), BandSpec(k, p), eps, rep.threads);
            fit.estimate = posterior_mean(*fit.processed);
            break;
        }
        case EstimatorId::dual_ppp: {
            fit.k = resolve_bayes_bandwidth(rep);
            fit.processed = dual_post_process(rep.draws(), BandSpec(fit.k, p), cfg.solver.tol, rep.threads);
            fit.estimate = posterior_mean(*fit.processed);
            break;
        }
        case EstimatorId::dual_mle:
        case EstimatorId::mle_icf: {
            const double eps_for_k = cfg.freq_eps.value_or(rep.grid.epsilon_values.back());
            fit.k = resolve_freq_bandwidth(rep, [&](const DataMatrix& x, double k) {
                return ridge_solver(id, static_cast<Index>(k), cfg.solver)(x, eps_for_k);
            });
            const auto solver = ridge_solver(id, fit.k, cfg.solver);
            fit.eps = cfg.freq_eps ? *cfg.freq_eps
                                   : select_frequentist_tolerant(solver, rep.data, rep.grid.epsilon_values).selected;
            fit.estimate = solver(rep.data, fit.eps);
            break;
        }
    }
    return fit;
}

CVGrid resolve_grid(const CVGrid& configured, Index p) {
    CVGrid g = CVGrid::defaults(p);
    if (!configured.epsilon_values.empty()) g.epsilon_values = configured.epsilon_values;
    if (!configured.bandwidth_values.empty()) {
        g.bandwidth_values.clear();
        for (Index k : configured.bandwidth_values) {
            if (k <= p - 1) g.bandwidth_values.push_back(k);
        }
    }
    return g;
}

struct CellKey {
    std::size_t truth;
    std::size_t n;
};

// Runs `per_replication` for every (truth, n, replication) and assembles one
// cell per estimator in (truth, n, estimator) order.
template <typename PerReplication>
ExperimentResult run_cells(const ExperimentConfig& config, const std::string& kind, PerReplication&& per_replication) {
    config.validate();
    std::vector<CovarianceMatrix> truths;
    for (std::size_t t = 0; t < config.truths.size(); ++t) {
        TrueCovSpec spec = config.truths[t];
        if (spec.kind == TrueCovKind::sigma3 && spec.seed == 0) spec.seed = splitmix64(config.seed + t);
        truths.push_back(make_true_cov(spec));
    }

    std::vector<CellKey> keys;
    for (std::size_t t = 0; t < config.truths.size(); ++t) {
        for (std::size_t ni = 0; ni < config.n_values.size(); ++ni) keys.push_back({t, ni});
    }
    const std::size_t reps = config.replications;
    const std::size_t n_est = config.estimators.size();
    // records[(cell * reps + r) * n_est + e]
    std::vector<ReplicationRecord> records(keys.size() * reps * n_est);

    parallel_for(
        keys.size() * reps,
        [&](std::size_t job) {
            const CellKey key = keys[job / reps];
            const std::size_t r = job % reps;
            const TrueCovSpec& spec = config.truths[key.truth];
            const CovarianceMatrix& truth = truths[key.truth];
            const Index n = config.n_values[key.n];
            const SeedSpec rep_seed =
                SeedSpec{config.seed, 0}.substream(key.truth * 1000 + key.n).substream(r);
            Replication rep{config,
                            truth,
                            spec.k0,
                            sample_mvn(truth, n, rep_seed.substream(0)),
                            rep_seed,
                            resolve_grid(config.grid, spec.p),
                            default_prior(spec.p),
                            std::nullopt,
                            0.0};
            per_replication(rep, r, &records[job * n_est]);
        },
        config.threads);

    ExperimentResult result;
    result.kind = kind;
    for (std::size_t c = 0; c < keys.size(); ++c) {
        for (std::size_t e = 0; e < n_est; ++e) {
            CellResult cell;
            cell.truth = config.truths[keys[c].truth].label();
            cell.n = config.n_values[keys[c].n];
            cell.estimator = config.estimators[e];
            for (std::size_t r = 0; r < reps; ++r) cell.records.push_back(records[(c * reps + r) * n_est + e]);
            summarize_cell(cell, kind);
            result.cells.push_back(std::move(cell));
        }
    }
    return result;
}

void record_failure(ReplicationRecord& rec, const std::exception& e) {
    rec.failed = true;
    rec.error = e.what();
}

}  // namespace

ExperimentResult run_point_estimation(const ExperimentConfig& config) {
    return run_cells(config, "point", [&](Replication& rep, std::size_t r, ReplicationRecord* out) {
        for (std::size_t e = 0; e < config.estimators.size(); ++e) {
            const EstimatorId id = config.estimators[e];
            ReplicationRecord& rec = out[e];
            rec.replication = r;
            try {
                const auto start = Clock::now();
                const bool needed_draws = is_posterior_based(id) && !rep.initial;
                Fit fit = fit_estimator(id, rep);
                rec.seconds = seconds_since(start);
                // Shared initial draws are charged to every posterior-based estimator.
                if (is_posterior_based(id) && !needed_draws) rec.seconds += rep.draw_seconds;
                rec.spectral_error = spectral_norm(Matrix(rep.truth - fit.estimate));
                rec.eps = fit.eps;
                rec.bandwidth = fit.k;
                if (config.record_ploss && fit.processed) {
                    rec.ploss = posterior_ploss(*fit.processed, rep.truth);
                    rec.ploss_sq = posterior_ploss_squared(*fit.processed, rep.truth);
                }
            } catch (const std::exception& ex) {
                record_failure(rec, ex);
            }
        }
    });
}

ExperimentResult run_interval_experiment(const ExperimentConfig& config, const Functional& functional) {
    return run_cells(config, "interval", [&](Replication& rep, std::size_t r, ReplicationRecord* out) {
        const Index p = p_of(rep);
        const Vector x_head = sample_mvn(rep.truth, 1, rep.seed.substream(2)).row(0).head(p - 1).transpose();
        const double truth_value = functional(rep.truth, x_head);
        for (std::size_t e = 0; e < config.estimators.size(); ++e) {
            const EstimatorId id = config.estimators[e];
            ReplicationRecord& rec = out[e];
            rec.replication = r;
            rec.truth_value = truth_value;
            try {
                const auto start = Clock::now();
                IntervalEstimate iv;
                if (id == EstimatorId::oracle) {
                    iv = {truth_value, truth_value, config.level, IntervalMethod::quantile};
                } else if (id == EstimatorId::mle_icf) {
                    Fit fit = fit_estimator(id, rep);
                    rec.eps = fit.eps;
                    rec.bandwidth = fit.k;
                    iv = delta_method_ci(fit.estimate, BandIndexMap(p, fit.k), rep.data.rows(), functional,
                                         config.level, x_head);
                } else if (is_posterior_based(id)) {
                    Fit fit = fit_estimator(id, rep);
                    rec.eps = fit.eps;
                    rec.bandwidth = fit.k;
                    std::vector<double> values;
                    values.reserve(fit.processed->size());
                    for (const auto& d : fit.processed->draws) values.push_back(functional(d, x_head));
                    iv = config.credible_method == IntervalMethod::hpd ? hpd_interval(values, config.level)
                                                                       : quantile_credible_interval(values, config.level);
                } else {
                    throw InvalidArgument("estimator '" + to_string(id) + "' has no interval method");
                }
                rec.seconds = seconds_since(start);
                rec.lower = iv.lower;
                rec.upper = iv.upper;
                rec.covered = iv.contains(truth_value);
            } catch (const std::exception& ex) {
                record_failure(rec, ex);
            }
        }
    });
}

ExperimentResult timing_summary(const ExperimentConfig& config) {
    ExperimentResult r = run_point_estimation(config);
    r.kind = "timing";
    return r;
}

DatasetFit fit_dataset(EstimatorId id, const DataMatrix& data, const FitSettings& settings) {
    const Index p = data.cols();
    if (p < 1 || data.rows() < 1) throw InvalidArgument("fit_dataset: empty data");
    require_finite(data, "fit_dataset");
    if (id == EstimatorId::oracle) throw InvalidArgument("fit_dataset: the oracle needs a known truth");
    if (settings.bandwidth && (*settings.bandwidth < 0 || *settings.bandwidth > p - 1)) {
        throw InvalidArgument("fit_dataset: bandwidth must lie in [0, p - 1]");
    }
    if (settings.posterior_draws < 1) throw InvalidArgument("fit_dataset: need at least one posterior draw");
    ExperimentConfig cfg;
    cfg.bandwidth_policy = settings.bandwidth ? BandwidthPolicy::known : BandwidthPolicy::cross_validate;
    cfg.eps_policy = settings.eps_policy;
    cfg.freq_eps = settings.freq_eps;
    cfg.posterior_draws = settings.posterior_draws;
    cfg.solver = settings.solver;
    cfg.seed = settings.seed;
    const CVGrid grid = resolve_grid(settings.grid, p);
    grid.validate();
    const CovarianceMatrix no_truth = CovarianceMatrix::Identity(p, p);
    Replication rep{cfg,  no_truth, settings.bandwidth.value_or(0), data, SeedSpec{settings.seed, 0}, grid,
                    default_prior(p), std::nullopt, 0.0, settings.threads == 0 ? default_thread_count() : settings.threads};
    Fit fit = fit_estimator(id, rep);
    return DatasetFit{std::move(fit.estimate), fit.k, fit.eps, std::move(fit.processed)};
}

}  // namespace bandppp
