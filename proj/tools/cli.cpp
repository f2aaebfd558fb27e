#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "bandppp/errors.hpp"
#include "bandppp/harness.hpp"
#include "bandppp/io.hpp"
#include "bandppp/parallel.hpp"

namespace bandppp::cli {

namespace fs = std::filesystem;

namespace {

constexpr int kUsageError = 2;
constexpr int kNumericError = 3;

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return ss.str();
}

double parse_positive(const std::string& text, const std::string& flag) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != text.size() || !(v > 0.0)) throw InvalidArgument(flag + ": expected a positive number, 'cv' or 'theoretical'");
    return v;
}

// Shared tuning flags of fit, predict and cv.
struct TuningFlags {
    std::string bandwidth = "cv";
    std::string eps = "cv";
    std::size_t samples = 500;
    std::uint64_t seed = 20240521;
    std::vector<double> grid_eps;
    std::vector<Index> grid_k;
    std::size_t threads = 0;
    double tol = 1e-8;
    std::size_t max_iter = 500;

    void attach(CLI::App* app, bool with_bandwidth = true) {
        if (with_bandwidth) app->add_option("--bandwidth", bandwidth, "bandwidth k, or 'cv'")->capture_default_str();
        app->add_option("--eps", eps, "eigenvalue floor / ridge: a number, 'cv' or 'theoretical'")
            ->capture_default_str();
        app->add_option("--samples", samples, "posterior draws")->capture_default_str()->check(CLI::PositiveNumber);
        app->add_option("--seed", seed, "root seed")->capture_default_str();
        app->add_option("--grid-eps", grid_eps, "eps candidates")->delimiter(',');
        app->add_option("--grid-k", grid_k, "bandwidth candidates")->delimiter(',');
        app->add_option("--threads", threads, "worker threads (0 = all cores)")->capture_default_str();
        app->add_option("--tol", tol, "solver tolerance")->capture_default_str();
        app->add_option("--max-iter", max_iter, "solver sweep cap")->capture_default_str();
    }

    FitSettings settings(EstimatorId id) const {
        FitSettings s;
        if (bandwidth != "cv") {
            std::size_t used = 0;
            long k = -1;
            try {
                k = std::stol(bandwidth, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != bandwidth.size() || k < 0) throw InvalidArgument("--bandwidth: expected a nonnegative integer or 'cv'");
            s.bandwidth = static_cast<Index>(k);
        }
        const bool frequentist = id == EstimatorId::dual_mle || id == EstimatorId::mle_icf;
        if (eps == "cv") {
            s.eps_policy = EpsPolicy::cross_validated();
        } else if (eps == "theoretical") {
            if (frequentist) throw InvalidArgument("--eps theoretical applies to ppp only");
            s.eps_policy = EpsPolicy::theoretical_default();
        } else {
            const double v = parse_positive(eps, "--eps");
            s.eps_policy = EpsPolicy::fixed_value(v);
            s.freq_eps = v;
        }
        s.grid.epsilon_values = grid_eps;
        s.grid.bandwidth_values = grid_k;
        s.grid.validate();
        s.posterior_draws = samples;
        s.seed = seed;
        s.threads = threads;
        s.solver.tol = tol;
        s.solver.max_iter = max_iter;
        return s;
    }
};

const std::vector<std::string> kFitMethods = {"ppp", "dual-ppp", "banded-sample", "dual-mle", "mle-icf", "sample",
                                              "iw-posterior"};

json fit_manifest(const std::string& method, const DatasetFit& fit, const TuningFlags& flags, const DataMatrix& data,
                  const std::string& started) {
    const Index p = data.cols();
    return {{"method", method},
            {"bandwidth", fit.bandwidth},
            {"eps", fit.eps},
            {"seed", flags.seed},
            {"n", data.rows()},
            {"p", p},
            {"samples", flags.samples},
            {"prior", {{"scale", "identity"}, {"nu", default_prior(p).df}}},
            {"timestamps", {{"started", started}, {"finished", utc_now()}}}};
}

int cmd_fit(const std::string& data_path, const std::string& method, const TuningFlags& flags,
            const std::string& out_dir, bool center, bool save_samples, std::ostream& out) {
    const std::string started = utc_now();
    DataMatrix data = read_csv_matrix(data_path);
    if (center) data.rowwise() -= data.colwise().mean();
    const EstimatorId id = parse_estimator(method);
    const DatasetFit fit = fit_dataset(id, data, flags.settings(id));
    fs::create_directories(out_dir);
    write_csv_matrix(fs::path(out_dir) / "estimate.csv", fit.estimate);
    if (save_samples && fit.samples) save_sample_set(fs::path(out_dir) / "samples", *fit.samples);
    write_text(fs::path(out_dir) / "manifest.json", fit_manifest(method, fit, flags, data, started).dump(2) + "\n");
    out << "wrote " << (fs::path(out_dir) / "estimate.csv").string() << " (k = " << fit.bandwidth
        << ", eps = " << fit.eps << ")\n";
    return 0;
}

struct PredictFlags {
    std::string data;
    Index split = 0;
    std::optional<Index> train;
    bool counts = false;
    std::string method = "ppp";
    std::string samples_dir;
    double level = 0.95;
    std::string out;
};

int cmd_predict(const PredictFlags& pf, const TuningFlags& flags, std::ostream& out) {
    const Matrix raw = read_csv_matrix(pf.data);
    const Index n = raw.rows();
    const Index p = raw.cols();
    if (pf.split < 1 || pf.split >= p) {
        throw InvalidArgument("--split must satisfy 1 <= M < p (p = " + std::to_string(p) + ")");
    }
    const Index train_rows = pf.train.value_or(std::max<Index>(1, (n * 6) / 7));
    if (train_rows < 1 || train_rows >= n) throw InvalidArgument("--train must leave at least one test row");
    DataMatrix x;
    if (pf.counts) {
        x = transform_counts(raw, train_rows);
    } else {
        x = raw;
        x.rowwise() -= x.topRows(train_rows).colwise().mean();
    }
    const PredictionTask task(pf.split, x.topRows(train_rows), x.bottomRows(n - train_rows));

    json report = {{"split", pf.split}, {"train_rows", train_rows}, {"test_rows", n - train_rows}};
    CovarianceMatrix estimate;
    std::optional<PosteriorSampleSet> samples;
    if (!pf.samples_dir.empty()) {
        samples = load_sample_set(pf.samples_dir);
        if (samples->dim() != p) throw InvalidArgument("--samples-dir: draw dimension does not match data");
        estimate = posterior_mean(*samples);
        report["method"] = "samples:" + describe(samples->descriptor);
    } else {
        const EstimatorId id = parse_estimator(pf.method);
        DatasetFit fit = fit_dataset(id, task.train, flags.settings(id));
        estimate = std::move(fit.estimate);
        samples = std::move(fit.samples);
        report["method"] = pf.method;
        report["bandwidth"] = fit.bandwidth;
        report["eps"] = fit.eps;
        report["seed"] = flags.seed;
    }
    const Matrix predicted = predict_tail_rows(estimate, task);
    const Matrix observed = task.test.rightCols(p - pf.split);
    report["mse"] = prediction_mse(predicted, observed);
    const fs::path dir(pf.out);
    fs::create_directories(dir);
    write_csv_matrix(dir / "predictions.csv", predicted);
    if (samples) {
        const TailIntervals iv = predict_tail_intervals(*samples, task, pf.level);
        write_csv_matrix(dir / "lower.csv", iv.lower);
        write_csv_matrix(dir / "upper.csv", iv.upper);
        const auto inside = ((observed.array() >= iv.lower.array()) && (observed.array() <= iv.upper.array())).count();
        report["level"] = pf.level;
        report["pointwise_coverage"] = static_cast<double>(inside) / static_cast<double>(observed.size());
    }
    write_text(dir / "report.json", report.dump(2) + "\n");
    out << "prediction MSE " << report["mse"].get<double>() << "\n";
    return 0;
}

int cmd_cv(const std::string& data_path, const TuningFlags& flags, const std::string& out_file, bool center,
           std::ostream& out) {
    DataMatrix data = read_csv_matrix(data_path);
    if (center) data.rowwise() -= data.colwise().mean();
    const Index p = data.cols();
    const FitSettings s = flags.settings(EstimatorId::ppp);
    CVGrid grid = CVGrid::defaults(p);
    if (!s.grid.epsilon_values.empty()) grid.epsilon_values = s.grid.epsilon_values;
    if (!s.grid.bandwidth_values.empty()) grid.bandwidth_values = s.grid.bandwidth_values;
    for (Index k : grid.bandwidth_values) {
        if (k > p - 1) throw InvalidArgument("--grid-k: bandwidth " + std::to_string(k) + " exceeds p - 1");
    }
    const std::size_t threads = s.threads == 0 ? default_thread_count() : s.threads;
    const IWParams prior = default_prior(p);
    const PosteriorSampleSet draws =
        draw_initial_samples(conjugate_update(prior, data), s.posterior_draws, SeedSpec{s.seed, 0}.substream(1), threads);
    json result;
    Index k = 0;
    if (s.bandwidth) {
        k = *s.bandwidth;
    } else {
        const CVReport bw = select_bandwidth(draws, data, grid, prior, s.eps_policy, threads);
        result["bandwidth"] = to_json(bw);
        k = static_cast<Index>(bw.selected);
    }
    const CVReport eps = select_epsilon(draws, data, BandSpec(k, p), grid, prior, threads);
    result["epsilon"] = to_json(eps);
    result["selected"] = {{"bandwidth", k}, {"eps", eps.selected}};
    result["seed"] = s.seed;
    result["samples"] = s.posterior_draws;
    const fs::path path(out_file);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_text(path, result.dump(2) + "\n");
    out << "selected k = " << k << ", eps = " << eps.selected << "\n";
    return 0;
}

Functional functional_from_name(const std::string& name) {
    if (name == "conditional-mean") return conditional_mean_functional();
    if (name == "log-det") return log_det_functional();
    if (name.rfind("entry:", 0) == 0) {
        int i = -1;
        int j = -1;
        char sep = 0;
        std::istringstream ss(name.substr(6));
        if (ss >> i >> sep >> j && sep == ':' && ss.peek() == EOF && i >= 0 && j >= 0) return entry_functional(i, j);
    }
    throw InvalidArgument("config: functional must be 'conditional-mean', 'log-det' or 'entry:i:j'");
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir, std::optional<std::size_t> threads,
                 std::ostream& out) {
    json j;
    try {
        j = json::parse(read_text(config_path));
    } catch (const json::parse_error& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
    ExperimentConfig config = experiment_config_from_json(j);
    if (threads) config.threads = *threads;
    const std::string kind = j.value("experiment", std::string("point"));
    ExperimentResult result;
    std::string table;
    if (kind == "point") {
        result = run_point_estimation(config);
        table = point_table_csv(result);
    } else if (kind == "interval") {
        result = run_interval_experiment(config, functional_from_name(j.value("functional", std::string("conditional-mean"))));
        table = interval_table_csv(result);
    } else if (kind == "timing") {
        result = timing_summary(config);
        table = timing_table_csv(result);
    } else {
        throw InvalidArgument("config: experiment must be 'point', 'interval' or 'timing'");
    }
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    json echo = to_json(config);
    echo["experiment"] = kind;
    if (j.contains("functional")) echo["functional"] = j.at("functional");
    write_text(dir / "config.json", echo.dump(2) + "\n");
    write_text(dir / "result.json", to_json(result).dump(2) + "\n");
    write_text(dir / "table.csv", table);
    out << table;
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Post-processed posterior estimation of banded covariance matrices", "bandppp"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "show help for every subcommand");

    TuningFlags tuning;

    auto* simulate = app.add_subcommand("simulate", "run a Monte Carlo experiment from a JSON config");
    std::string config_path;
    std::string sim_out;
    std::optional<std::size_t> sim_threads;
    simulate->add_option("--config", config_path, "experiment config JSON")->required();
    simulate->add_option("--out", sim_out, "output directory")->required();
    simulate->add_option("--threads", sim_threads, "override the config thread count");

    auto* fit = app.add_subcommand("fit", "estimate a banded covariance from a data CSV");
    std::string fit_data;
    std::string fit_method = "ppp";
    std::string fit_out;
    bool fit_center = false;
    bool save_samples = false;
    fit->add_option("--data", fit_data, "data CSV (rows = observations)")->required();
    fit->add_option("--method", fit_method, "estimator")->check(CLI::IsMember(kFitMethods))->capture_default_str();
    fit->add_option("--out", fit_out, "output directory")->required();
    fit->add_flag("--center", fit_center, "center columns before fitting");
    fit->add_flag("--save-samples", save_samples, "also write processed posterior draws");
    tuning.attach(fit);

    auto* predict = app.add_subcommand("predict", "predict trailing coordinates from leading ones");
    PredictFlags pf;
    predict->add_option("--data", pf.data, "data CSV (rows = observations)")->required();
    predict->add_option("--split", pf.split, "number of observed leading coordinates M")->required();
    predict->add_option("--train", pf.train, "training rows (default: first 6/7 of rows)");
    predict->add_flag("--counts", pf.counts, "data are raw counts; apply sqrt(N + 1/4) first");
    predict->add_option("--method", pf.method, "estimator")->check(CLI::IsMember(kFitMethods))->capture_default_str();
    predict->add_option("--samples-dir", pf.samples_dir, "posterior-sample directory written by fit --save-samples");
    predict->add_option("--level", pf.level, "interval level")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    predict->add_option("--out", pf.out, "output directory")->required();
    tuning.attach(predict);

    auto* cv = app.add_subcommand("cv", "cross-validate bandwidth and eigenvalue floor");
    std::string cv_data;
    std::string cv_out;
    bool cv_center = false;
    cv->add_option("--data", cv_data, "data CSV (rows = observations)")->required();
    cv->add_option("--out", cv_out, "output JSON file")->required();
    cv->add_flag("--center", cv_center, "center columns first");
    tuning.attach(cv);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        err << app.help();
        return kUsageError;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(config_path, sim_out, sim_threads, out);
        if (fit->parsed()) return cmd_fit(fit_data, fit_method, tuning, fit_out, fit_center, save_samples, out);
        if (predict->parsed()) return cmd_predict(pf, tuning, out);
        if (cv->parsed()) return cmd_cv(cv_data, tuning, cv_out, cv_center, out);
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const InvalidState& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const json::exception& e) {
        err << "config error: " << e.what() << "\n";
        return kUsageError;
    } catch (const ConvergenceError& e) {
        err << "convergence failure: " << e.what() << " (residual " << e.residual() << " after " << e.iterations()
            << " sweeps)\n";
        return kNumericError;
    } catch (const std::exception& e) {
        err << "numeric failure: " << e.what() << "\n";
        return kNumericError;
    }
    return kUsageError;
}

}  // namespace bandppp::cli
