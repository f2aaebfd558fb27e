#include "bandppp/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace bandppp {

namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw InvalidArgument("failed writing '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

double parse_double(std::string_view field, std::size_t line) {
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) field.remove_suffix(1);
    if (!field.empty() && field.front() == '+') field.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
        throw InvalidArgument("CSV line " + std::to_string(line) + ": cannot parse '" + std::string(field) + "'");
    }
    return value;
}

}  // namespace

Matrix parse_csv_matrix(const std::string& text) {
    std::vector<std::vector<double>> rows;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::vector<double> row;
        std::string_view rest(line);
        while (true) {
            const auto comma = rest.find(',');
            row.push_back(parse_double(rest.substr(0, comma), line_no));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw InvalidArgument("CSV line " + std::to_string(line_no) + ": ragged row");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw InvalidArgument("CSV: no data");
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    return m;
}

std::string format_csv_matrix(const Matrix& m) {
    std::string out;
    char buf[40];
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j > 0) out.push_back(',');
            std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
            out += buf;
        }
        out.push_back('\n');
    }
    return out;
}

Matrix read_csv_matrix(const fs::path& path) { return parse_csv_matrix(read_text(path)); }

void write_csv_matrix(const fs::path& path, const Matrix& m) { write_text(path, format_csv_matrix(m)); }

PredictionTask::PredictionTask(Index split_index, DataMatrix train_rows, DataMatrix test_rows)
    : split(split_index), train(std::move(train_rows)), test(std::move(test_rows)) {
    const Index p = train.cols();
    if (test.cols() != p) throw InvalidArgument("PredictionTask: train and test widths differ");
    if (split < 1 || split >= p) {
        throw InvalidArgument("PredictionTask: split must satisfy 1 <= m < p (m = " + std::to_string(split) +
                              ", p = " + std::to_string(p) + ")");
    }
}

DataMatrix transform_counts(const Matrix& raw, Index train_rows) {
    if (train_rows < 1 || train_rows > raw.rows()) throw InvalidArgument("transform_counts: invalid training row count");
    for (Index i = 0; i < raw.rows(); ++i) {
        for (Index j = 0; j < raw.cols(); ++j) {
            const double v = raw(i, j);
            if (!(v >= 0.0) || v != std::floor(v)) {
                throw InvalidArgument("transform_counts: entry (" + std::to_string(i) + "," + std::to_string(j) +
                                      ") is not a nonnegative integer count");
            }
        }
    }
    DataMatrix x = (raw.array() + 0.25).sqrt().matrix();
    const Eigen::RowVectorXd means = x.topRows(train_rows).colwise().mean();
    x.rowwise() -= means;
    return x;
}

Vector predict_tail(const CovarianceMatrix& sigma_hat, Index split, const Vector& x_obs) {
    const Index p = sigma_hat.rows();
    if (split < 1 || split >= p) throw InvalidArgument("predict_tail: split must satisfy 1 <= m < p");
    if (x_obs.size() != split) throw InvalidArgument("predict_tail: observed vector must have length m");
    Eigen::LLT<Matrix> llt(sigma_hat.topLeftCorner(split, split));
    if (llt.info() != Eigen::Success) throw NumericError("predict_tail: Sigma_11 is not positive definite");
    return sigma_hat.bottomLeftCorner(p - split, split) * llt.solve(x_obs);
}

Matrix predict_tail_rows(const CovarianceMatrix& sigma_hat, const PredictionTask& task) {
    const Index m = task.split;
    const Index p = task.p();
    if (sigma_hat.rows() != p) throw InvalidArgument("predict_tail_rows: dimension mismatch");
    Eigen::LLT<Matrix> llt(sigma_hat.topLeftCorner(m, m));
    if (llt.info() != Eigen::Success) throw NumericError("predict_tail: Sigma_11 is not positive definite");
    const Matrix coef = llt.solve(sigma_hat.topRightCorner(m, p - m));  // Sigma_11^{-1} Sigma_12
    return task.test.leftCols(m) * coef;
}

TailIntervals predict_tail_intervals(const PosteriorSampleSet& s, const PredictionTask& task, double level) {
    const Index t_count = task.test.rows();
    const Index q = task.p() - task.split;
    std::vector<Matrix> preds;
    preds.reserve(s.size());
    for (const auto& d : s.draws) preds.push_back(predict_tail_rows(d, task));
    TailIntervals out{Matrix(t_count, q), Matrix(t_count, q)};
    std::vector<double> vals(s.size());
    for (Index t = 0; t < t_count; ++t) {
        for (Index c = 0; c < q; ++c) {
            for (std::size_t d = 0; d < preds.size(); ++d) vals[d] = preds[d](t, c);
            const IntervalEstimate iv = quantile_credible_interval(vals, level);
            out.lower(t, c) = iv.lower;
            out.upper(t, c) = iv.upper;
        }
    }
    return out;
}

double prediction_mse(const Matrix& predicted, const Matrix& observed) {
    if (predicted.rows() != observed.rows() || predicted.cols() != observed.cols()) {
        throw InvalidArgument("prediction_mse: shape mismatch");
    }
    if (predicted.rows() == 0) throw InvalidArgument("prediction_mse: no rows");
    return (predicted - observed).squaredNorm() / static_cast<double>(predicted.rows());
}

namespace {

std::string kind_name(CVKind k) {
    switch (k) {
        case CVKind::epsilon: return "epsilon";
        case CVKind::bandwidth: return "bandwidth";
        case CVKind::frequentist: return "frequentist";
    }
    return "unknown";
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json record_to_json(const ReplicationRecord& r) {
    json j = {{"replication", r.replication},
              {"failed", r.failed},
              {"spectral_error", finite_or_null(r.spectral_error)},
              {"truth_value", finite_or_null(r.truth_value)},
              {"lower", finite_or_null(r.lower)},
              {"upper", finite_or_null(r.upper)},
              {"covered", r.covered},
              {"ploss", finite_or_null(r.ploss)},
              {"ploss_sq", finite_or_null(r.ploss_sq)},
              {"eps", r.eps},
              {"bandwidth", r.bandwidth},
              {"seconds", r.seconds}};
    if (r.failed) j["error"] = r.error;
    return j;
}

double number_or_nan(const json& j) { return j.is_null() ? std::nan("") : j.get<double>(); }

}  // namespace

json to_json(const CVReport& r) {
    json scores = json::array();
    for (double s : r.scores) scores.push_back(finite_or_null(s));
    json j = {{"kind", kind_name(r.kind)},
              {"candidates", r.candidates},
              {"scores", scores},
              {"selected", r.selected},
              {"selected_index", r.selected_index},
              {"per_observation_terms", r.per_observation_terms},
              {"policy", r.policy}};
    if (!r.resolved_eps.empty()) j["resolved_eps"] = r.resolved_eps;
    return j;
}

json to_json(const IntervalEstimate& iv) {
    return {{"lower", iv.lower}, {"upper", iv.upper}, {"level", iv.level}, {"method", to_string(iv.method)}};
}

json to_json(const TimingSummary& t) {
    return {{"q1", t.q1}, {"mean", t.mean}, {"median", t.median}, {"q3", t.q3}, {"total", t.total}};
}

json to_json(const ExperimentResult& r) {
    json cells = json::array();
    for (const auto& c : r.cells) {
        json recs = json::array();
        for (const auto& rec : c.records) recs.push_back(record_to_json(rec));
        cells.push_back({{"truth", c.truth},
                         {"n", c.n},
                         {"estimator", to_string(c.estimator)},
                         {"failures", c.failures},
                         {"incomplete", c.incomplete},
                         {"mean_error", finite_or_null(c.mean_error)},
                         {"coverage", finite_or_null(c.coverage)},
                         {"mean_length", finite_or_null(c.mean_length)},
                         {"mean_ploss", finite_or_null(c.mean_ploss)},
                         {"mean_ploss_sq", finite_or_null(c.mean_ploss_sq)},
                         {"timing", to_json(c.timing)},
                         {"records", recs}});
    }
    return {{"kind", r.kind}, {"cells", cells}};
}

ExperimentResult experiment_result_from_json(const json& j) {
    ExperimentResult r;
    r.kind = j.at("kind").get<std::string>();
    for (const auto& c : j.at("cells")) {
        CellResult cell;
        cell.truth = c.at("truth").get<std::string>();
        cell.n = c.at("n").get<Index>();
        cell.estimator = parse_estimator(c.at("estimator").get<std::string>());
        for (const auto& rj : c.at("records")) {
            ReplicationRecord rec;
            rec.replication = rj.at("replication").get<std::size_t>();
            rec.failed = rj.at("failed").get<bool>();
            if (rj.contains("error")) rec.error = rj.at("error").get<std::string>();
            rec.spectral_error = number_or_nan(rj.at("spectral_error"));
            rec.truth_value = number_or_nan(rj.at("truth_value"));
            rec.lower = number_or_nan(rj.at("lower"));
            rec.upper = number_or_nan(rj.at("upper"));
            rec.covered = rj.at("covered").get<bool>();
            rec.ploss = number_or_nan(rj.at("ploss"));
            rec.ploss_sq = number_or_nan(rj.at("ploss_sq"));
            rec.eps = rj.at("eps").get<double>();
            rec.bandwidth = rj.at("bandwidth").get<Index>();
            rec.seconds = rj.at("seconds").get<double>();
            cell.records.push_back(rec);
        }
        summarize_cell(cell, r.kind);
        r.cells.push_back(std::move(cell));
    }
    return r;
}

namespace {

json true_cov_to_json(const TrueCovSpec& t) {
    return {{"kind", to_string(t.kind)}, {"p", t.p},         {"k0", t.k0},  {"rho", t.rho},
            {"alpha_decay", t.alpha_decay}, {"seed", t.seed}, {"lambda_floor", t.lambda_floor}};
}

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) throw InvalidArgument(where + ": unknown key '" + key + "'");
    }
}

TrueCovSpec true_cov_from_json(const json& j) {
    reject_unknown_keys(j, {"kind", "p", "k0", "rho", "alpha_decay", "seed", "lambda_floor"}, "true_cov");
    TrueCovSpec t;
    t.kind = parse_true_cov_kind(j.at("kind").get<std::string>());
    t.p = j.at("p").get<Index>();
    t.k0 = j.at("k0").get<Index>();
    t.rho = j.value("rho", t.rho);
    t.alpha_decay = j.value("alpha_decay", t.alpha_decay);
    t.seed = j.value("seed", t.seed);
    t.lambda_floor = j.value("lambda_floor", t.lambda_floor);
    t.validate();
    return t;
}

}  // namespace

json to_json(const ExperimentConfig& c) {
    json truths = json::array();
    for (const auto& t : c.truths) truths.push_back(true_cov_to_json(t));
    json estimators = json::array();
    for (auto e : c.estimators) estimators.push_back(to_string(e));
    json eps;
    switch (c.eps_policy.mode) {
        case EpsPolicy::Mode::cross_validate: eps = "cv"; break;
        case EpsPolicy::Mode::theoretical: eps = "theoretical"; break;
        case EpsPolicy::Mode::fixed: eps = c.eps_policy.value; break;
    }
    json j = {{"true_cov", truths},
              {"n_values", c.n_values},
              {"replications", c.replications},
              {"estimators", estimators},
              {"posterior_draws", c.posterior_draws},
              {"bandwidth_policy", c.bandwidth_policy == BandwidthPolicy::known ? "known" : "cv"},
              {"eps", eps},
              {"grid", {{"eps", c.grid.epsilon_values}, {"k", c.grid.bandwidth_values}}},
              {"level", c.level},
              {"credible_method", to_string(c.credible_method)},
              {"record_ploss", c.record_ploss},
              {"solver", {{"tol", c.solver.tol}, {"max_iter", c.solver.max_iter}}},
              {"seed", c.seed},
              {"threads", c.threads}};
    if (c.freq_eps) j["freq_eps"] = *c.freq_eps;
    return j;
}

ExperimentConfig experiment_config_from_json(const json& j) {
    reject_unknown_keys(j,
                        {"true_cov", "n_values", "replications", "estimators", "posterior_draws", "bandwidth_policy",
                         "eps", "freq_eps", "grid", "level", "credible_method", "record_ploss", "solver", "seed",
                         "threads", "experiment", "functional"},
                        "config");
    ExperimentConfig c;
    const json& tc = j.at("true_cov");
    if (tc.is_array()) {
        for (const auto& t : tc) c.truths.push_back(true_cov_from_json(t));
    } else {
        c.truths.push_back(true_cov_from_json(tc));
    }
    c.n_values = j.at("n_values").get<std::vector<Index>>();
    c.replications = j.value("replications", c.replications);
    for (const auto& e : j.at("estimators")) c.estimators.push_back(parse_estimator(e.get<std::string>()));
    c.posterior_draws = j.value("posterior_draws", c.posterior_draws);
    const std::string bw = j.value("bandwidth_policy", std::string("known"));
    if (bw == "known") {
        c.bandwidth_policy = BandwidthPolicy::known;
    } else if (bw == "cv") {
        c.bandwidth_policy = BandwidthPolicy::cross_validate;
    } else {
        throw InvalidArgument("config: bandwidth_policy must be 'known' or 'cv'");
    }
    if (j.contains("eps")) {
        const json& e = j.at("eps");
        if (e.is_number()) {
            c.eps_policy = EpsPolicy::fixed_value(e.get<double>());
        } else if (e == "cv") {
            c.eps_policy = EpsPolicy::cross_validated();
        } else if (e == "theoretical") {
            c.eps_policy = EpsPolicy::theoretical_default();
        } else {
            throw InvalidArgument("config: eps must be 'cv', 'theoretical' or a number");
        }
    }
    if (j.contains("freq_eps") && !j.at("freq_eps").is_null()) c.freq_eps = j.at("freq_eps").get<double>();
    if (j.contains("grid")) {
        const json& g = j.at("grid");
        reject_unknown_keys(g, {"eps", "k"}, "grid");
        c.grid.epsilon_values = g.value("eps", std::vector<double>{});
        c.grid.bandwidth_values = g.value("k", std::vector<Index>{});
    }
    c.level = j.value("level", c.level);
    const std::string cm = j.value("credible_method", std::string("quantile"));
    if (cm == "quantile") {
        c.credible_method = IntervalMethod::quantile;
    } else if (cm == "hpd") {
        c.credible_method = IntervalMethod::hpd;
    } else {
        throw InvalidArgument("config: credible_method must be 'quantile' or 'hpd'");
    }
    c.record_ploss = j.value("record_ploss", c.record_ploss);
    if (j.contains("solver")) {
        c.solver.tol = j.at("solver").value("tol", c.solver.tol);
        c.solver.max_iter = j.at("solver").value("max_iter", c.solver.max_iter);
    }
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    c.validate();
    return c;
}

namespace {

std::vector<EstimatorId> estimators_in_order(const ExperimentResult& r) {
    std::vector<EstimatorId> out;
    for (const auto& c : r.cells) {
        if (std::find(out.begin(), out.end(), c.estimator) == out.end()) out.push_back(c.estimator);
    }
    return out;
}

std::vector<std::pair<std::string, Index>> columns_in_order(const ExperimentResult& r) {
    std::vector<std::pair<std::string, Index>> out;
    for (const auto& c : r.cells) {
        const auto key = std::make_pair(c.truth, c.n);
        if (std::find(out.begin(), out.end(), key) == out.end()) out.push_back(key);
    }
    return out;
}

template <typename CellFormat>
std::string table_csv(const ExperimentResult& r, CellFormat&& fmt) {
    const auto cols = columns_in_order(r);
    std::ostringstream out;
    out << "estimator";
    for (const auto& [truth, n] : cols) out << "," << truth << "_n" << n;
    out << "\n";
    for (EstimatorId e : estimators_in_order(r)) {
        out << to_string(e);
        for (const auto& [truth, n] : cols) {
            out << ",";
            if (const CellResult* c = r.find(truth, n, e)) out << fmt(*c);
        }
        out << "\n";
    }
    return out.str();
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

}  // namespace

std::string point_table_csv(const ExperimentResult& r) {
    return table_csv(r, [](const CellResult& c) { return fixed(c.mean_error, 4) + (c.incomplete ? "*" : ""); });
}

std::string interval_table_csv(const ExperimentResult& r) {
    return table_csv(r, [](const CellResult& c) {
        return fixed(100.0 * c.coverage, 1) + "% (" + fixed(c.mean_length, 3) + ")" + (c.incomplete ? "*" : "");
    });
}

std::string timing_table_csv(const ExperimentResult& r) {
    std::ostringstream out;
    out << "estimator,truth,n,q1,mean,median,q3\n";
    for (const auto& c : r.cells) {
        out << to_string(c.estimator) << "," << c.truth << "," << c.n << "," << fixed(c.timing.q1, 4) << ","
            << fixed(c.timing.mean, 4) << "," << fixed(c.timing.median, 4) << "," << fixed(c.timing.q3, 4) << "\n";
    }
    return out.str();
}

namespace {

json descriptor_to_json(const PostProcessDescriptor& d) {
    if (std::holds_alternative<NoPostProcessing>(d)) return {{"type", "none"}};
    if (const auto* b = std::get_if<BandingPostProcessing>(&d)) return {{"type", "banding"}, {"k", b->k}, {"eps", b->eps}};
    const auto& dual = std::get<DualPostProcessing>(d);
    return {{"type", "dual"}, {"k", dual.k}, {"tol", dual.tol}};
}

PostProcessDescriptor descriptor_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "none") return NoPostProcessing{};
    if (type == "banding") return BandingPostProcessing{j.at("k").get<Index>(), j.at("eps").get<double>()};
    if (type == "dual") return DualPostProcessing{j.at("k").get<Index>(), j.at("tol").get<double>()};
    throw InvalidArgument("sample set manifest: unknown descriptor '" + type + "'");
}

std::string draw_file_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "draw_%05zu.csv", i);
    return buf;
}

}  // namespace

void save_sample_set(const fs::path& dir, const PosteriorSampleSet& s) {
    fs::create_directories(dir);
    for (std::size_t i = 0; i < s.draws.size(); ++i) write_csv_matrix(dir / draw_file_name(i), s.draws[i]);
    write_csv_matrix(dir / "posterior_scale.csv", s.posterior.scale);
    const json manifest = {{"count", s.draws.size()},
                           {"p", s.dim()},
                           {"initial_posterior", {{"nu", s.posterior.df}, {"scale_file", "posterior_scale.csv"}}},
                           {"seed", {{"root", s.seed.root_seed}, {"stream", s.seed.stream_index}}},
                           {"descriptor", descriptor_to_json(s.descriptor)}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

PosteriorSampleSet load_sample_set(const fs::path& dir) {
    json manifest;
    try {
        manifest = json::parse(read_text(dir / "manifest.json"));
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("sample set manifest: ") + e.what());
    }
    PosteriorSampleSet s;
    const auto& post = manifest.at("initial_posterior");
    s.posterior = IWParams(read_csv_matrix(dir / post.at("scale_file").get<std::string>()), post.at("nu").get<double>());
    s.seed = SeedSpec{manifest.at("seed").at("root").get<std::uint64_t>(),
                      manifest.at("seed").at("stream").get<std::uint64_t>()};
    s.descriptor = descriptor_from_json(manifest.at("descriptor"));
    const auto count = manifest.at("count").get<std::size_t>();
    for (std::size_t i = 0; i < count; ++i) {
        Matrix d = read_csv_matrix(dir / draw_file_name(i));
        if (d.rows() != s.dim() || d.cols() != s.dim()) throw InvalidArgument("sample set: draw dimension mismatch");
        s.draws.push_back(std::move(d));
    }
    return s;
}

}  // namespace bandppp
