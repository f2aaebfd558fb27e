#pragma once

// File formats and the prediction workflow: CSV matrices, JSON manifests,
// configs and reports, count-data transformation and block conditional-mean
// prediction.

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

#include "bandppp/harness.hpp"
#include "bandppp/inference.hpp"
#include "bandppp/ppp.hpp"
#include "bandppp/selection.hpp"

namespace bandppp {

using json = nlohmann::json;

// Headerless comma-separated decimals, one matrix row per line. Values are
// written with 17 significant digits so they re-read bit-identically.
Matrix read_csv_matrix(const std::filesystem::path& path);
void write_csv_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix parse_csv_matrix(const std::string& text);
std::string format_csv_matrix(const Matrix& m);

// Observed coordinates 0..m-1, predicted m..p-1 (zero-based).
struct PredictionTask {
    Index split = 1;
    DataMatrix train;
    DataMatrix test;

    PredictionTask(Index split_index, DataMatrix train_rows, DataMatrix test_rows);
    Index p() const { return train.cols(); }
};

// sqrt(N + 1/4) entrywise, then centers every column by the mean of the
// first `train_rows` rows.
DataMatrix transform_counts(const Matrix& raw, Index train_rows);

// Sigma_21 Sigma_11^{-1} x_obs.
Vector predict_tail(const CovarianceMatrix& sigma_hat, Index split, const Vector& x_obs);

// One row per test observation.
Matrix predict_tail_rows(const CovarianceMatrix& sigma_hat, const PredictionTask& task);

// Pointwise equal-tailed intervals of the predicted tail across posterior draws.
struct TailIntervals {
    Matrix lower;  // rows = test observations, cols = predicted coordinates
    Matrix upper;
};
TailIntervals predict_tail_intervals(const PosteriorSampleSet& s, const PredictionTask& task, double level);

// (1/T) sum_t ||observed_t - predicted_t||^2 over rows.
double prediction_mse(const Matrix& predicted, const Matrix& observed);

json to_json(const CVReport& r);
json to_json(const IntervalEstimate& iv);
json to_json(const TimingSummary& t);
json to_json(const ExperimentResult& r);
json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_config_from_json(const json& j);
// Summary fields are recomputed from the stored records.
ExperimentResult experiment_result_from_json(const json& j);

// Table layouts: rows = estimators, columns = (truth, n).
std::string point_table_csv(const ExperimentResult& r);
std::string interval_table_csv(const ExperimentResult& r);
std::string timing_table_csv(const ExperimentResult& r);

// Directory of draw_NNNNN.csv files plus manifest.json with provenance.
void save_sample_set(const std::filesystem::path& dir, const PosteriorSampleSet& s);
PosteriorSampleSet load_sample_set(const std::filesystem::path& dir);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace bandppp
