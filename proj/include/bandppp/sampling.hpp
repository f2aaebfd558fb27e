#pragma once

#include <cstdint>
#include <random>

#include "bandppp/band_linalg.hpp"

namespace bandppp {

// Reproducible stream address. Distinct stream_index values under the same
// root give independent generators; substream() derives a child root so that
// nested work (replication -> posterior draw) never collides.
struct SeedSpec {
    std::uint64_t root_seed = 0;
    std::uint64_t stream_index = 0;

    SeedSpec substream(std::uint64_t index) const;
    bool operator==(const SeedSpec&) const = default;
};

std::uint64_t splitmix64(std::uint64_t x);

class Rng {
public:
    explicit Rng(const SeedSpec& seed);

    double normal() { return normal_(engine_); }
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    // Gamma(shape, scale) by Marsaglia-Tsang rejection (exact).
    double gamma(double shape, double scale = 1.0);
    double chi_squared(double df) { return gamma(df / 2.0, 2.0); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

// Inverse-Wishart parameters with density proportional to
// |Sigma|^{-df/2} exp(-tr(Sigma^{-1} scale)/2). The conventional degrees of
// freedom are df - p - 1 (see standard_df()).
struct IWParams {
    Matrix scale;
    double df = 0.0;

    IWParams() = default;
    IWParams(Matrix scale_matrix, double degrees_of_freedom);

    Index dim() const { return scale.rows(); }
};

// Conventional inverse-Wishart / Wishart degrees of freedom for a parameter set.
inline double standard_df(double df, Index p) { return df - static_cast<double>(p) - 1.0; }
inline double standard_df(const IWParams& params) { return standard_df(params.df, params.dim()); }

// Lower Cholesky factor; throws NotPositiveDefinite.
Matrix cholesky_lower(const Matrix& m, const char* who);

DataMatrix sample_mvn(const CovarianceMatrix& cov, Index n, const SeedSpec& seed);
DataMatrix sample_mvn(const CovarianceMatrix& cov, Index n, Rng& rng);

// Wishart(scale, df_std) through the Bartlett decomposition.
CovarianceMatrix sample_wishart(const CovarianceMatrix& scale, double df_std, const SeedSpec& seed);

CovarianceMatrix sample_inverse_wishart(const IWParams& params, const SeedSpec& seed);

// Holds the Cholesky factor of scale^{-1} so repeated draws cost two
// triangular products and one triangular inverse each.
class InverseWishartSampler {
public:
    explicit InverseWishartSampler(const IWParams& params);

    CovarianceMatrix draw(Rng& rng) const;
    const IWParams& params() const { return params_; }

private:
    IWParams params_;
    Matrix inv_scale_factor_;  // lower L with L L^T = scale^{-1}
    double df_std_;
};

// Bartlett factor: lower triangular, chi-distributed diagonal, N(0,1) below.
Matrix bartlett_factor(Index p, double df_std, Rng& rng);

double log_multivariate_gamma(Index p, double a);

// Normalized inverse-Wishart log density.
double iw_log_density(const CovarianceMatrix& sigma, const IWParams& params);

// Mean scale / (df - 2p - 2); requires df > 2p + 2.
CovarianceMatrix iw_mean(const IWParams& params);

// log N_p(x; 0, sigma) from a Cholesky factor of sigma.
double mvn_log_density(const Vector& x, const Eigen::LLT<Matrix>& sigma_llt);

}  // namespace bandppp
