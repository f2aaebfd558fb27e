#include "bandppp/sampling.hpp"

#include <cmath>
#include <numbers>

namespace bandppp {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

SeedSpec SeedSpec::substream(std::uint64_t index) const {
    const std::uint64_t child_root = splitmix64(root_seed ^ splitmix64(stream_index + 0x632be59bd9b4e019ULL));
    return SeedSpec{child_root, index};
}

Rng::Rng(const SeedSpec& seed) {
    const std::uint64_t a = splitmix64(seed.root_seed);
    const std::uint64_t b = splitmix64(a ^ seed.stream_index);
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                      static_cast<std::uint32_t>(seed.stream_index),
                      static_cast<std::uint32_t>(seed.stream_index >> 32)};
    engine_.seed(seq);
}

double Rng::gamma(double shape, double scale) {
    if (!(shape > 0.0) || !(scale > 0.0)) throw InvalidArgument("gamma: shape and scale must be positive");
    return std::gamma_distribution<double>(shape, scale)(engine_);
}

IWParams::IWParams(Matrix scale_matrix, double degrees_of_freedom)
    : scale(make_covariance(scale_matrix)), df(degrees_of_freedom) {
    const Index p = scale.rows();
    if (!(df > 2.0 * static_cast<double>(p))) {
        throw InvalidArgument("IWParams: degrees of freedom " + std::to_string(df) + " must exceed 2p = " +
                              std::to_string(2 * p));
    }
    if (Eigen::LLT<Matrix>(scale).info() != Eigen::Success) {
        throw InvalidArgument("IWParams: scale matrix is not positive definite");
    }
}

Matrix cholesky_lower(const Matrix& m, const char* who) {
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite(std::string(who) + ": matrix is not positive definite");
    return llt.matrixL();
}

DataMatrix sample_mvn(const CovarianceMatrix& cov, Index n, Rng& rng) {
    if (n < 1) throw InvalidArgument("sample_mvn: n must be positive");
    const Matrix l = cholesky_lower(cov, "sample_mvn");
    const Index p = cov.rows();
    Matrix z(n, p);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < p; ++j) z(i, j) = rng.normal();
    }
    return z * l.transpose();
}

DataMatrix sample_mvn(const CovarianceMatrix& cov, Index n, const SeedSpec& seed) {
    Rng rng(seed);
    return sample_mvn(cov, n, rng);
}

Matrix bartlett_factor(Index p, double df_std, Rng& rng) {
    Matrix a = Matrix::Zero(p, p);
    for (Index i = 0; i < p; ++i) {
        a(i, i) = std::sqrt(rng.chi_squared(df_std - static_cast<double>(i)));
        for (Index j = 0; j < i; ++j) a(i, j) = rng.normal();
    }
    return a;
}

CovarianceMatrix sample_wishart(const CovarianceMatrix& scale, double df_std, const SeedSpec& seed) {
    const Index p = scale.rows();
    if (!(df_std > static_cast<double>(p) - 1.0)) {
        throw InvalidArgument("sample_wishart: degrees of freedom must exceed p - 1");
    }
    const Matrix l = cholesky_lower(scale, "sample_wishart");
    Rng rng(seed);
    const Matrix a = bartlett_factor(p, df_std, rng);
    const Matrix la = l.triangularView<Eigen::Lower>() * a;
    Matrix w = la * la.transpose();
    return (w + w.transpose()) / 2.0;
}

InverseWishartSampler::InverseWishartSampler(const IWParams& params)
    : params_(params), df_std_(standard_df(params)) {
    const Index p = params.dim();
    const Matrix inv_scale = params.scale.llt().solve(Matrix::Identity(p, p));
    inv_scale_factor_ = cholesky_lower((inv_scale + inv_scale.transpose()) / 2.0, "InverseWishartSampler");
}

CovarianceMatrix InverseWishartSampler::draw(Rng& rng) const {
    const Index p = params_.dim();
    const Matrix a = bartlett_factor(p, df_std_, rng);
    // W = T T^T with T = L A lower triangular; the draw is W^{-1} = T^{-T} T^{-1}.
    Matrix t = inv_scale_factor_.triangularView<Eigen::Lower>() * a;
    Matrix t_inv = Matrix::Identity(p, p);
    t.triangularView<Eigen::Lower>().solveInPlace(t_inv);
    Matrix sigma = t_inv.transpose() * t_inv;
    return (sigma + sigma.transpose()) / 2.0;
}

CovarianceMatrix sample_inverse_wishart(const IWParams& params, const SeedSpec& seed) {
    InverseWishartSampler sampler(params);
    Rng rng(seed);
    return sampler.draw(rng);
}

double log_multivariate_gamma(Index p, double a) {
    if (p < 1) throw InvalidArgument("log_multivariate_gamma: p must be positive");
    if (!(a > (static_cast<double>(p) - 1.0) / 2.0)) {
        throw InvalidArgument("log_multivariate_gamma: need a > (p - 1)/2");
    }
    const double pd = static_cast<double>(p);
    double out = pd * (pd - 1.0) / 4.0 * std::log(std::numbers::pi);
    for (Index j = 1; j <= p; ++j) out += std::lgamma(a + (1.0 - static_cast<double>(j)) / 2.0);
    return out;
}

namespace {

double log_det_from_llt(const Eigen::LLT<Matrix>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace

double iw_log_density(const CovarianceMatrix& sigma, const IWParams& params) {
    const Index p = params.dim();
    if (sigma.rows() != p || sigma.cols() != p) throw InvalidArgument("iw_log_density: dimension mismatch");
    Eigen::LLT<Matrix> sigma_llt(sigma);
    if (sigma_llt.info() != Eigen::Success) throw NotPositiveDefinite("iw_log_density: sigma is not positive definite");
    Eigen::LLT<Matrix> scale_llt(params.scale);
    const double m = standard_df(params);
    const double pd = static_cast<double>(p);
    const double log_norm = 0.5 * m * log_det_from_llt(scale_llt) - 0.5 * m * pd * std::numbers::ln2 -
                            log_multivariate_gamma(p, m / 2.0);
    const double trace_term = sigma_llt.solve(params.scale).trace();
    return log_norm - 0.5 * params.df * log_det_from_llt(sigma_llt) - 0.5 * trace_term;
}

CovarianceMatrix iw_mean(const IWParams& params) {
    const double denom = params.df - 2.0 * static_cast<double>(params.dim()) - 2.0;
    if (!(denom > 0.0)) throw InvalidArgument("iw_mean: mean requires df > 2p + 2");
    return params.scale / denom;
}

double mvn_log_density(const Vector& x, const Eigen::LLT<Matrix>& sigma_llt) {
    const Vector z = sigma_llt.matrixL().solve(x);
    const double p = static_cast<double>(x.size());
    return -0.5 * p * std::log(2.0 * std::numbers::pi) - 0.5 * log_det_from_llt(sigma_llt) - 0.5 * z.squaredNorm();
}

}  // namespace bandppp
