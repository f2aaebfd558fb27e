#pragma once

// Brute-force leave-one-out log predictive density: for every i, draw afresh
// from the posterior given X_{-i} and average p(x_i | B_k^eps(Sigma)). Also
// returns a delta-method Monte Carlo standard error.

#include <cmath>
#include <utility>
#include <vector>

#include "bandppp/ppp.hpp"
#include "bandppp/sampling.hpp"
#include "bandppp/selection.hpp"

namespace oracle {

struct McEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

inline McEstimate refit_loo_log_predictive(const bandppp::DataMatrix& data, const bandppp::IWParams& prior,
                                           bandppp::Index k, double eps, std::size_t draws,
                                           const bandppp::SeedSpec& seed) {
    using namespace bandppp;
    const Index n = data.rows();
    const Index p = data.cols();
    McEstimate out;
    double var = 0.0;
    for (Index i = 0; i < n; ++i) {
        const DataMatrix rest = drop_row(data, i);
        const IWParams post(prior.scale + rest.transpose() * rest, prior.df + static_cast<double>(n - 1));
        const InverseWishartSampler sampler(post);
        Rng rng(seed.substream(static_cast<std::uint64_t>(i)));
        std::vector<double> dens(draws);
        double mean = 0.0;
        for (std::size_t s = 0; s < draws; ++s) {
            const Matrix b = pd_band_adjust(sampler.draw(rng), BandSpec(k, p), eps);
            const Eigen::LLT<Matrix> llt(b);
            dens[s] = std::exp(mvn_log_density(data.row(i).transpose(), llt));
            mean += dens[s];
        }
        mean /= static_cast<double>(draws);
        double v = 0.0;
        for (double d : dens) v += (d / mean - 1.0) * (d / mean - 1.0);
        v /= static_cast<double>(draws - 1);
        out.value += std::log(mean);
        var += v / static_cast<double>(draws);
    }
    out.std_error = std::sqrt(var);
    return out;
}

// The importance-weighted estimate from one full-data draw set, with a
// standard error that accounts for the draws being shared across i.
inline McEstimate weighted_loo_log_predictive(const bandppp::PosteriorSampleSet& s, const bandppp::DataMatrix& data,
                                              const bandppp::IWParams& prior, bandppp::Index k, double eps) {
    using namespace bandppp;
    const Index n = data.rows();
    const Index p = data.cols();
    const std::size_t count = s.size();
    Matrix terms(static_cast<Index>(count), n);  // p(x_i | B(Sigma_s)) w_si
    for (std::size_t d = 0; d < count; ++d) {
        const Matrix b = pd_band_adjust(s.draws[d], BandSpec(k, p), eps);
        const Eigen::LLT<Matrix> llt(b);
        for (Index i = 0; i < n; ++i) {
            terms(static_cast<Index>(d), i) = std::exp(mvn_log_density(data.row(i).transpose(), llt) +
                                                        loo_log_weight(s.draws[d], data, i, prior));
        }
    }
    McEstimate out;
    const Vector means = terms.colwise().mean();
    Vector lin(static_cast<Index>(count));
    for (Index i = 0; i < n; ++i) out.value += std::log(means(i));
    for (Index d = 0; d < lin.size(); ++d) lin(d) = (terms.row(d).transpose().array() / means.array()).sum();
    const double centered = (lin.array() - lin.mean()).square().sum() / static_cast<double>(count - 1);
    out.std_error = std::sqrt(centered / static_cast<double>(count));
    return out;
}

}  // namespace oracle
