#include "bandppp/ppp.hpp"

#include <cmath>
#include <sstream>

#include "bandppp/parallel.hpp"

namespace bandppp {

std::string describe(const PostProcessDescriptor& d) {
    std::ostringstream out;
    if (std::holds_alternative<NoPostProcessing>(d)) {
        out << "none";
    } else if (const auto* b = std::get_if<BandingPostProcessing>(&d)) {
        out << "banding(k=" << b->k << ",eps=" << b->eps << ")";
    } else {
        const auto& dual = std::get<DualPostProcessing>(d);
        out << "dual(k=" << dual.k << ")";
    }
    return out.str();
}

IWParams default_prior(Index p) {
    return IWParams(Matrix::Identity(p, p), 2.0 * static_cast<double>(p) + 3.0);
}

IWParams conjugate_update(const IWParams& prior, const DataMatrix& data) {
    if (data.cols() != prior.dim()) throw InvalidArgument("conjugate_update: data dimension does not match prior");
    // n S_n = X^T X.
    Matrix scale = prior.scale + data.transpose() * data;
    return IWParams(std::move(scale), prior.df + static_cast<double>(data.rows()));
}

PosteriorSampleSet draw_initial_samples(const IWParams& posterior, std::size_t count, const SeedSpec& seed,
                                        std::size_t threads) {
    if (count < 1) throw InvalidArgument("draw_initial_samples: count must be positive");
    InverseWishartSampler sampler(posterior);
    PosteriorSampleSet out{std::vector<CovarianceMatrix>(count), posterior, seed, NoPostProcessing{}};
    parallel_for(
        count,
        [&](std::size_t i) {
            Rng rng(seed.substream(i));
            out.draws[i] = sampler.draw(rng);
        },
        threads);
    return out;
}

PosteriorSampleSet banding_post_process(const PosteriorSampleSet& s, const BandSpec& spec, double eps,
                                        std::size_t threads) {
    if (s.processed()) throw InvalidState("banding_post_process: sample set already post-processed (" + describe(s.descriptor) + ")");
    if (spec.p != s.dim()) throw InvalidArgument("banding_post_process: dimension mismatch");
    PosteriorSampleSet out{std::vector<CovarianceMatrix>(s.size()), s.posterior, s.seed,
                           BandingPostProcessing{spec.k, eps}};
    parallel_for(
        s.size(), [&](std::size_t i) { out.draws[i] = pd_band_adjust(s.draws[i], spec, eps); }, threads);
    return out;
}

PosteriorSampleSet dual_post_process(const PosteriorSampleSet& s, const BandSpec& spec, double tol,
                                     std::size_t threads) {
    if (s.processed()) throw InvalidState("dual_post_process: sample set already post-processed (" + describe(s.descriptor) + ")");
    if (spec.p != s.dim()) throw InvalidArgument("dual_post_process: dimension mismatch");
    PosteriorSampleSet out{std::vector<CovarianceMatrix>(s.size()), s.posterior, s.seed,
                           DualPostProcessing{spec.k, tol}};
    SolverOptions opts;
    opts.tol = tol;
    parallel_for(
        s.size(), [&](std::size_t i) { out.draws[i] = dual_mle(s.draws[i], spec, opts); }, threads);
    return out;
}

CovarianceMatrix posterior_mean(const PosteriorSampleSet& s) {
    if (s.draws.empty()) throw InvalidArgument("posterior_mean: empty sample set");
    Matrix acc = Matrix::Zero(s.draws.front().rows(), s.draws.front().cols());
    for (const auto& d : s.draws) acc += d;
    return acc / static_cast<double>(s.draws.size());
}

double default_epsilon(Index k, Index p, Index n) {
    if (n < 1 || p < 1) throw InvalidArgument("default_epsilon: n and p must be positive");
    const double lk = std::log(static_cast<double>(std::max<Index>(k, 2)));
    return std::sqrt(lk * lk * (static_cast<double>(k) + std::log(static_cast<double>(p))) / static_cast<double>(n));
}

}  // namespace bandppp
