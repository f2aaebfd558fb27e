#pragma once

// Post-processed posterior for banded covariances: conjugate inverse-Wishart
// draws pushed through a map into the banded positive-definite class.

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "bandppp/band_linalg.hpp"
#include "bandppp/estimators.hpp"
#include "bandppp/sampling.hpp"

namespace bandppp {

struct NoPostProcessing {
    bool operator==(const NoPostProcessing&) const = default;
};

// Banding plus eigenvalue floor eps.
struct BandingPostProcessing {
    Index k = 0;
    double eps = 0.0;
    bool operator==(const BandingPostProcessing&) const = default;
};

// Banded matrix matching the draw's precision on the band.
struct DualPostProcessing {
    Index k = 0;
    double tol = 0.0;
    bool operator==(const DualPostProcessing&) const = default;
};

using PostProcessDescriptor = std::variant<NoPostProcessing, BandingPostProcessing, DualPostProcessing>;

std::string describe(const PostProcessDescriptor& d);

struct PosteriorSampleSet {
    std::vector<CovarianceMatrix> draws;
    IWParams posterior;  // initial posterior the draws came from
    SeedSpec seed;
    PostProcessDescriptor descriptor = NoPostProcessing{};

    std::size_t size() const { return draws.size(); }
    Index dim() const { return posterior.dim(); }
    bool processed() const { return !std::holds_alternative<NoPostProcessing>(descriptor); }
};

// IW(I_p, 2p + 3), the default initial prior.
IWParams default_prior(Index p);

// (B0 + n S_n, nu0 + n) with S_n the uncentered second moment.
IWParams conjugate_update(const IWParams& prior, const DataMatrix& data);

// Draw i uses stream seed.substream(i), so any subset of draws can be
// regenerated independently and in any order.
PosteriorSampleSet draw_initial_samples(const IWParams& posterior, std::size_t count, const SeedSpec& seed,
                                        std::size_t threads = 1);

PosteriorSampleSet banding_post_process(const PosteriorSampleSet& s, const BandSpec& spec, double eps,
                                        std::size_t threads = 1);

// Aborts the whole batch if any draw fails to converge.
PosteriorSampleSet dual_post_process(const PosteriorSampleSet& s, const BandSpec& spec, double tol = 1e-8,
                                     std::size_t threads = 1);

CovarianceMatrix posterior_mean(const PosteriorSampleSet& s);

// eps = sqrt(log(max(k, 2))^2 (k + log p) / n), the theoretical order of the
// eigenvalue floor; used when eps is not cross-validated.
double default_epsilon(Index k, Index p, Index n);

}  // namespace bandppp
