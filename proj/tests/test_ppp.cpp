#include <doctest.h>

#include "bandppp/errors.hpp"
#include "bandppp/harness.hpp"
#include "bandppp/ppp.hpp"
#include "oracles.hpp"

using namespace bandppp;

TEST_SUITE("ppp") {

TEST_CASE("conjugate update") {
    const Index p = 3;
    const IWParams prior = default_prior(p);
    CHECK(prior.df == 2 * p + 3);
    CHECK(prior.scale == Matrix::Identity(p, p));
    const IWParams zero = conjugate_update(prior, DataMatrix::Zero(4, p));
    CHECK(zero.scale == Matrix::Identity(p, p));
    CHECK(zero.df == 2 * p + 3 + 4);

    DataMatrix e1 = DataMatrix::Zero(1, 2);
    e1(0, 0) = 1;
    const IWParams one = conjugate_update(default_prior(2), e1);
    Matrix expected = Matrix::Identity(2, 2);
    expected(0, 0) = 2;
    CHECK(one.scale == expected);
}

TEST_CASE("posterior mean approaches the sample second moment") {
    const Index p = 4;
    Matrix truth = Matrix::Identity(p, p);
    truth(0, 1) = truth(1, 0) = 0.4;
    const DataMatrix x = sample_mvn(truth, 4000, SeedSpec{1, 0});
    double previous = 1e9;
    for (Index n : {50, 400, 4000}) {
        const DataMatrix head = x.topRows(n);
        const Matrix sn = sample_cov(head);
        const IWParams post = conjugate_update(default_prior(p), head);
        const Matrix mean = iw_mean(post);
        // Closed form (I + n S_n) / (n + 1).
        CHECK(mean.isApprox((Matrix::Identity(p, p) + n * sn) / (n + 1.0), 1e-12));
        const double gap = (mean - sn).cwiseAbs().maxCoeff();
        CHECK(gap < previous);
        previous = gap;
    }
}

TEST_CASE("initial draws: mean, reproducibility, order independence") {
    const Index p = 3;
    const DataMatrix x = sample_mvn(Matrix::Identity(p, p), 20, SeedSpec{2, 0});
    const IWParams post = conjugate_update(default_prior(p), x);
    const PosteriorSampleSet s = draw_initial_samples(post, 4000, SeedSpec{3, 0}, 2);
    CHECK(s.size() == 4000);
    CHECK_FALSE(s.processed());
    const Matrix mean = posterior_mean(s);
    const Matrix exact = post.scale / (post.df - 2.0 * p - 2.0);
    CHECK((mean - exact).cwiseAbs().maxCoeff() < 0.05 * exact.diagonal().maxCoeff());

    const PosteriorSampleSet again = draw_initial_samples(post, 10, SeedSpec{3, 0}, 1);
    for (std::size_t i = 0; i < 10; ++i) CHECK(again.draws[i] == s.draws[i]);
}

TEST_CASE("banding post-processing") {
    const Index p = 6;
    const DataMatrix x = sample_mvn(Matrix::Identity(p, p), 10, SeedSpec{4, 0});
    const PosteriorSampleSet s = draw_initial_samples(conjugate_update(default_prior(p), x), 50, SeedSpec{5, 0});
    const BandSpec spec(2, p);
    const PosteriorSampleSet b = banding_post_process(s, spec, 0.3, 3);
    CHECK(std::holds_alternative<BandingPostProcessing>(b.descriptor));
    for (std::size_t i = 0; i < b.size(); ++i) {
        CHECK(is_banded(b.draws[i], 2));
        CHECK(oracle::jacobi_eigenvalues(b.draws[i]).front() >= 0.3 - 1e-10);
        CHECK(b.draws[i] == pd_band_adjust(s.draws[i], spec, 0.3));
    }
    CHECK(is_banded(posterior_mean(b), 2));
    CHECK_THROWS_AS(banding_post_process(b, spec, 0.3), InvalidState);

    // Processing commutes with taking a prefix of the draws.
    PosteriorSampleSet head = s;
    head.draws.resize(7);
    const PosteriorSampleSet bh = banding_post_process(head, spec, 0.3);
    for (std::size_t i = 0; i < 7; ++i) CHECK(bh.draws[i] == b.draws[i]);
}

TEST_CASE("banding leaves class members unchanged") {
    PosteriorSampleSet s;
    Matrix a = Matrix::Identity(4, 4);
    a(0, 1) = a(1, 0) = 0.2;
    s.draws = {a, 2.0 * a};
    s.posterior = default_prior(4);
    const PosteriorSampleSet b = banding_post_process(s, BandSpec(1, 4), 0.1);
    CHECK(b.draws[0] == a);
    CHECK(b.draws[1] == 2.0 * a);
}

TEST_CASE("dual post-processing") {
    const Index p = 5;
    const DataMatrix x = sample_mvn(Matrix::Identity(p, p), 15, SeedSpec{6, 0});
    const PosteriorSampleSet s = draw_initial_samples(conjugate_update(default_prior(p), x), 20, SeedSpec{7, 0});
    const PosteriorSampleSet d = dual_post_process(s, BandSpec(1, p), 1e-10, 2);
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(is_banded(d.draws[i], 1));
        CHECK(oracle::jacobi_eigenvalues(d.draws[i]).front() > 0.0);
        const Matrix ki = oracle::gauss_jordan_inverse(d.draws[i]);
        const Matrix kt = oracle::gauss_jordan_inverse(s.draws[i]);
        for (Index r = 0; r < p; ++r)
            for (Index c = 0; c < p; ++c)
                if (std::abs(r - c) <= 1) CHECK(std::abs(ki(r, c) - kt(r, c)) < 1e-8);
    }
    const PosteriorSampleSet diag = dual_post_process(s, BandSpec(0, p));
    const Matrix k0 = oracle::gauss_jordan_inverse(s.draws[0]);
    for (Index r = 0; r < p; ++r) CHECK(diag.draws[0](r, r) == doctest::Approx(1.0 / k0(r, r)).epsilon(1e-10));
}

TEST_CASE("posterior mean of simple sets") {
    PosteriorSampleSet s;
    s.posterior = default_prior(2);
    s.draws = {Matrix::Identity(2, 2)};
    CHECK(posterior_mean(s) == Matrix::Identity(2, 2));
    s.draws.push_back(3.0 * Matrix::Identity(2, 2));
    CHECK(posterior_mean(s) == 2.0 * Matrix::Identity(2, 2));
}

TEST_CASE("posterior loss is order invariant and simple cases") {
    const Matrix truth = Matrix::Identity(3, 3);
    PosteriorSampleSet s;
    s.posterior = default_prior(3);
    s.draws = {truth, truth};
    CHECK(posterior_ploss(s, truth) == 0.0);
    s.draws = {truth + Matrix::Identity(3, 3), truth - Matrix::Identity(3, 3)};
    CHECK(posterior_ploss(s, truth) == doctest::Approx(1.0));
    s.draws = {2.0 * truth, 5.0 * truth, 0.5 * truth};
    const double forward = posterior_ploss(s, truth);
    std::swap(s.draws[0], s.draws[2]);
    CHECK(posterior_ploss(s, truth) == doctest::Approx(forward).epsilon(1e-15));
}

TEST_CASE("banding reduces posterior loss for a banded truth") {
    TrueCovSpec spec;
    spec.kind = TrueCovKind::sigma1;
    spec.p = 30;
    spec.k0 = 2;
    const Matrix truth = make_true_cov(spec);
    const DataMatrix x = sample_mvn(truth, 60, SeedSpec{8, 0});
    const PosteriorSampleSet s = draw_initial_samples(conjugate_update(default_prior(spec.p), x), 100, SeedSpec{9, 0});
    const PosteriorSampleSet b = banding_post_process(s, BandSpec(2, spec.p), 0.3);
    CHECK(posterior_ploss(b, truth) < posterior_ploss(s, truth));
}

TEST_CASE("default epsilon formula") {
    CHECK(default_epsilon(5, 100, 100) ==
          doctest::Approx(std::sqrt(std::pow(std::log(5.0), 2) * (5 + std::log(100.0)) / 100.0)));
    CHECK(default_epsilon(0, 10, 10) ==
          doctest::Approx(default_epsilon(2, 10, 10) * std::sqrt(std::log(10.0) / (2 + std::log(10.0)))));
}

}
