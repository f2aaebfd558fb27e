#include <doctest.h>

#include <random>

#include "bandppp/errors.hpp"
#include "bandppp/estimators.hpp"
#include "bandppp/sampling.hpp"
#include "oracles.hpp"

using namespace bandppp;

namespace {

Matrix random_pd(Index p, unsigned seed, double ridge = 0.2) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> z;
    Matrix a(p, p + 2);
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < a.cols(); ++j) a(i, j) = z(gen);
    return a * a.transpose() / static_cast<double>(p + 2) + ridge * Matrix::Identity(p, p);
}

}  // namespace

TEST_SUITE("estimators") {

TEST_CASE("sample covariance does not center") {
    DataMatrix e1 = DataMatrix::Zero(1, 3);
    e1(0, 0) = 1;
    Matrix expected = Matrix::Zero(3, 3);
    expected(0, 0) = 1;
    CHECK(sample_cov(e1) == expected);
    DataMatrix pm = DataMatrix::Zero(2, 3);
    pm(0, 0) = 1;
    pm(1, 0) = -1;
    CHECK(sample_cov(pm) == expected);
}

TEST_CASE("sample covariance concentrates") {
    const Index p = 10;
    const Index n = 2000;
    int inside = 0;
    for (int r = 0; r < 20; ++r) {
        const DataMatrix x = sample_mvn(Matrix::Identity(p, p), n, SeedSpec{1, 0}.substream(r));
        if ((sample_cov(x) - Matrix::Identity(p, p)).cwiseAbs().maxCoeff() < 3.0 * std::sqrt(std::log(p) / n)) ++inside;
    }
    CHECK(inside >= 19);
}

TEST_CASE("banded sample covariance and ridge") {
    const DataMatrix x = sample_mvn(Matrix::Identity(4, 4), 10, SeedSpec{2, 0});
    CHECK(banded_sample_cov(x, BandSpec(3, 4)) == sample_cov(x));
    CHECK(banded_sample_cov(x, BandSpec(0, 4)) == Matrix(sample_cov(x).diagonal().asDiagonal()));
    CHECK(ridge_adjusted_cov(DataMatrix::Zero(3, 4), 0.5) == 0.5 * Matrix::Identity(4, 4));
    const DataMatrix wide = sample_mvn(Matrix::Identity(8, 8), 3, SeedSpec{3, 0});
    const Matrix r = ridge_adjusted_cov(wide, 0.1);
    CHECK(oracle::jacobi_eigenvalues(r).front() >= 0.1 - 1e-12);
    CHECK_THROWS_AS(ridge_adjusted_cov(wide, 0.0), InvalidArgument);
}

TEST_CASE("dual mle: banded target is a fixed point") {
    Matrix t = Matrix::Identity(5, 5);
    for (Index i = 0; i + 1 < 5; ++i) t(i, i + 1) = t(i + 1, i) = 0.3;
    const SolverResult res = dual_mle_fit(t, BandSpec(1, 5));
    CHECK(res.estimate == t);
    CHECK(res.residual == 0.0);
    CHECK(res.iterations == 0);
}

TEST_CASE("dual mle: diagonal case decouples") {
    const Matrix t = random_pd(5, 4);
    const Matrix a = dual_mle(t, BandSpec(0, 5));
    const Matrix k = oracle::gauss_jordan_inverse(t);
    for (Index i = 0; i < 5; ++i) CHECK(a(i, i) == doctest::Approx(1.0 / k(i, i)).epsilon(1e-10));
    CHECK(is_banded(a, 0));
}

TEST_CASE("dual mle matches a bisection root-finder for p = 3, k = 1") {
    Matrix t(3, 3);
    t << 1, .5, .25, .5, 1, .5, .25, .5, 1;
    const Matrix kt = oracle::gauss_jordan_inverse(t);
    // Unknown: the (1,3) entry x of A^{-1}; A = K(x)^{-1} must vanish at (1,3).
    const auto k_of = [&](double x) {
        Matrix k = kt;
        k(0, 2) = k(2, 0) = x;
        return k;
    };
    const auto f = [&](double x) { return oracle::gauss_jordan_inverse(k_of(x))(0, 2); };
    // PD range of K(x) is an interval around kt(0,2) = 0; bracket inside it.
    double lo = -0.5;
    double hi = 0.5;
    while (oracle::jacobi_eigenvalues(k_of(lo)).front() <= 0.0) lo /= 2;
    while (oracle::jacobi_eigenvalues(k_of(hi)).front() <= 0.0) hi /= 2;
    const double root = oracle::bisect(f, lo, hi);
    const Matrix a_oracle = oracle::gauss_jordan_inverse(k_of(root));
    const Matrix a = dual_mle(t, BandSpec(1, 3));
    CHECK((a - a_oracle).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(a(0, 2) == 0.0);
}

TEST_CASE("dual mle agrees with the decomposable closed form") {
    // For a banded graph the fitted precision is sum over (k+1)-windows of
    // padded inverses minus the same over the k-window separators.
    for (unsigned trial = 0; trial < 10; ++trial) {
        const Index p = 4 + trial % 5;
        const Index k = 1 + trial % 3;
        if (k >= p) continue;
        const Matrix t = random_pd(p, 50 + trial);
        const Matrix w = oracle::gauss_jordan_inverse(t);
        Matrix prec = Matrix::Zero(p, p);
        for (Index s = 0; s + k < p; ++s) prec.block(s, s, k + 1, k + 1) += oracle::gauss_jordan_inverse(w.block(s, s, k + 1, k + 1));
        for (Index s = 1; s + k < p; ++s) prec.block(s, s, k, k) -= oracle::gauss_jordan_inverse(w.block(s, s, k, k));
        const Matrix a = dual_mle(t, BandSpec(k, p), SolverOptions{1e-12, 1000});
        CHECK((a - prec).cwiseAbs().maxCoeff() < 1e-8 * prec.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("dual mle properties on random targets") {
    for (unsigned trial = 0; trial < 30; ++trial) {
        const Index p = 2 + trial % 9;
        const Index k = trial % std::min<Index>(p, 4);
        const Matrix t = random_pd(p, 100 + trial);
        const Matrix a = dual_mle(t, BandSpec(k, p));
        CHECK(is_banded(a, k));
        CHECK(a == a.transpose());
        CHECK(dual_residual(a, t, BandSpec(k, p)) <= 1e-8);
        const double c = 0.1 + trial;
        CHECK((dual_mle(Matrix(c * t), BandSpec(k, p)) - c * a).cwiseAbs().maxCoeff() < 1e-7 * c);
    }
}

TEST_CASE("dual mle reports convergence failure with its residual") {
    const Matrix t = random_pd(8, 7, 0.01);
    try {
        dual_mle(t, BandSpec(2, 8), SolverOptions{1e-15, 1});
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        CHECK(e.iterations() == 1);
        CHECK(e.residual() > 1e-15);
    }
}

TEST_CASE("icf: trivial bandwidths") {
    const Matrix s = random_pd(5, 8);
    CHECK(mle_icf(s, BandSpec(4, 5)) == s);
    const Matrix d = mle_icf(s, BandSpec(0, 5));
    CHECK((d - Matrix(s.diagonal().asDiagonal())).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("icf matches a generic optimizer for p = 4, k = 1") {
    for (unsigned trial = 0; trial < 5; ++trial) {
        const Matrix s = random_pd(4, 200 + trial);
        const SolverResult res = mle_icf_fit(s, BandSpec(1, 4), SolverOptions{1e-10, 500});
        const Matrix ref = oracle::banded_mle_by_descent(s, 1);
        CHECK(std::abs(oracle::gaussian_nll(res.estimate, s) - oracle::gaussian_nll(ref, s)) < 1e-6);
        CHECK(gaussian_objective(res.estimate, s) <= oracle::gaussian_nll(ref, s) + 1e-9);
        for (std::size_t i = 1; i < res.objective_trace.size(); ++i)
            CHECK(res.objective_trace[i] <= res.objective_trace[i - 1] + 1e-12);
        CHECK(kkt_residual(res.estimate, s, BandSpec(1, 4)) <= 1e-10);
    }
}

TEST_CASE("icf properties") {
    for (unsigned trial = 0; trial < 20; ++trial) {
        const Index p = 3 + trial % 7;
        const Index k = 1 + trial % 2;
        const Matrix s = random_pd(p, 300 + trial);
        const Matrix est = mle_icf(s, BandSpec(k, p));
        CHECK(is_banded(est, k));
        CHECK(est == est.transpose());
        CHECK(oracle::jacobi_eigenvalues(est).front() > 0.0);
        CHECK(kkt_residual(est, s, BandSpec(k, p)) <= 1e-8);
        const double c = 0.5 + trial;
        CHECK((mle_icf(Matrix(c * s), BandSpec(k, p)) - c * est).cwiseAbs().maxCoeff() < 1e-6 * c);
    }
}

TEST_CASE("icf rejects near-singular input") {
    const DataMatrix wide = sample_mvn(Matrix::Identity(6, 6), 3, SeedSpec{9, 0});
    CHECK_THROWS_AS(mle_icf(sample_cov(wide), BandSpec(1, 6)), NumericError);
    CHECK_NOTHROW(mle_icf(ridge_adjusted_cov(wide, 0.1), BandSpec(1, 6)));
}

TEST_CASE("objective gradient matches finite differences") {
    const Matrix s = random_pd(4, 11);
    const Matrix sigma = random_pd(4, 12);
    const Matrix g = gaussian_objective_gradient(sigma, s);
    const double h = 1e-6;
    Matrix e = Matrix::Zero(4, 4);
    e(1, 1) = 1;
    const double d11 = (gaussian_objective(sigma + h * e, s) - gaussian_objective(sigma - h * e, s)) / (2 * h);
    CHECK(d11 == doctest::Approx(g(1, 1)).epsilon(1e-6));
    e.setZero();
    e(0, 2) = e(2, 0) = 1;
    const double d02 = (gaussian_objective(sigma + h * e, s) - gaussian_objective(sigma - h * e, s)) / (2 * h);
    CHECK(d02 == doctest::Approx(2 * g(0, 2)).epsilon(1e-6));
}

}
