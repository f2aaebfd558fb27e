#include <doctest.h>

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <random>

#include "bandppp/errors.hpp"
#include "bandppp/estimators.hpp"
#include "bandppp/harness.hpp"
#include "bandppp/inference.hpp"
#include "bandppp/sampling.hpp"
#include "oracles.hpp"

using namespace bandppp;

namespace {

Matrix random_banded_pd(Index p, Index k, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(-0.4, 0.4);
    Matrix m = Matrix::Identity(p, p) * 2.0;
    for (Index i = 0; i < p; ++i)
        for (Index j = i + 1; j <= std::min(p - 1, i + k); ++j) m(i, j) = m(j, i) = u(gen);
    return pd_band_adjust(m, BandSpec(k, p), 0.3);
}

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("band index map counts and round trips") {
    for (Index p = 1; p <= 7; ++p) {
        for (Index k = 0; k < p; ++k) {
            const BandIndexMap map(p, k);
            CHECK(map.p_star() == (k + 1) * p - k * (k + 1) / 2);
            for (Index t = 0; t < map.p_star(); ++t) {
                const auto [i, j] = map.pairs()[static_cast<std::size_t>(t)];
                CHECK(map.index_of(i, j) == t);
                CHECK(map.index_of(j, i) == t);
            }
            const Matrix b = random_banded_pd(p, k, static_cast<unsigned>(10 * p + k));
            CHECK(map.unvecb(map.vecb(b)) == b);
        }
    }
    CHECK_FALSE(BandIndexMap(4, 1).index_of(0, 2).has_value());
    CHECK(BandIndexMap(3, 1).p_star() == 5);
}

TEST_CASE("Q matrix") {
    const Eigen::SparseMatrix<double> q20 = q_matrix(BandIndexMap(2, 0));
    const Matrix d20 = Matrix(q20);
    CHECK(d20.rows() == 4);
    CHECK(d20.cols() == 2);
    CHECK(d20(0, 0) == 1);  // (1,1)
    CHECK(d20(3, 1) == 1);  // (2,2)
    CHECK(d20.sum() == 2);

    for (Index k = 0; k < 5; ++k) {
        const BandIndexMap map(5, k);
        const Matrix q = Matrix(q_matrix(map));
        const Matrix b = random_banded_pd(5, k, 30 + static_cast<unsigned>(k));
        const Vector vec = Eigen::Map<const Vector>(b.data(), b.size());
        CHECK(q * map.vecb(b) == vec);
        const Matrix qtq = q.transpose() * q;
        CHECK(qtq.isDiagonal(0.0));
        for (Index t = 0; t < map.p_star(); ++t) {
            const auto [i, j] = map.pairs()[static_cast<std::size_t>(t)];
            CHECK(qtq(t, t) == (i == j ? 1.0 : 2.0));
        }
        CHECK((q.rowwise().sum().array() <= 1.0).all());
    }
}

TEST_CASE("Fisher block matches the explicit Kronecker product") {
    for (Index k = 0; k < 4; ++k) {
        const Index p = 4;
        const BandIndexMap map(p, k);
        const Matrix sigma = random_banded_pd(p, k, 40 + static_cast<unsigned>(k));
        const Matrix kinv = oracle::gauss_jordan_inverse(sigma);
        Matrix kron(p * p, p * p);
        for (Index a = 0; a < p; ++a)
            for (Index b = 0; b < p; ++b)
                for (Index c = 0; c < p; ++c)
                    for (Index d = 0; d < p; ++d) kron(a * p + c, b * p + d) = kinv(a, b) * kinv(c, d);
        const Matrix q = Matrix(q_matrix(map));
        const Matrix expected = q.transpose() * kron * q;
        CHECK((fisher_block(sigma, map) - expected).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("conditional mean closed forms") {
    const Vector x = Vector::LinSpaced(4, -1.0, 2.0);
    CHECK(conditional_mean(Matrix::Identity(5, 5), x) == 0.0);
    Matrix b(2, 2);
    b << 1, 0.6, 0.6, 1;
    CHECK(conditional_mean(b, Vector::Constant(1, 1.7)) == doctest::Approx(0.6 * 1.7));
    const Matrix s = random_banded_pd(5, 2, 50);
    const Vector y = Vector::LinSpaced(4, 0.3, -0.9);
    CHECK(conditional_mean(s, 2.0 * x - 3.0 * y) ==
          doctest::Approx(2.0 * conditional_mean(s, x) - 3.0 * conditional_mean(s, y)).epsilon(1e-12));
    Matrix bad = Matrix::Identity(3, 3);
    bad(0, 0) = -1;
    CHECK_THROWS_AS(conditional_mean(bad, Vector::Zero(2)), NumericError);
}

TEST_CASE("conditional mean against a Monte Carlo regression") {
    const Index p = 6;
    const Matrix sigma = random_banded_pd(p, 2, 60);
    const Index n = 1000000;
    const DataMatrix x = sample_mvn(sigma, n, SeedSpec{61, 0});
    const Matrix xh = x.leftCols(p - 1);
    const Vector y = x.col(p - 1);
    const Matrix gram = xh.transpose() * xh;
    const Vector beta = gram.ldlt().solve(xh.transpose() * y);
    const double resid_var = (y - xh * beta).squaredNorm() / static_cast<double>(n - p + 1);
    const Vector head = Vector::LinSpaced(p - 1, 1.0, -1.0);
    const double mc = beta.dot(head);
    const double se = std::sqrt(resid_var * head.dot(gram.ldlt().solve(head)));
    CHECK(std::abs(conditional_mean(sigma, head) - mc) < 3.0 * se);
}

TEST_CASE("quantile credible interval") {
    std::vector<double> v;
    for (int i = 1; i <= 100; ++i) v.push_back(i);
    const IntervalEstimate iv = quantile_credible_interval(v, 0.95);
    CHECK(iv.lower == doctest::Approx(3.475).epsilon(1e-12));
    CHECK(iv.upper == doctest::Approx(97.525).epsilon(1e-12));
    CHECK(iv.method == IntervalMethod::quantile);
    std::reverse(v.begin(), v.end());
    const IntervalEstimate rev = quantile_credible_interval(v, 0.95);
    CHECK(rev.lower == iv.lower);
    CHECK(rev.upper == iv.upper);
    const IntervalEstimate c = quantile_credible_interval(std::vector<double>(5, 2.5), 0.9);
    CHECK(c.lower == 2.5);
    CHECK(c.upper == 2.5);
    CHECK_THROWS_AS(quantile_credible_interval({1.0}, 0.9), InvalidArgument);

    std::mt19937_64 gen(3);
    std::normal_distribution<double> z;
    std::vector<double> w(777);
    for (auto& e : w) e = z(gen);
    const IntervalEstimate q = quantile_credible_interval(w, 0.9);
    CHECK(q.lower == doctest::Approx(oracle::quantile7(w, 0.05)).epsilon(1e-14));
    CHECK(q.upper == doctest::Approx(oracle::quantile7(w, 0.95)).epsilon(1e-14));
}

TEST_CASE("HPD interval") {
    std::mt19937_64 gen(4);
    std::normal_distribution<double> z;
    std::vector<double> sym(10000);
    for (auto& e : sym) e = z(gen);
    std::vector<double> sorted = sym;
    std::sort(sorted.begin(), sorted.end());
    const IntervalEstimate h = hpd_interval(sym, 0.95);
    const IntervalEstimate q = quantile_credible_interval(sym, 0.95);
    CHECK(h.length() <= q.length() + 1e-12);
    // Within a few order statistics of the equal-tailed interval.
    const auto rank = [&](double x) { return std::lower_bound(sorted.begin(), sorted.end(), x) - sorted.begin(); };
    CHECK(std::abs(rank(h.lower) - rank(q.lower)) <= 60);

    std::vector<double> skew(10000);
    for (auto& e : skew) e = std::exp(z(gen));
    CHECK(hpd_interval(skew, 0.95).length() < quantile_credible_interval(skew, 0.95).length());

    std::vector<double> small{5, 1, 4, 2, 3};
    const IntervalEstimate all = hpd_interval(small, 0.999);
    CHECK(all.lower == 1);
    CHECK(all.upper == 5);
    // ceil(0.6 * 5) = 3 values: the shortest window of three.
    std::vector<double> gaps{0, 10, 11, 12, 30};
    const IntervalEstimate w = hpd_interval(gaps, 0.6);
    CHECK(w.lower == 10);
    CHECK(w.upper == 12);
}

TEST_CASE("finite-difference gradients") {
    const BandIndexMap map(4, 1);
    const Matrix s = random_banded_pd(4, 1, 70);
    const Vector g = functional_gradient_fd(entry_functional(0, 1), map.vecb(s), map, Vector());
    for (Index t = 0; t < map.p_star(); ++t) CHECK(std::abs(g(t) - (t == *map.index_of(0, 1) ? 1.0 : 0.0)) < 1e-10);

    const Vector gl = functional_gradient_fd(log_det_functional(), map.vecb(Matrix::Identity(4, 4)), map, Vector());
    for (Index t = 0; t < map.p_star(); ++t) {
        const auto [i, j] = map.pairs()[static_cast<std::size_t>(t)];
        CHECK(std::abs(gl(t) - (i == j ? 1.0 : 0.0)) < 1e-8);
    }
    // log|S|: derivative 2 (S^{-1})_ij off the diagonal.
    const Vector gs = functional_gradient_fd(log_det_functional(), map.vecb(s), map, Vector());
    const Matrix inv = oracle::gauss_jordan_inverse(s);
    for (Index t = 0; t < map.p_star(); ++t) {
        const auto [i, j] = map.pairs()[static_cast<std::size_t>(t)];
        CHECK(gs(t) == doctest::Approx((i == j ? 1.0 : 2.0) * inv(i, j)).epsilon(1e-6));
    }
}

TEST_CASE("analytic conditional-mean gradient agrees with finite differences") {
    for (unsigned trial = 0; trial < 10; ++trial) {
        const Index p = 3 + trial % 5;
        const Index k = 1 + trial % 2;
        const BandIndexMap map(p, k);
        const Matrix s = random_banded_pd(p, k, 80 + trial);
        const Vector x = Vector::LinSpaced(p - 1, -1.0 + trial * 0.1, 1.5);
        const Functional cm = conditional_mean_functional();
        const Vector analytic = cm.gradient(s, x, map);
        const Vector fd = functional_gradient_fd(cm, map.vecb(s), map, x);
        CHECK((analytic - fd).norm() <= 1e-5 * std::max(1.0, analytic.norm()));
    }
}

TEST_CASE("delta-method interval for a variance entry") {
    const Index n = 50;
    const IntervalEstimate iv =
        delta_method_ci(Matrix::Identity(3, 3), BandIndexMap(3, 0), n, entry_functional(0, 0), 0.95, Vector());
    const double z = boost::math::quantile(boost::math::normal(), 0.975);
    CHECK(iv.lower == doctest::Approx(1.0 - z * std::sqrt(2.0 / n)).epsilon(1e-10));
    CHECK(iv.upper == doctest::Approx(1.0 + z * std::sqrt(2.0 / n)).epsilon(1e-10));
    CHECK(iv.method == IntervalMethod::delta);

    const Matrix s = random_banded_pd(5, 1, 90);
    const Vector x = Vector::LinSpaced(4, 1.0, -1.0);
    const BandIndexMap map(5, 1);
    const IntervalEstimate a = delta_method_ci(s, map, 100, conditional_mean_functional(), 0.95, x);
    const IntervalEstimate b = delta_method_ci(s, map, 400, conditional_mean_functional(), 0.95, x);
    CHECK(b.length() == doctest::Approx(a.length() / 2.0).epsilon(1e-12));
    CHECK_THROWS_AS(delta_method_ci(Matrix::Ones(3, 3) + Matrix::Identity(3, 3), BandIndexMap(3, 0), 10,
                                    entry_functional(0, 0), 0.95, Vector()),
                    InvalidArgument);
}

TEST_CASE("delta-method coverage at fixed p") {
    TrueCovSpec spec;
    spec.p = 5;
    spec.k0 = 1;
    const Matrix truth = make_true_cov(spec);
    const BandIndexMap map(5, 1);
    const int reps = 200;
    int covered = 0;
    for (int r = 0; r < reps; ++r) {
        const SeedSpec seed = SeedSpec{91, 0}.substream(r);
        const DataMatrix x = sample_mvn(truth, 200, seed.substream(0));
        const Vector head = sample_mvn(truth, 1, seed.substream(1)).row(0).head(4).transpose();
        const Matrix est = mle_icf(sample_cov(x), BandSpec(1, 5));
        const IntervalEstimate iv = delta_method_ci(est, map, 200, conditional_mean_functional(), 0.95, head);
        if (iv.contains(conditional_mean(truth, head))) ++covered;
    }
    const double coverage = static_cast<double>(covered) / reps;
    CHECK(coverage >= 0.91);
    CHECK(coverage <= 0.99);
}

TEST_CASE("normal quantile") {
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
    CHECK(normal_quantile(0.5) == doctest::Approx(0.0));
    CHECK_THROWS_AS(normal_quantile(1.0), InvalidArgument);
}

}
