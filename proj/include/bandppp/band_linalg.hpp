#pragma once

// Dense symmetric-matrix primitives used throughout the library: k-banding,
// the eigenvalue-floor adjustment that turns a banded matrix into a
// positive-definite one, extreme eigenvalues and spectral norm.
//
// Everything here is a free function over Eigen expressions and works for any
// real scalar type; the rest of the library instantiates it with double.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>

#include "bandppp/errors.hpp"

namespace bandppp {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// A p x p dense symmetric matrix. Instances produced by the library are
// symmetric to within 1e-12 relative and finite; use make_covariance() to
// validate external input.
using CovarianceMatrix = Matrix;

// Observations in rows: n x p.
using DataMatrix = Matrix;

struct BandSpec {
    Index k = 0;
    Index p = 1;

    BandSpec() = default;
    BandSpec(Index bandwidth, Index dim) : k(bandwidth), p(dim) {
        if (dim < 1) throw InvalidArgument("BandSpec: dimension must be positive");
        if (bandwidth < 0 || bandwidth > dim - 1) {
            throw InvalidArgument("BandSpec: bandwidth " + std::to_string(bandwidth) +
                                  " outside [0, " + std::to_string(dim - 1) + "]");
        }
    }

    bool in_band(Index i, Index j) const { return std::abs(i - j) <= k; }
};

// Eigenvalue bounds of the banded class: lower <= lambda_min, lambda_max <= upper.
struct ClassBounds {
    double upper = 1.0;  // M0
    double lower = 1.0;  // M1

    ClassBounds() = default;
    ClassBounds(double upper_bound, double lower_bound) : upper(upper_bound), lower(lower_bound) {
        if (!(lower_bound > 0.0) || !(lower_bound <= upper_bound) || !std::isfinite(upper_bound)) {
            throw InvalidArgument("ClassBounds: need 0 < lower <= upper < inf");
        }
    }
};

template <typename Scalar>
struct EigenExtremes {
    Scalar min;
    Scalar max;
};

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
    return m.allFinite();
}

template <typename Derived>
void require_square(const Eigen::MatrixBase<Derived>& m, const char* who) {
    if (m.rows() != m.cols()) {
        throw InvalidArgument(std::string(who) + ": matrix is not square");
    }
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* who) {
    if (!m.allFinite()) throw NumericError(std::string(who) + ": non-finite entries");
}

// Symmetrizes by averaging with the transpose. Relative asymmetry above 1e-8
// (max |m_ij - m_ji| over max |m_ij|) is rejected.
template <typename Derived>
typename Derived::PlainObject make_covariance(const Eigen::MatrixBase<Derived>& m) {
    using Scalar = typename Derived::Scalar;
    require_square(m, "make_covariance");
    require_finite(m, "make_covariance");
    const Scalar scale = std::max<Scalar>(m.cwiseAbs().maxCoeff(), Scalar(1e-300));
    const Scalar asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (asym > Scalar(1e-8) * scale) {
        throw InvalidArgument("make_covariance: matrix is not symmetric (relative asymmetry " +
                              std::to_string(static_cast<double>(asym / scale)) + ")");
    }
    typename Derived::PlainObject out = (m + m.transpose()) / Scalar(2);
    return out;
}

// k-band operation: keeps entries with |i - j| <= k and zeroes the rest.
template <typename Derived>
typename Derived::PlainObject band(const Eigen::MatrixBase<Derived>& m, Index k) {
    require_square(m, "band");
    if (k < 0) throw InvalidArgument("band: negative bandwidth");
    typename Derived::PlainObject out = m;
    const Index p = m.rows();
    for (Index j = 0; j < p; ++j) {
        for (Index i = 0; i < p; ++i) {
            if (std::abs(i - j) > k) out(i, j) = 0;
        }
    }
    return out;
}

template <typename Derived>
typename Derived::PlainObject band(const Eigen::MatrixBase<Derived>& m, const BandSpec& spec) {
    if (m.rows() != spec.p || m.cols() != spec.p) {
        throw InvalidArgument("band: matrix dimension " + std::to_string(m.rows()) +
                              " does not match band spec dimension " + std::to_string(spec.p));
    }
    return band(m, spec.k);
}

template <typename Derived>
bool is_banded(const Eigen::MatrixBase<Derived>& m, Index k) {
    const Index p = m.rows();
    for (Index j = 0; j < p; ++j) {
        for (Index i = 0; i < p; ++i) {
            if (std::abs(i - j) > k && m(i, j) != 0) return false;
        }
    }
    return true;
}

template <typename Derived>
EigenExtremes<typename Derived::Scalar> extreme_eigenvalues(const Eigen::MatrixBase<Derived>& m) {
    using Plain = typename Derived::PlainObject;
    require_square(m, "extreme_eigenvalues");
    require_finite(m, "extreme_eigenvalues");
    Eigen::SelfAdjointEigenSolver<Plain> solver(m.derived(), Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw NumericError("extreme_eigenvalues: eigensolver failed");
    const auto& ev = solver.eigenvalues();
    return {ev(0), ev(ev.size() - 1)};
}

template <typename Derived>
typename Derived::Scalar min_eigenvalue(const Eigen::MatrixBase<Derived>& m) {
    return extreme_eigenvalues(m).min;
}

// Largest absolute eigenvalue, which equals the spectral norm for symmetric input.
template <typename Derived>
typename Derived::Scalar spectral_norm(const Eigen::MatrixBase<Derived>& m) {
    const auto ext = extreme_eigenvalues(m);
    return std::max(std::abs(ext.min), std::abs(ext.max));
}

// Diagonal shift that lifts lambda_min to eps; zero when lambda_min >= eps
// (exact comparison). The shift carries a few ulps of the spectral scale on
// top of eps - lambda_min so that the shifted matrix re-tests as >= eps under
// eigensolver rounding, which keeps the adjustment idempotent.
template <typename Scalar>
Scalar floor_shift(Scalar lambda_min, Scalar lambda_max, Scalar eps, Index p) {
    if (!(lambda_min < eps)) return Scalar(0);
    const Scalar scale = std::max({std::abs(lambda_min), std::abs(lambda_max), eps});
    return (eps - lambda_min) + Scalar(8) * static_cast<Scalar>(p) * std::numeric_limits<Scalar>::epsilon() * scale;
}

// Banding followed by the eigenvalue floor: the output is k-banded with
// lambda_min >= eps.
template <typename Derived>
typename Derived::PlainObject pd_band_adjust(const Eigen::MatrixBase<Derived>& m, const BandSpec& spec,
                                             typename Derived::Scalar eps) {
    if (!(eps > 0)) throw InvalidArgument("pd_band_adjust: eps must be positive");
    require_finite(m, "pd_band_adjust");
    auto banded = band(m, spec);
    const auto ext = extreme_eigenvalues(banded);
    banded.diagonal().array() += floor_shift(ext.min, ext.max, eps, banded.rows());
    return banded;
}

template <typename Derived>
bool class_membership(const Eigen::MatrixBase<Derived>& m, const BandSpec& spec,
                      const ClassBounds& bounds) {
    if (m.rows() != spec.p || m.cols() != spec.p) return false;
    if (!is_banded(m, spec.k)) return false;
    if (!m.allFinite()) return false;
    const auto ext = extreme_eigenvalues(m);
    return bounds.lower <= ext.min && ext.max <= bounds.upper;
}

}  // namespace bandppp
