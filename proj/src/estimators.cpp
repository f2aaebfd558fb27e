#include "bandppp/estimators.hpp"

#include <cmath>

namespace bandppp {

namespace {

void reject_near_singular(const Matrix& m, const char* who) {
    const auto ext = extreme_eigenvalues(m);
    if (!(ext.min > 0.0)) throw NotPositiveDefinite(std::string(who) + ": input is not positive definite");
    if (ext.min < 1e-10 * ext.max) {
        throw NotPositiveDefinite(std::string(who) + ": input is near-singular; apply ridge_adjusted_cov first");
    }
}

Matrix spd_inverse(const Matrix& m, const char* who) {
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) throw NumericError(std::string(who) + ": matrix lost positive definiteness");
    Matrix inv = llt.solve(Matrix::Identity(m.rows(), m.cols()));
    return (inv + inv.transpose()) / 2.0;
}

void require_dims(const Matrix& m, const BandSpec& spec, const char* who) {
    if (m.rows() != spec.p || m.cols() != spec.p) throw InvalidArgument(std::string(who) + ": dimension mismatch");
}

}  // namespace

CovarianceMatrix sample_cov(const DataMatrix& data) {
    if (data.rows() < 1) throw InvalidArgument("sample_cov: need at least one observation");
    Matrix s = data.transpose() * data / static_cast<double>(data.rows());
    return (s + s.transpose()) / 2.0;
}

Matrix banded_sample_cov(const DataMatrix& data, const BandSpec& spec) {
    return band(sample_cov(data), spec);
}

CovarianceMatrix ridge_adjusted_cov(const DataMatrix& data, double eps) {
    if (!(eps > 0.0)) throw InvalidArgument("ridge_adjusted_cov: eps must be positive");
    Matrix s = sample_cov(data);
    s.diagonal().array() += eps;
    return s;
}

double dual_residual(const CovarianceMatrix& a, const CovarianceMatrix& target, const BandSpec& spec) {
    const Matrix a_inv = spd_inverse(a, "dual_residual");
    const Matrix t_inv = spd_inverse(target, "dual_residual");
    double r = 0.0;
    for (Index j = 0; j < spec.p; ++j) {
        for (Index i = std::max<Index>(0, j - spec.k); i <= std::min(spec.p - 1, j + spec.k); ++i) {
            r = std::max(r, std::abs(a_inv(i, j) - t_inv(i, j)));
        }
    }
    return r;
}

SolverResult dual_mle_fit(const CovarianceMatrix& target, const BandSpec& spec, const SolverOptions& opts) {
    require_dims(target, spec, "dual_mle");
    require_finite(target, "dual_mle");
    if (is_banded(target, spec.k)) {
        reject_near_singular(target, "dual_mle");
        return {target, 0.0, 0, {}};
    }
    reject_near_singular(target, "dual_mle");

    const Index p = spec.p;
    const Index c = spec.k + 1;
    const Matrix w = spd_inverse(target, "dual_mle");

    // Fitted "concentration" (our banded covariance) and its inverse.
    Matrix fit = Matrix::Zero(p, p);
    Matrix fit_inv = Matrix::Zero(p, p);
    for (Index i = 0; i < p; ++i) {
        fit(i, i) = 1.0 / w(i, i);
        fit_inv(i, i) = w(i, i);
    }

    auto band_residual = [&](const Matrix& inv) {
        double r = 0.0;
        for (Index j = 0; j < p; ++j) {
            for (Index i = j; i <= std::min(p - 1, j + spec.k); ++i) r = std::max(r, std::abs(inv(i, j) - w(i, j)));
        }
        return r;
    };

    double residual = band_residual(fit_inv);
    std::size_t sweep = 0;
    while (residual > opts.tol) {
        if (sweep >= opts.max_iter) throw ConvergenceError("dual_mle: iteration cap exceeded", residual, sweep);
        ++sweep;
        for (Index start = 0; start + c <= p; ++start) {
            const Matrix cur = fit_inv.block(start, start, c, c);
            const Matrix diff = cur - w.block(start, start, c, c);
            if (diff.cwiseAbs().maxCoeff() == 0.0) continue;
            Eigen::LLT<Matrix> cur_llt(cur);
            Eigen::LLT<Matrix> w_llt(w.block(start, start, c, c));
            if (cur_llt.info() != Eigen::Success || w_llt.info() != Eigen::Success) {
                throw NumericError("dual_mle: non-positive-definite clique block");
            }
            const Matrix cur_inv = cur_llt.solve(Matrix::Identity(c, c));
            fit.block(start, start, c, c) += w_llt.solve(Matrix::Identity(c, c)) - cur_inv;
            // Covariance-form rank-c update of fit^{-1}.
            const Matrix cols = fit_inv.middleCols(start, c);
            const Matrix left = cols * cur_inv;
            fit_inv.noalias() -= left * diff * left.transpose();
        }
        fit = ((fit + fit.transpose()) / 2.0).eval();
        fit_inv = spd_inverse(fit, "dual_mle");
        residual = band_residual(fit_inv);
    }
    return {band(fit, spec.k), residual, sweep, {}};
}

CovarianceMatrix dual_mle(const CovarianceMatrix& target, const BandSpec& spec, const SolverOptions& opts) {
    return dual_mle_fit(target, spec, opts).estimate;
}

double gaussian_objective(const CovarianceMatrix& sigma, const CovarianceMatrix& s) {
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("gaussian_objective: sigma is not positive definite");
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    return llt.solve(s).trace() + log_det;
}

Matrix gaussian_objective_gradient(const CovarianceMatrix& sigma, const CovarianceMatrix& s) {
    const Matrix k = spd_inverse(sigma, "gaussian_objective_gradient");
    Matrix g = k - k * s * k;
    return (g + g.transpose()) / 2.0;
}

double kkt_residual(const CovarianceMatrix& sigma, const CovarianceMatrix& s, const BandSpec& spec) {
    const Matrix g = gaussian_objective_gradient(sigma, s);
    double r = 0.0;
    for (Index j = 0; j < spec.p; ++j) {
        for (Index i = j; i <= std::min(spec.p - 1, j + spec.k); ++i) r = std::max(r, std::abs(g(i, j)));
    }
    return r;
}

SolverResult mle_icf_fit(const CovarianceMatrix& s, const BandSpec& spec, const SolverOptions& opts) {
    require_dims(s, spec, "mle_icf");
    require_finite(s, "mle_icf");
    reject_near_singular(s, "mle_icf");
    const Index p = spec.p;

    if (spec.k == p - 1) return {s, kkt_residual(s, s, spec), 0, {gaussian_objective(s, s)}};

    Matrix sigma = Matrix::Zero(p, p);
    sigma.diagonal() = s.diagonal();
    SolverResult result;
    double objective = gaussian_objective(sigma, s);
    result.objective_trace.push_back(objective);
    double residual = kkt_residual(sigma, s, spec);

    std::size_t sweep = 0;
    while (residual > opts.tol) {
        if (sweep >= opts.max_iter) throw ConvergenceError("mle_icf: iteration cap exceeded", residual, sweep);
        ++sweep;
        Matrix prec = spd_inverse(sigma, "mle_icf");
        for (Index i = 0; i < p; ++i) {
            const Index lo = std::max<Index>(0, i - spec.k);
            const Index hi = std::min(p - 1, i + spec.k);
            std::vector<Index> nb;
            for (Index j = lo; j <= hi; ++j) {
                if (j != i) nb.push_back(j);
            }
            // Inverse of sigma_{-i,-i}, embedded in p x p with row/col i zero.
            Matrix rest_inv = prec - prec.col(i) * prec.row(i) / prec(i, i);
            rest_inv.row(i).setZero();
            rest_inv.col(i).setZero();

            const Index m = static_cast<Index>(nb.size());
            Vector beta = Vector::Zero(m);
            double cond_var = s(i, i);
            if (m > 0) {
                // Pseudo-variables Z = (sigma_{-i,-i}^{-1} X_{-i}) restricted to the neighbors.
                Matrix rows(m, p);
                for (Index a = 0; a < m; ++a) rows.row(a) = rest_inv.row(nb[a]);
                const Matrix s_zz = rows * s * rows.transpose();
                const Vector s_zx = rows * s.col(i);
                Eigen::LLT<Matrix> zz(s_zz);
                if (zz.info() != Eigen::Success) throw NumericError("mle_icf: singular pseudo-variable covariance");
                beta = zz.solve(s_zx);
                cond_var = s(i, i) - beta.dot(s_zx);
            }
            if (!(cond_var > 0.0)) throw NumericError("mle_icf: non-positive conditional variance");

            Vector col_new = Vector::Zero(p);
            for (Index a = 0; a < m; ++a) col_new(nb[a]) = beta(a);
            const Vector rb = rest_inv * col_new;
            const double sii = cond_var + col_new.dot(rb);
            col_new(i) = sii;
            sigma.col(i) = col_new;
            sigma.row(i) = col_new.transpose();

            // Block-inverse refresh of prec with the new row/column i.
            prec = rest_inv;
            prec.noalias() += rb * rb.transpose() / cond_var;
            prec.col(i) = -rb / cond_var;
            prec.row(i) = -rb.transpose() / cond_var;
            prec(i, i) = 1.0 / cond_var;
        }
        const double next = gaussian_objective(sigma, s);
        if (next > objective + 1e-10 * (1.0 + std::abs(objective))) {
            throw NumericError("mle_icf: objective increased between sweeps (internal consistency)");
        }
        objective = next;
        result.objective_trace.push_back(objective);
        residual = kkt_residual(sigma, s, spec);
    }
    result.estimate = band(sigma, spec.k);
    result.residual = residual;
    result.iterations = sweep;
    return result;
}

CovarianceMatrix mle_icf(const CovarianceMatrix& s, const BandSpec& spec, const SolverOptions& opts) {
    return mle_icf_fit(s, spec, opts).estimate;
}

}  // namespace bandppp
