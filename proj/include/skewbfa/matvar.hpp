#pragma once

// Matrix variate normal and the four skewed matrix variate laws built from
// X = M + W A + sqrt(W) V, V ~ N_{n x p}(0, Sigma, Psi).

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "family.hpp"
#include "gig.hpp"
#include "specfun.hpp"

namespace skewbfa {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Symmetric positive-definite scale, factored once: the matrix, its
/// inverse, its lower Cholesky factor and log-determinant.
struct SpdScale {
    Matrix matrix;
    Matrix inverse;
    Matrix chol;
    double logdet = 0.0;

    static SpdScale from_matrix(const Matrix& s) {
        if (s.rows() != s.cols()) throw ShapeError("scale matrix must be square");
        Eigen::LLT<Matrix> llt(s);
        if (llt.info() != Eigen::Success) {
            throw DomainError("scale matrix is not symmetric positive-definite");
        }
        SpdScale out;
        out.matrix = s;
        out.chol = llt.matrixL();
        out.inverse = llt.solve(Matrix::Identity(s.rows(), s.cols()));
        out.inverse = 0.5 * (out.inverse + out.inverse.transpose()).eval();
        out.logdet = 2.0 * out.chol.diagonal().array().log().sum();
        if (!std::isfinite(out.logdet)) throw DomainError("scale matrix is singular");
        return out;
    }
};

struct MatNormParams {
    Matrix m;
    SpdScale sigma;
    SpdScale psi;
};

struct SkewMatParams {
    Theta theta;
    Matrix m;
    Matrix a;
    SpdScale sigma;
    SpdScale psi;

    Family family() const { return family_of(theta); }
};

/// The three trace forms every density and conditional expectation needs.
struct QuadForms {
    double delta = 0.0;  // tr(Sigma^-1 (X-M) Psi^-1 (X-M)')
    double rho = 0.0;    // tr(Sigma^-1 A Psi^-1 A')
    double cross = 0.0;  // tr(Sigma^-1 (X-M) Psi^-1 A')
};

namespace detail {

inline void check_conformable(const Matrix& x, const Matrix& sigma_inv, const Matrix& psi_inv) {
    if (sigma_inv.rows() != x.rows() || sigma_inv.cols() != x.rows() ||
        psi_inv.rows() != x.cols() || psi_inv.cols() != x.cols()) {
        throw ShapeError("matrix of size " + std::to_string(x.rows()) + "x" +
                         std::to_string(x.cols()) + " is not conformable with the scales");
    }
}

}  // namespace detail

/// tr(Sigma^-1 R Psi^-1 R') for a residual R, given the two inverses.
inline double quad_residual(const Matrix& residual, const Matrix& sigma_inv, const Matrix& psi_inv) {
    detail::check_conformable(residual, sigma_inv, psi_inv);
    return (sigma_inv * residual * psi_inv).cwiseProduct(residual).sum();
}

inline double quad_delta(const Matrix& x, const Matrix& m, const Matrix& sigma_inv,
                         const Matrix& psi_inv) {
    if (x.rows() != m.rows() || x.cols() != m.cols()) throw ShapeError("X and M differ in shape");
    return quad_residual(x - m, sigma_inv, psi_inv);
}

inline double quad_rho(const Matrix& a, const Matrix& sigma_inv, const Matrix& psi_inv) {
    return quad_residual(a, sigma_inv, psi_inv);
}

inline QuadForms quad_forms(const Matrix& x, const Matrix& m, const Matrix& a,
                            const Matrix& sigma_inv, const Matrix& psi_inv) {
    if (x.rows() != m.rows() || x.cols() != m.cols() || a.rows() != m.rows() ||
        a.cols() != m.cols()) {
        throw ShapeError("X, M and A must share a shape");
    }
    detail::check_conformable(x, sigma_inv, psi_inv);
    const Matrix r = x - m;
    const Matrix whitened = sigma_inv * r * psi_inv;
    QuadForms q;
    q.delta = whitened.cwiseProduct(r).sum();
    q.cross = whitened.cwiseProduct(a).sum();
    q.rho = (sigma_inv * a * psi_inv).cwiseProduct(a).sum();
    return q;
}

/// log of the normal part shared by all families:
/// -(np/2) log(2 pi) - (p/2) log|Sigma| - (n/2) log|Psi|.
inline double log_normal_const(int n, int p, double logdet_sigma, double logdet_psi) {
    const double np = static_cast<double>(n) * p;
    return -0.5 * np * std::log(2.0 * std::numbers::pi) - 0.5 * p * logdet_sigma -
           0.5 * n * logdet_psi;
}

/// Log-density of any family given the precomputed trace forms. Throws
/// DensitySingularity for the variance-gamma law at delta == 0 when
/// gamma <= np/2, where the density is unbounded.
inline double log_density_from_forms(const Theta& theta, int n, int p, double logdet_sigma,
                                     double logdet_psi, const QuadForms& q) {
    const double np = static_cast<double>(n) * p;
    const double base = log_normal_const(n, p, logdet_sigma, logdet_psi);
    using specfun::log_bessel_k;
    return std::visit(
        [&](const auto& t) -> double {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, GaussianTheta>) {
                return base - 0.5 * q.delta;
            } else if constexpr (std::is_same_v<T, SkewTTheta>) {
                const double nu = t.nu;
                const double head = base + q.cross + std::numbers::ln2 + 0.5 * nu * std::log(0.5 * nu) -
                                    std::lgamma(0.5 * nu);
                const double idx = 0.5 * (nu + np);
                const double db = q.delta + nu;
                if (q.rho * db < 1e-300) {
                    // A -> 0 limit: the matrix variate t density.
                    return head + std::lgamma(idx) + (idx - 1.0) * std::numbers::ln2 - idx * std::log(db);
                }
                return head - 0.5 * idx * (std::log(db) - std::log(q.rho)) +
                       log_bessel_k(-idx, std::sqrt(q.rho * db));
            } else if constexpr (std::is_same_v<T, GenHypTheta>) {
                const double idx = t.lambda - 0.5 * np;
                const double ra = q.rho + t.omega;
                const double db = q.delta + t.omega;
                return base + q.cross - log_bessel_k(t.lambda, t.omega) +
                       0.5 * idx * (std::log(db) - std::log(ra)) + log_bessel_k(idx, std::sqrt(ra * db));
            } else if constexpr (std::is_same_v<T, VarGammaTheta>) {
                const double g = t.gamma;
                const double idx = g - 0.5 * np;
                const double ra = q.rho + 2.0 * g;
                const double head = base + q.cross + std::numbers::ln2 + g * std::log(g) - std::lgamma(g);
                if (q.delta <= 0.0) {
                    if (idx <= 0.0) {
                        throw DensitySingularity("variance-gamma density is unbounded at X == M");
                    }
                    // delta -> 0 limit of (delta/ra)^(idx/2) K_idx(sqrt(ra delta)).
                    return head + std::lgamma(idx) + (idx - 1.0) * std::numbers::ln2 -
                           idx * std::log(ra);
                }
                return head + 0.5 * idx * (std::log(q.delta) - std::log(ra)) +
                       log_bessel_k(idx, std::sqrt(ra * q.delta));
            } else {
                const double k2 = t.kappa * t.kappa;
                const double idx = 0.5 * (1.0 + np);
                const double ra = q.rho + k2;
                const double db = q.delta + 1.0;
                return base - 0.5 * std::log(2.0 * std::numbers::pi) + std::numbers::ln2 + q.cross +
                       t.kappa - 0.5 * idx * (std::log(db) - std::log(ra)) +
                       log_bessel_k(-idx, std::sqrt(ra * db));
            }
        },
        theta);
}

inline double logpdf_matnorm(const Matrix& x, const MatNormParams& p) {
    const double delta = quad_delta(x, p.m, p.sigma.inverse, p.psi.inverse);
    return log_normal_const(static_cast<int>(x.rows()), static_cast<int>(x.cols()), p.sigma.logdet,
                            p.psi.logdet) -
           0.5 * delta;
}

/// Log-density of X under a skewed matrix variate law. A Gaussian theta
/// ignores A.
inline double logpdf_skew(const Matrix& x, const SkewMatParams& p) {
    validate_theta(p.theta);
    if (p.family() == Family::gaussian) return logpdf_matnorm(x, {p.m, p.sigma, p.psi});
    const QuadForms q = quad_forms(x, p.m, p.a, p.sigma.inverse, p.psi.inverse);
    return log_density_from_forms(p.theta, static_cast<int>(x.rows()), static_cast<int>(x.cols()),
                                  p.sigma.logdet, p.psi.logdet, q);
}

/// GIG law of W given X for each family, from delta and rho evaluated at
/// the (assembled) scales.
inline GigParams conditional_w_params(const Theta& theta, int np, double delta, double rho) {
    const double dnp = np;
    const GigParams g = std::visit(
        [&](const auto& t) -> GigParams {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, GaussianTheta>) {
                throw DomainError("the Gaussian family has no latent weight");
            } else if constexpr (std::is_same_v<T, SkewTTheta>) {
                return {rho, delta + t.nu, -(t.nu + dnp) / 2.0};
            } else if constexpr (std::is_same_v<T, GenHypTheta>) {
                return {rho + t.omega, delta + t.omega, t.lambda - dnp / 2.0};
            } else if constexpr (std::is_same_v<T, VarGammaTheta>) {
                return {rho + 2.0 * t.gamma, delta, t.gamma - dnp / 2.0};
            } else {
                return {rho + t.kappa * t.kappa, delta + 1.0, -(1.0 + dnp) / 2.0};
            }
        },
        theta);
    if (!(g.a > 0.0) || !(g.b > 0.0)) {
        throw DegenerateConditional("conditional law of W is not a proper GIG (a=" +
                                    std::to_string(g.a) + ", b=" + std::to_string(g.b) + ")");
    }
    return g;
}

inline GigParams conditional_w_params(const Matrix& x, const SkewMatParams& p) {
    const QuadForms q = quad_forms(x, p.m, p.a, p.sigma.inverse, p.psi.inverse);
    return conditional_w_params(p.theta, static_cast<int>(x.size()), q.delta, q.rho);
}

/// E[W | X], E[1/W | X], E[log W | X]. Gaussian gives (1, 1, 0); the skew-t
/// law with A == 0 has an inverse-gamma conditional, handled directly.
inline GigMoments conditional_w_moments(const Theta& theta, int np, double delta, double rho,
                                        bool with_log) {
    if (family_of(theta) == Family::gaussian) return {1.0, 1.0, 0.0};
    if (const auto* st = std::get_if<SkewTTheta>(&theta); st != nullptr && rho <= 0.0) {
        const double shape = 0.5 * (st->nu + np);
        const double rate = 0.5 * (delta + st->nu);
        GigMoments m;
        m.e_w = shape > 1.0 ? rate / (shape - 1.0) : std::numeric_limits<double>::infinity();
        m.e_inv_w = shape / rate;
        m.e_log_w = with_log ? std::log(rate) - specfun::digamma(shape)
                             : std::numeric_limits<double>::quiet_NaN();
        return m;
    }
    return gig_moments(conditional_w_params(theta, np, delta, rho), with_log);
}

/// n x p matrix of independent standard normals.
template <class Urbg>
Matrix standard_normal_matrix(Eigen::Index rows, Eigen::Index cols, Urbg& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    Matrix out(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = z(rng);
    }
    return out;
}

/// Draws via the variance-mean mixture: W from the family law, then
/// V = chol(Sigma) Z chol(Psi)'.
template <class Urbg>
std::vector<Matrix> sample_skew(const SkewMatParams& p, std::size_t count, Urbg& rng) {
    validate_theta(p.theta);
    if (p.m.rows() != p.sigma.matrix.rows() || p.m.cols() != p.psi.matrix.rows() ||
        p.a.rows() != p.m.rows() || p.a.cols() != p.m.cols()) {
        throw ShapeError("sample_skew: parameter shapes disagree");
    }
    const bool gaussian = p.family() == Family::gaussian;
    std::vector<Matrix> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double w = sample_latent_w(p.theta, 1, rng).front();
        const Matrix v = p.sigma.chol * standard_normal_matrix(p.m.rows(), p.m.cols(), rng) *
                         p.psi.chol.transpose();
        if (gaussian) {
            out.push_back(p.m + v);
        } else {
            out.push_back(p.m + w * p.a + std::sqrt(w) * v);
        }
    }
    return out;
}

}  // namespace skewbfa
