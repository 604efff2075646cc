#pragma once

// Bilinear factor structure of a mixture component:
//   Sigma* = Sigma + Lambda Lambda',  Psi* = Psi + Delta Delta',
// with Sigma, Psi diagonal. Inverses go through the Woodbury identity and
// log-determinants through the matrix determinant lemma.

#include <cmath>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "errors.hpp"
#include "family.hpp"
#include "matvar.hpp"

namespace skewbfa {

struct ComponentParams {
    double pi = 1.0;
    Matrix m;           // n x p location
    Matrix a;           // n x p skewness
    Matrix lambda;      // n x q column-factor loadings
    Vector sigma_diag;  // n
    Matrix delta;       // p x r row-factor loadings
    Vector psi_diag;    // p
    Theta theta;

    int rows() const { return static_cast<int>(m.rows()); }
    int cols() const { return static_cast<int>(m.cols()); }
    int q() const { return static_cast<int>(lambda.cols()); }
    int r() const { return static_cast<int>(delta.cols()); }
};

/// diag + loadings loadings' in dense and factored form. `proj` is the
/// k x dim matrix (I + B' D^-1 B)^-1 B' D^-1; for the row scale this is
/// L_g, for the column scale its transpose is D_g.
struct StructuredScale {
    Matrix dense_star;
    Matrix inv_star;
    double logdet_star = 0.0;
    Matrix proj;
    Matrix inner_inv;
};

inline constexpr double kInnerConditionLimit = 1e12;

inline StructuredScale structured_scale(const Vector& diag, const Matrix& loadings) {
    const Eigen::Index dim = diag.size();
    const Eigen::Index k = loadings.cols();
    if (loadings.rows() != dim) throw ShapeError("loadings rows must match the diagonal length");
    if (!(diag.array() > 0.0).all() || !diag.allFinite()) {
        throw DomainError("scale diagonal must be strictly positive");
    }
    const Vector dinv = diag.cwiseInverse();
    const Matrix dinv_b = dinv.asDiagonal() * loadings;  // D^-1 B

    StructuredScale s;
    s.dense_star = Matrix(diag.asDiagonal()) + loadings * loadings.transpose();
    const Matrix inner = Matrix::Identity(k, k) + loadings.transpose() * dinv_b;

    Eigen::LLT<Matrix> inner_llt(inner);
    s.inner_inv = inner_llt.solve(Matrix::Identity(k, k));
    s.inner_inv = 0.5 * (s.inner_inv + s.inner_inv.transpose()).eval();
    s.proj = s.inner_inv * dinv_b.transpose();

    double cond = 1.0;
    if (k > 0) {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(inner, Eigen::EigenvaluesOnly);
        cond = eig.eigenvalues().maxCoeff() / eig.eigenvalues().minCoeff();
    }
    if (cond <= kInnerConditionLimit) {
        s.inv_star = Matrix(dinv.asDiagonal()) - dinv_b * s.inner_inv * dinv_b.transpose();
        double logdet_inner = 0.0;
        if (k > 0) logdet_inner = 2.0 * Matrix(inner_llt.matrixL()).diagonal().array().log().sum();
        s.logdet_star = diag.array().log().sum() + logdet_inner;
    } else {
        const SpdScale dense = SpdScale::from_matrix(s.dense_star);
        s.inv_star = dense.inverse;
        s.logdet_star = dense.logdet;
    }
    s.inv_star = 0.5 * (s.inv_star + s.inv_star.transpose()).eval();
    return s;
}

/// (row scale Sigma*, column scale Psi*).
inline std::pair<StructuredScale, StructuredScale> assemble_scales(const ComponentParams& c) {
    if (c.lambda.rows() != c.m.rows() || c.sigma_diag.size() != c.m.rows() ||
        c.delta.rows() != c.m.cols() || c.psi_diag.size() != c.m.cols()) {
        throw ShapeError("component parameter shapes disagree");
    }
    return {structured_scale(c.sigma_diag, c.lambda), structured_scale(c.psi_diag, c.delta)};
}

/// Packages a StructuredScale as an SpdScale (adds the Cholesky factor).
inline SpdScale to_spd(const StructuredScale& s) {
    SpdScale out;
    out.matrix = s.dense_star;
    out.inverse = s.inv_star;
    out.logdet = s.logdet_star;
    Eigen::LLT<Matrix> llt(s.dense_star);
    if (llt.info() != Eigen::Success) throw DomainError("assembled scale is not positive-definite");
    out.chol = llt.matrixL();
    return out;
}

/// Marginal law of X given membership: (M, A, Sigma*, Psi*, theta).
inline SkewMatParams marginal_density_params(const ComponentParams& c) {
    auto [row, col] = assemble_scales(c);
    SkewMatParams p;
    p.theta = c.theta;
    p.m = c.m;
    p.a = has_skewness(family_of(c.theta)) ? c.a : Matrix::Zero(c.m.rows(), c.m.cols());
    p.sigma = to_spd(row);
    p.psi = to_spd(col);
    return p;
}

}  // namespace skewbfa
