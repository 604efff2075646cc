#pragma once

// Three-stage AECM estimation for mixtures of skewed matrix variate bilinear
// factor analyzers. Stage 1 updates (pi, M, A, theta) with W latent, stage 2
// updates (Lambda, Sigma) with the column factors latent, stage 3 updates
// (Delta, Psi) with the row factors latent. Each stage is preceded by a
// fresh E-step so every CM step increases the observed log-likelihood.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>
#include <Eigen/Dense>

#include "bfa.hpp"
#include "errors.hpp"
#include "family.hpp"
#include "gig.hpp"
#include "matvar.hpp"
#include "model.hpp"
#include "specfun.hpp"

namespace skewbfa {

/// Per-(i, g) stage-1 quantities. Rows of z_hat sum to one.
struct EStepCache {
    Matrix z_hat;  // N x G
    Matrix a;      // E[W | X, z_g = 1]
    Matrix b;      // E[1/W | X, z_g = 1]
    Matrix c;      // E[log W | X, z_g = 1]; NaN when not requested
    Matrix log_density;
    Vector n_g;
    Vector a_bar;
    Vector b_bar;
    double loglik = 0.0;
    std::vector<int> collapsed;  // components whose likelihood is numerically infinite
    bool has_log_moment = false;

    int N() const { return static_cast<int>(z_hat.rows()); }
    int G() const { return static_cast<int>(z_hat.cols()); }
};

/// Conditional moments of one latent factor matrix Y: E[Y], E[Y/W] and
/// E[Y S^-1 Y' / W] for the scale S on the other side.
struct LatentMoments {
    Matrix e1;
    Matrix e2;
    Matrix e3;
};

struct EStepOptions {
    bool with_log_moment = true;
    bool use_labels = true;
    double collapse_tolerance = 1e-10;
};

namespace detail {

// Variance-gamma components with gamma <= np/2 have an unbounded density
// at X == M; a residual this small counts as having hit the singularity.
inline bool near_singularity(const Theta& theta, int np, double delta, double tol) {
    const auto* vg = std::get_if<VarGammaTheta>(&theta);
    if (vg == nullptr) return false;
    return vg->gamma <= 0.5 * np && delta / np < tol;
}

// log sum exp over a small set, summed in sorted order so the result does
// not depend on component order.
inline double log_sum_exp_sorted(std::vector<double>& terms) {
    std::sort(terms.begin(), terms.end(), std::greater<>());
    const double top = terms.front();
    if (!std::isfinite(top)) return top;
    double s = 0.0;
    for (double t : terms) s += std::exp(t - top);
    return top + std::log(s);
}

struct ComponentCache {
    StructuredScale row;
    StructuredScale col;
    Matrix a;  // zero for the Gaussian family
    double rho = 0.0;
    double log_pi = 0.0;
};

inline std::vector<ComponentCache> component_caches(const MixtureModel& model) {
    std::vector<ComponentCache> out;
    out.reserve(model.components.size());
    for (const auto& comp : model.components) {
        ComponentCache cc;
        std::tie(cc.row, cc.col) = assemble_scales(comp);
        cc.a = has_skewness(model.family) ? comp.a : Matrix::Zero(comp.rows(), comp.cols());
        cc.rho = quad_rho(cc.a, cc.row.inv_star, cc.col.inv_star);
        cc.log_pi = std::log(comp.pi);
        out.push_back(std::move(cc));
    }
    return out;
}

}  // namespace detail

/// Stage-1 E-step. Labelled observations (when `use_labels`) have z fixed to
/// their indicator and contribute log pi_g + log f_g to the log-likelihood.
/// Components whose likelihood is numerically infinite are listed in
/// `collapsed` and the log-likelihood is +inf. Throws StartFailure when an
/// observation has zero density under every component.
inline EStepCache estep_stage1(const MatrixSample& data, const MixtureModel& model,
                               const EStepOptions& opt = {}) {
    const int N = static_cast<int>(data.size());
    const int G = model.G();
    const int n = data.rows();
    const int p = data.cols();
    const int np = n * p;
    if (model.rows() != n || model.cols() != p) throw ShapeError("model and data dimensions differ");
    const bool gaussian = model.family == Family::gaussian;

    const auto comps = detail::component_caches(model);

    EStepCache cache;
    cache.z_hat = Matrix::Zero(N, G);
    cache.a = Matrix::Ones(N, G);
    cache.b = Matrix::Ones(N, G);
    cache.c = gaussian ? Matrix::Zero(N, G)
                       : Matrix::Constant(N, G, std::numeric_limits<double>::quiet_NaN());
    cache.log_density = Matrix::Zero(N, G);
    cache.has_log_moment = gaussian || opt.with_log_moment;
    std::vector<char> collapsed(G, 0);

    std::vector<double> terms(G);
    std::vector<double> loglik_terms(N);
    for (int i = 0; i < N; ++i) {
        const Matrix& x = data.x[i];
        for (int g = 0; g < G; ++g) {
            const auto& cc = comps[g];
            const auto& comp = model.components[g];
            const Matrix r = x - comp.m;
            const Matrix whitened = cc.row.inv_star * r * cc.col.inv_star;
            QuadForms q;
            q.delta = std::max(whitened.cwiseProduct(r).sum(), 0.0);
            q.cross = gaussian ? 0.0 : whitened.cwiseProduct(cc.a).sum();
            q.rho = cc.rho;

            double logf = 0.0;
            bool hit = detail::near_singularity(comp.theta, np, q.delta, opt.collapse_tolerance);
            if (!hit) {
                try {
                    logf = log_density_from_forms(comp.theta, n, p, cc.row.logdet_star,
                                                  cc.col.logdet_star, q);
                } catch (const DensitySingularity&) {
                    hit = true;
                }
            }
            if (hit || std::isnan(logf) || logf == std::numeric_limits<double>::infinity()) {
                collapsed[g] = 1;
                cache.log_density(i, g) = std::numeric_limits<double>::infinity();
                cache.a(i, g) = cache.b(i, g) = cache.c(i, g) = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            cache.log_density(i, g) = logf;
            if (!gaussian) {
                try {
                    const GigMoments mom =
                        conditional_w_moments(comp.theta, np, q.delta, q.rho, opt.with_log_moment);
                    cache.a(i, g) = mom.e_w;
                    cache.b(i, g) = mom.e_inv_w;
                    cache.c(i, g) = mom.e_log_w;
                } catch (const DegenerateConditional&) {
                    collapsed[g] = 1;
                }
            }
        }

        const int label = opt.use_labels ? data.label(static_cast<std::size_t>(i)) : 0;
        if (label > G) throw DomainError("label " + std::to_string(label) + " exceeds G");
        if (label > 0) {
            cache.z_hat(i, label - 1) = 1.0;
            loglik_terms[i] = comps[label - 1].log_pi + cache.log_density(i, label - 1);
            continue;
        }
        for (int g = 0; g < G; ++g) terms[g] = comps[g].log_pi + cache.log_density(i, g);
        std::vector<double> sorted = terms;
        const double lse = detail::log_sum_exp_sorted(sorted);
        loglik_terms[i] = lse;
        if (lse == -std::numeric_limits<double>::infinity()) {
            throw StartFailure("observation " + std::to_string(i) + " has zero density under every component");
        }
        if (!std::isfinite(lse)) continue;
        for (int g = 0; g < G; ++g) cache.z_hat(i, g) = std::exp(terms[g] - lse);
    }

    for (int g = 0; g < G; ++g) {
        if (collapsed[g]) cache.collapsed.push_back(g);
    }
    cache.n_g = cache.z_hat.colwise().sum().transpose();
    cache.a_bar = Vector::Zero(G);
    cache.b_bar = Vector::Zero(G);
    if (cache.collapsed.empty()) {
        for (int g = 0; g < G; ++g) {
            if (cache.n_g(g) > 0.0) {
                cache.a_bar(g) = cache.z_hat.col(g).dot(cache.a.col(g)) / cache.n_g(g);
                cache.b_bar(g) = cache.z_hat.col(g).dot(cache.b.col(g)) / cache.n_g(g);
            }
        }
        double total = 0.0;
        for (double t : loglik_terms) total += t;
        cache.loglik = total;
    } else {
        cache.loglik = std::numeric_limits<double>::infinity();
    }
    return cache;
}

/// Observed-data log-likelihood of the mixture, ignoring labels. Returns
/// +inf when some component density is numerically infinite.
inline double observed_loglik(const MatrixSample& data, const MixtureModel& model) {
    EStepOptions opt;
    opt.with_log_moment = false;
    opt.use_labels = false;
    return estep_stage1(data, model, opt).loglik;
}

struct LocationUpdate {
    double pi = 0.0;
    Matrix m;
    Matrix a;
};

/// Closed-form (M, A) update for component g. Throws DegenerateWeights when
/// the denominator vanishes (all W mass at one point).
inline LocationUpdate location_update(const MatrixSample& data, const EStepCache& cache, int g,
                                      Family family) {
    const int N = cache.N();
    const double ng = cache.n_g(g);
    LocationUpdate up;
    up.pi = ng / N;
    const Matrix zero = Matrix::Zero(data.rows(), data.cols());
    if (family == Family::gaussian) {
        Matrix s = zero;
        for (int i = 0; i < N; ++i) s += cache.z_hat(i, g) * data.x[i];
        up.m = s / ng;
        up.a = zero;
        return up;
    }
    const double abar = cache.a_bar(g);
    const double bbar = cache.b_bar(g);
    double den = -ng;
    Matrix num_m = zero;
    Matrix num_a = zero;
    for (int i = 0; i < N; ++i) {
        const double z = cache.z_hat(i, g);
        if (z == 0.0) continue;
        const double bi = cache.b(i, g);
        den += z * abar * bi;
        num_m += (z * (abar * bi - 1.0)) * data.x[i];
        num_a += (z * (bbar - bi)) * data.x[i];
    }
    if (!(std::abs(den) >= 1e-10 * ng)) {
        throw DegenerateWeights("location update denominator vanishes for component " + std::to_string(g));
    }
    up.m = num_m / den;
    up.a = num_a / den;
    return up;
}

/// Stage-1 (pi, M, A) updates for every component.
inline std::vector<LocationUpdate> mstep_stage1(const MatrixSample& data, const EStepCache& cache,
                                                Family family) {
    std::vector<LocationUpdate> out;
    out.reserve(cache.G());
    for (int g = 0; g < cache.G(); ++g) out.push_back(location_update(data, cache, g, family));
    return out;
}

/// Skewness used when the likelihood blows up: M is held at its previous
/// value and A = sum z (X - M_prev) / sum z a.
inline Matrix fallback_skewness(const MatrixSample& data, const EStepCache& cache, int g,
                                const Matrix& m_prev) {
    Matrix num = Matrix::Zero(m_prev.rows(), m_prev.cols());
    double den = 0.0;
    for (int i = 0; i < cache.N(); ++i) {
        const double z = cache.z_hat(i, g);
        if (z == 0.0) continue;
        num += z * (data.x[i] - m_prev);
        den += z * cache.a(i, g);
    }
    if (!(den > 0.0)) throw DegenerateWeights("fallback skewness has no weight");
    return num / den;
}

/// Reverts the listed components to their previous location and applies
/// the fallback skewness computed from `stage1_cache`.
inline void fallback_infinite_likelihood(MixtureModel& model, const MatrixSample& data,
                                         const EStepCache& stage1_cache,
                                         const std::vector<Matrix>& previous_m,
                                         const std::vector<int>& components) {
    for (int g : components) {
        auto& comp = model.components[g];
        comp.m = previous_m[g];
        if (has_skewness(model.family)) comp.a = fallback_skewness(data, stage1_cache, g, previous_m[g]);
    }
}

// ----------------------------------------------------------------------------
// theta updates

/// z-weighted averages of the latent moments for one component.
struct LatentSummary {
    double n_g = 0.0;
    double a_bar = 0.0;
    double b_bar = 0.0;
    double c_bar = 0.0;
};

inline LatentSummary latent_summary(const EStepCache& cache, int g) {
    LatentSummary s;
    s.n_g = cache.n_g(g);
    s.a_bar = cache.a_bar(g);
    s.b_bar = cache.b_bar(g);
    double c = 0.0;
    for (int i = 0; i < cache.N(); ++i) {
        const double z = cache.z_hat(i, g);
        if (z != 0.0) c += z * cache.c(i, g);
    }
    s.c_bar = c / s.n_g;
    return s;
}

/// Expected log-density of the latent weight law per observation, dropping
/// terms free of theta.
inline double expected_latent_loglik(const Theta& theta, const LatentSummary& s) {
    return std::visit(
        [&](const auto& t) -> double {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, GaussianTheta>) {
                return 0.0;
            } else if constexpr (std::is_same_v<T, SkewTTheta>) {
                const double h = 0.5 * t.nu;
                return h * std::log(h) - std::lgamma(h) - (h + 1.0) * s.c_bar - h * s.b_bar;
            } else if constexpr (std::is_same_v<T, GenHypTheta>) {
                return (t.lambda - 1.0) * s.c_bar - std::numbers::ln2 -
                       specfun::log_bessel_k(t.lambda, t.omega) - 0.5 * t.omega * (s.a_bar + s.b_bar);
            } else if constexpr (std::is_same_v<T, VarGammaTheta>) {
                return t.gamma * std::log(t.gamma) - std::lgamma(t.gamma) + (t.gamma - 1.0) * s.c_bar -
                       t.gamma * s.a_bar;
            } else {
                return t.kappa - 0.5 * t.kappa * t.kappa * s.a_bar;
            }
        },
        theta);
}

struct ThetaBounds {
    double nu_lo = 2.001, nu_hi = 500.0;
    double gamma_lo = 0.05, gamma_hi = 500.0;
    double omega_lo = 0.05, omega_hi = 500.0;
    double lambda_lo = -50.0, lambda_hi = 50.0;
};

struct ThetaUpdate {
    Theta theta;
    bool clamped = false;        // stationary point outside the bounds
    bool kept_previous = false;  // candidate lowered Q, previous value retained
};

namespace detail {

// Root of a decreasing function on [lo, hi]; clamps when not bracketed.
inline std::pair<double, bool> decreasing_root(const std::function<double(double)>& f, double lo,
                                               double hi) {
    const double flo = f(lo);
    const double fhi = f(hi);
    if (flo <= 0.0) return {lo, flo < 0.0};
    if (fhi >= 0.0) return {hi, fhi > 0.0};
    std::uintmax_t iters = 200;
    const auto [x0, x1] = boost::math::tools::toms748_solve(
        f, lo, hi, flo, fhi, boost::math::tools::eps_tolerance<double>(52), iters);
    return {0.5 * (x0 + x1), false};
}

inline double st_score(double nu, const LatentSummary& s) {
    return std::log(0.5 * nu) + 1.0 - specfun::digamma(0.5 * nu) - (s.b_bar + s.c_bar);
}

inline double vg_score(double gamma, const LatentSummary& s) {
    return std::log(gamma) + 1.0 - specfun::digamma(gamma) + s.c_bar - s.a_bar;
}

inline std::pair<GenHypTheta, bool> gh_ascent(GenHypTheta start, const LatentSummary& s,
                                              const ThetaBounds& bd) {
    const int bits = std::numeric_limits<double>::digits / 2;
    GenHypTheta cur = start;
    cur.omega = std::clamp(cur.omega, bd.omega_lo, bd.omega_hi);
    cur.lambda = std::clamp(cur.lambda, bd.lambda_lo, bd.lambda_hi);
    double best = expected_latent_loglik(cur, s);
    for (int round = 0; round < 200; ++round) {
        const GenHypTheta before = cur;
        {
            const auto neg = [&](double log_omega) {
                return -expected_latent_loglik(GenHypTheta{std::exp(log_omega), cur.lambda}, s);
            };
            const auto [lw, v] = boost::math::tools::brent_find_minima(
                neg, std::log(bd.omega_lo), std::log(bd.omega_hi), bits);
            if (-v > best) {
                cur.omega = std::clamp(std::exp(lw), bd.omega_lo, bd.omega_hi);
                best = expected_latent_loglik(cur, s);
            }
        }
        {
            const auto neg = [&](double lambda) {
                return -expected_latent_loglik(GenHypTheta{cur.omega, lambda}, s);
            };
            const auto [l, v] = boost::math::tools::brent_find_minima(neg, bd.lambda_lo, bd.lambda_hi, bits);
            if (-v > best) {
                cur.lambda = l;
                best = -v;
            }
        }
        if (std::abs(cur.omega - before.omega) <= 1e-8 * (1.0 + before.omega) &&
            std::abs(cur.lambda - before.lambda) <= 1e-8 * (1.0 + std::abs(before.lambda))) {
            break;
        }
    }
    const double edge = 1e-6;
    const bool clamped = cur.omega <= bd.omega_lo * (1.0 + edge) || cur.omega >= bd.omega_hi * (1.0 - edge) ||
                         cur.lambda <= bd.lambda_lo + edge || cur.lambda >= bd.lambda_hi - edge;
    return {cur, clamped};
}

}  // namespace detail

/// Maximizes the expected latent log-density over theta for one component.
inline ThetaUpdate update_theta(const Theta& current, const LatentSummary& s, const ThetaBounds& bd = {}) {
    ThetaUpdate up;
    up.theta = current;
    std::visit(
        [&](const auto& t) {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, SkewTTheta>) {
                const auto [nu, cl] = detail::decreasing_root(
                    [&](double v) { return detail::st_score(v, s); }, bd.nu_lo, bd.nu_hi);
                up.theta = SkewTTheta{nu};
                up.clamped = cl;
            } else if constexpr (std::is_same_v<T, VarGammaTheta>) {
                const auto [g, cl] = detail::decreasing_root(
                    [&](double v) { return detail::vg_score(v, s); }, bd.gamma_lo, bd.gamma_hi);
                up.theta = VarGammaTheta{g};
                up.clamped = cl;
            } else if constexpr (std::is_same_v<T, NigTheta>) {
                up.theta = NigTheta{1.0 / s.a_bar};
            } else if constexpr (std::is_same_v<T, GenHypTheta>) {
                const auto [gh, cl] = detail::gh_ascent(t, s, bd);
                up.theta = gh;
                up.clamped = cl;
            }
        },
        current);
    if (expected_latent_loglik(up.theta, s) < expected_latent_loglik(current, s)) {
        up.theta = current;
        up.kept_previous = true;
    }
    return up;
}

/// theta update for every component from a stage-1 cache that carries
/// E[log W].
inline std::vector<ThetaUpdate> mstep_theta(const MixtureModel& model, const EStepCache& cache,
                                            const ThetaBounds& bd = {}) {
    if (!cache.has_log_moment) throw DomainError("theta update needs E[log W] in the cache");
    std::vector<ThetaUpdate> out;
    for (int g = 0; g < model.G(); ++g) {
        out.push_back(update_theta(model.components[g].theta, latent_summary(cache, g), bd));
    }
    return out;
}

// ----------------------------------------------------------------------------
// factor stages

struct FactorUpdate {
    Matrix loadings;
    Vector diag;
};

namespace detail {

// The factor stages are written once for an oriented view: rows carry the
// factor structure being updated, `other_inv` is the inverse of the assembled
// scale on the other side. Stage 2 uses the data as is; stage 3 uses the
// transposes with the roles of the two scales swapped.
struct Oriented {
    const std::vector<Matrix>& x;
    const Matrix& m;
    const Matrix& a;
    const StructuredScale& own;
    const Matrix& other_inv;
};

inline LatentMoments oriented_moments(const Matrix& resid, const Matrix& a, double ai, double bi,
                                      const StructuredScale& own, const Matrix& other_inv) {
    const Matrix lr = own.proj * resid;
    const Matrix la = own.proj * a;
    LatentMoments mom;
    mom.e1 = lr - ai * la;
    mom.e2 = bi * lr - la;
    // b lr P lr' - lr P la' - la P lr' + a la P la', regrouped as
    // b (lr - la/b) P (.)' + (a - 1/b) la P la' so it stays PSD when a b
    // rounds to just below 1.
    const Matrix lu = lr - la / bi;
    mom.e3 = static_cast<double>(resid.cols()) * own.inner_inv + bi * (lu * other_inv * lu.transpose()) +
             std::max(ai - 1.0 / bi, 0.0) * (la * other_inv * la.transpose());
    mom.e3 = 0.5 * (mom.e3 + mom.e3.transpose()).eval();
    return mom;
}

inline FactorUpdate oriented_update(const Oriented& v, const EStepCache& cache, int g, double floor) {
    const int N = cache.N();
    const Eigen::Index dim = v.m.rows();
    const Eigen::Index other = v.m.cols();
    const Eigen::Index k = v.own.proj.rows();
    const double ng = cache.n_g(g);

    Matrix s3 = Matrix::Zero(k, k);
    Matrix c = Matrix::Zero(dim, k);
    Matrix sum_e1 = Matrix::Zero(k, other);
    for (int i = 0; i < N; ++i) {
        const double z = cache.z_hat(i, g);
        if (z == 0.0) continue;
        const Matrix resid = v.x[i] - v.m;
        const LatentMoments mom = oriented_moments(resid, v.a, cache.a(i, g), cache.b(i, g), v.own, v.other_inv);
        s3 += z * mom.e3;
        c += z * ((resid * v.other_inv) * mom.e2.transpose());
        sum_e1 += z * mom.e1;
    }

    FactorUpdate up;
    if (k > 0) {
        s3 = 0.5 * (s3 + s3.transpose()).eval();
        Eigen::LLT<Matrix> llt(s3);
        if (llt.info() != Eigen::Success) throw StartFailure("factor moment sum is singular");
        const Matrix cd = c - (v.a * v.other_inv) * sum_e1.transpose();
        up.loadings = llt.solve(cd.transpose()).transpose();
    } else {
        up.loadings = Matrix::Zero(dim, 0);
    }

    // diag of the expected scaled residual second moment, written as a sum
    // of squares so it stays nonnegative when the scale is near singular:
    // K [b U P U' + (a - 1/b) A P A'] K' + other * B O B', with
    // K = I - B proj, U = R - A / b, P = other_inv, O = inner_inv.
    Eigen::LLT<Matrix> p_llt(v.other_inv);
    if (p_llt.info() != Eigen::Success) throw StartFailure("scale inverse is not positive definite");
    const Matrix p_half = p_llt.matrixL();
    const auto rowsq = [&](const Matrix& m) -> Vector { return (m * p_half).rowwise().squaredNorm(); };
    const Matrix ka = v.a - up.loadings * (v.own.proj * v.a);
    const Vector ka_sq = rowsq(ka);
    Vector total = Vector::Zero(dim);
    double sum_excess = 0.0;
    for (int i = 0; i < N; ++i) {
        const double z = cache.z_hat(i, g);
        if (z == 0.0) continue;
        const double ai = cache.a(i, g);
        const double bi = cache.b(i, g);
        const Matrix u = v.x[i] - v.m - v.a / bi;
        total += (z * bi) * rowsq(u - up.loadings * (v.own.proj * u));
        sum_excess += z * std::max(ai - 1.0 / bi, 0.0);
    }
    total += sum_excess * ka_sq;
    if (k > 0) {
        Eigen::LLT<Matrix> o_llt(v.own.inner_inv);
        if (o_llt.info() != Eigen::Success) throw StartFailure("factor covariance is not positive definite");
        const Matrix bo = up.loadings * Matrix(o_llt.matrixL());
        total += ng * static_cast<double>(other) * bo.rowwise().squaredNorm();
    }
    up.diag = (total / (ng * static_cast<double>(other))).cwiseMax(floor);
    if (!up.diag.allFinite() || !up.loadings.allFinite()) throw StartFailure("non-finite factor update");
    return up;
}

inline std::vector<Matrix> transposed(const std::vector<Matrix>& xs) {
    std::vector<Matrix> out;
    out.reserve(xs.size());
    for (const auto& x : xs) out.emplace_back(x.transpose());
    return out;
}

}  // namespace detail

/// Stage-2 moments of the column factors Y^B (q x p) per [g][i].
inline std::vector<std::vector<LatentMoments>> estep_stage2(const MatrixSample& data,
                                                            const MixtureModel& model,
                                                            const EStepCache& cache) {
    std::vector<std::vector<LatentMoments>> out(model.G());
    for (int g = 0; g < model.G(); ++g) {
        const auto& comp = model.components[g];
        const auto [row, col] = assemble_scales(comp);
        const Matrix a = has_skewness(model.family) ? comp.a : Matrix::Zero(comp.rows(), comp.cols());
        for (std::size_t i = 0; i < data.size(); ++i) {
            out[g].push_back(detail::oriented_moments(data.x[i] - comp.m, a, cache.a(i, g), cache.b(i, g),
                                                      row, col.inv_star));
        }
    }
    return out;
}

/// Stage-3 moments of the row factors Y^A (n x r) per [g][i].
inline std::vector<std::vector<LatentMoments>> estep_stage3(const MatrixSample& data,
                                                            const MixtureModel& model,
                                                            const EStepCache& cache) {
    std::vector<std::vector<LatentMoments>> out(model.G());
    for (int g = 0; g < model.G(); ++g) {
        const auto& comp = model.components[g];
        const auto [row, col] = assemble_scales(comp);
        const Matrix a = has_skewness(model.family) ? comp.a : Matrix::Zero(comp.rows(), comp.cols());
        for (std::size_t i = 0; i < data.size(); ++i) {
            LatentMoments t = detail::oriented_moments((data.x[i] - comp.m).transpose(), a.transpose(),
                                                       cache.a(i, g), cache.b(i, g), col, row.inv_star);
            t.e1.transposeInPlace();
            t.e2.transposeInPlace();
            out[g].push_back(std::move(t));
        }
    }
    return out;
}

/// (Lambda, Sigma diagonal) for every component.
inline std::vector<FactorUpdate> mstep_stage2(const MatrixSample& data, const MixtureModel& model,
                                              const EStepCache& cache, double floor = 1e-8) {
    std::vector<FactorUpdate> out;
    for (int g = 0; g < model.G(); ++g) {
        const auto& comp = model.components[g];
        const auto [row, col] = assemble_scales(comp);
        const Matrix a = has_skewness(model.family) ? comp.a : Matrix::Zero(comp.rows(), comp.cols());
        out.push_back(detail::oriented_update({data.x, comp.m, a, row, col.inv_star}, cache, g, floor));
    }
    return out;
}

/// (Delta, Psi diagonal) for every component. `transposed_x` may carry the
/// transposed observations to avoid recomputing them.
inline std::vector<FactorUpdate> mstep_stage3(const MatrixSample& data, const MixtureModel& model,
                                              const EStepCache& cache, double floor = 1e-8,
                                              const std::vector<Matrix>* transposed_x = nullptr) {
    std::vector<Matrix> local;
    if (transposed_x == nullptr) {
        local = detail::transposed(data.x);
        transposed_x = &local;
    }
    std::vector<FactorUpdate> out;
    for (int g = 0; g < model.G(); ++g) {
        const auto& comp = model.components[g];
        const auto [row, col] = assemble_scales(comp);
        const Matrix mt = comp.m.transpose();
        const Matrix at = has_skewness(model.family) ? Matrix(comp.a.transpose())
                                                     : Matrix::Zero(comp.cols(), comp.rows());
        out.push_back(detail::oriented_update({*transposed_x, mt, at, col, row.inv_star}, cache, g, floor));
    }
    return out;
}

// ----------------------------------------------------------------------------
// convergence

/// Stopping threshold: `absolute` when positive, otherwise `relative` times
/// |l| at iteration `freeze_iteration` (no stopping before that).
struct EpsilonPolicy {
    double relative = 1e-3;
    int freeze_iteration = 5;
    double absolute = 0.0;

    std::optional<double> epsilon(const std::vector<double>& trace) const {
        if (absolute > 0.0) return absolute;
        if (static_cast<int>(trace.size()) <= freeze_iteration) return std::nullopt;
        return relative * std::abs(trace[freeze_iteration]);
    }
};

struct ConvergenceDecision {
    bool stop = false;
    double acceleration = std::numeric_limits<double>::quiet_NaN();
    double l_inf = std::numeric_limits<double>::quiet_NaN();
    double gap = std::numeric_limits<double>::quiet_NaN();
};

/// Aitken acceleration on the last three trace entries.
inline ConvergenceDecision check_convergence(const std::vector<double>& trace, double epsilon) {
    ConvergenceDecision d;
    if (trace.size() < 3) return d;
    const double l0 = trace[trace.size() - 3];
    const double l1 = trace[trace.size() - 2];
    const double l2 = trace[trace.size() - 1];
    const double den = l1 - l0;
    const double num = l2 - l1;
    if (den == 0.0) {
        d.stop = std::abs(num) < epsilon;
        if (num == 0.0) {
            d.l_inf = l1;
            d.gap = 0.0;
        }
        return d;
    }
    d.acceleration = num / den;
    if (d.acceleration >= 1.0) return d;
    d.l_inf = l1 + num / (1.0 - d.acceleration);
    d.gap = d.l_inf - l1;
    d.stop = d.gap > 0.0 && d.gap < epsilon;
    return d;
}

inline ConvergenceDecision check_convergence(const std::vector<double>& trace, const EpsilonPolicy& policy) {
    const auto eps = policy.epsilon(trace);
    if (!eps) return {};
    return check_convergence(trace, *eps);
}

// ----------------------------------------------------------------------------
// fitting

struct FitOptions {
    int starts = 5;
    int max_iter = 1000;
    std::uint64_t seed = 1;
    EpsilonPolicy epsilon;
    double variance_floor = 1e-8;
    double collapse_tolerance = 1e-10;
    ThetaBounds theta_bounds;
    /// Cycles run with responsibilities held at the random start memberships.
    int held_cycles = 1;
    /// When set, the fit runs a single start from this model.
    std::optional<MixtureModel> initial;
};

struct FitResult {
    MixtureModel model;
    std::vector<double> loglik_trace;
    bool converged = false;
    int iterations = 0;
    double final_loglik = -std::numeric_limits<double>::infinity();
    Matrix z_hat;
    int fallback_count = 0;
    int best_start = -1;
    std::vector<double> start_logliks;  // NaN for failed starts
    std::vector<std::string> failures;
    std::uint64_t seed = 0;

    const std::vector<ComponentParams>& components() const { return model.components; }
};

/// Random initial model: Dirichlet(1) soft memberships (labelled rows fixed
/// to their indicator), weighted means, skewness 0.1, diagonal scales from
/// weighted residuals, loadings uniform on [-1, 1], default theta.
/// Random soft memberships from a uniform simplex draw; labelled rows get
/// their indicator.
inline Matrix initial_memberships(const MatrixSample& data, int G, Rng& rng) {
    const int N = static_cast<int>(data.size());
    Matrix z = Matrix::Zero(N, G);
    std::exponential_distribution<double> expo(1.0);
    for (int i = 0; i < N; ++i) {
        const int label = data.label(static_cast<std::size_t>(i));
        if (label > G) throw DomainError("label " + std::to_string(label) + " exceeds G");
        if (label > 0) {
            z(i, label - 1) = 1.0;
            continue;
        }
        double s = 0.0;
        for (int g = 0; g < G; ++g) s += (z(i, g) = expo(rng));
        z.row(i) /= s;
    }
    return z;
}

/// Starting parameters from memberships z: weighted means, skewness 0.1,
/// moment-based diagonals, uniform loadings.
inline MixtureModel initial_model_from(const MatrixSample& data, Family family, const Matrix& z, int q, int r,
                                       Rng& rng, double floor = 1e-8) {
    const int N = static_cast<int>(data.size());
    const int G = static_cast<int>(z.cols());
    const int n = data.rows();
    const int p = data.cols();
    if (z.rows() != N) throw ShapeError("membership rows differ from the sample size");
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    MixtureModel model;
    model.family = family;
    for (int g = 0; g < G; ++g) {
        const double ng = z.col(g).sum();
        if (ng < 1.0) throw StartFailure("initial component " + std::to_string(g) + " is empty");
        ComponentParams c;
        c.pi = ng / N;
        c.m = Matrix::Zero(n, p);
        for (int i = 0; i < N; ++i) c.m += z(i, g) * data.x[i];
        c.m /= ng;
        c.a = has_skewness(family) ? Matrix::Constant(n, p, 0.1) : Matrix::Zero(n, p);
        Vector srow = Vector::Zero(n);
        Vector scol = Vector::Zero(p);
        for (int i = 0; i < N; ++i) {
            const Matrix res = data.x[i] - c.m;
            srow += z(i, g) * res.rowwise().squaredNorm();
            scol += z(i, g) * res.colwise().squaredNorm().transpose();
        }
        c.sigma_diag = (srow / (p * ng)).cwiseMax(floor);
        // Both diagonals carry the entry variance; split it so that the
        // Kronecker product matches it once rather than squared.
        c.psi_diag = (scol / (n * ng * c.sigma_diag.mean())).cwiseMax(floor);
        c.lambda = Matrix(n, q);
        for (Eigen::Index j = 0; j < c.lambda.cols(); ++j)
            for (Eigen::Index k = 0; k < c.lambda.rows(); ++k) c.lambda(k, j) = unif(rng);
        c.delta = Matrix(p, r);
        for (Eigen::Index j = 0; j < c.delta.cols(); ++j)
            for (Eigen::Index k = 0; k < c.delta.rows(); ++k) c.delta(k, j) = unif(rng);
        c.theta = default_theta(family);
        model.components.push_back(std::move(c));
    }
    return model;
}

inline MixtureModel initial_model(const MatrixSample& data, Family family, int G, int q, int r, Rng& rng,
                                  double floor = 1e-8) {
    const Matrix z = initial_memberships(data, G, rng);
    return initial_model_from(data, family, z, q, r, rng, floor);
}

namespace detail {

// Replace the responsibilities of an E-step (and the weighted summaries
// that depend on them).
inline void set_memberships(EStepCache& cache, const Matrix& z) {
    cache.z_hat = z;
    cache.n_g = z.colwise().sum().transpose();
    for (int g = 0; g < cache.G(); ++g) {
        cache.a_bar(g) = cache.n_g(g) > 0.0 ? z.col(g).dot(cache.a.col(g)) / cache.n_g(g) : 0.0;
        cache.b_bar(g) = cache.n_g(g) > 0.0 ? z.col(g).dot(cache.b.col(g)) / cache.n_g(g) : 0.0;
    }
}

inline void require_nonempty(const EStepCache& cache) {
    for (int g = 0; g < cache.G(); ++g) {
        if (!(cache.n_g(g) >= 1.0)) throw StartFailure("component " + std::to_string(g) + " emptied");
    }
}

inline void require_finite(const EStepCache& cache, const char* where) {
    if (!std::isfinite(cache.loglik)) {
        throw StartFailure(std::string("non-finite log-likelihood after ") + where);
    }
}

}  // namespace detail

/// One AECM run from a given starting model. With `initial_z`, the first
/// cycle holds the responsibilities at those memberships in every stage
/// (so the scales adapt before the memberships are released), and the
/// trace starts after that cycle.
inline FitResult run_aecm(const MatrixSample& data, MixtureModel model, const FitOptions& opt,
                          const Matrix* initial_z = nullptr) {
    model.validate();
    const int G = model.G();
    const std::vector<Matrix> xt = detail::transposed(data.x);

    EStepOptions full;
    full.collapse_tolerance = opt.collapse_tolerance;
    EStepOptions light = full;
    light.with_log_moment = false;

    FitResult res;
    EStepCache cache = estep_stage1(data, model, full);
    if (!cache.collapsed.empty()) throw StartFailure("starting model has an infinite likelihood");
    detail::require_finite(cache, "initialization");

    // `hold` keeps the responsibilities fixed within the cycle; the E-step
    // that closes the cycle is always free.
    const auto cycle = [&](EStepCache&& cache, const Matrix* hold) {
        const auto settle = [&](EStepCache& c) {
            if (hold != nullptr) detail::set_memberships(c, *hold);
            detail::require_nonempty(c);
        };
        // stage 1: pi, M, A, theta
        std::vector<Matrix> previous_m;
        for (const auto& c : model.components) previous_m.push_back(c.m);
        const auto thetas = has_skewness(model.family) ? mstep_theta(model, cache, opt.theta_bounds)
                                                       : std::vector<ThetaUpdate>{};
        for (int g = 0; g < G; ++g) {
            auto& comp = model.components[g];
            try {
                LocationUpdate up = location_update(data, cache, g, model.family);
                comp.m = std::move(up.m);
                comp.a = std::move(up.a);
            } catch (const DegenerateWeights&) {
                comp.a = fallback_skewness(data, cache, g, previous_m[g]);
                ++res.fallback_count;
            }
            comp.pi = cache.n_g(g) / cache.N();
            if (!thetas.empty()) comp.theta = thetas[g].theta;
        }
        const EStepCache stage1_cache = std::move(cache);
        EStepCache next = estep_stage1(data, model, light);
        if (!next.collapsed.empty()) {
            fallback_infinite_likelihood(model, data, stage1_cache, previous_m, next.collapsed);
            res.fallback_count += static_cast<int>(next.collapsed.size());
            next = estep_stage1(data, model, light);
            if (!next.collapsed.empty()) throw StartFailure("likelihood stays infinite after fallback");
        }
        detail::require_finite(next, "stage 1");
        settle(next);

        // stage 2: Lambda, Sigma
        {
            const auto ups = mstep_stage2(data, model, next, opt.variance_floor);
            for (int g = 0; g < G; ++g) {
                model.components[g].lambda = ups[g].loadings;
                model.components[g].sigma_diag = ups[g].diag;
            }
        }
        next = estep_stage1(data, model, light);
        if (!next.collapsed.empty()) throw StartFailure("likelihood became infinite in stage 2");
        detail::require_finite(next, "stage 2");
        settle(next);

        // stage 3: Delta, Psi
        const auto ups = mstep_stage3(data, model, next, opt.variance_floor, &xt);
        for (int g = 0; g < G; ++g) {
            model.components[g].delta = ups[g].loadings;
            model.components[g].psi_diag = ups[g].diag;
        }
        next = estep_stage1(data, model, full);
        if (!next.collapsed.empty()) throw StartFailure("likelihood became infinite in stage 3");
        detail::require_finite(next, "stage 3");
        detail::require_nonempty(next);
        return next;
    };

    if (initial_z != nullptr && opt.held_cycles > 0) {
        if (initial_z->rows() != cache.N() || initial_z->cols() != G) {
            throw ShapeError("initial memberships do not match the data and model");
        }
        detail::set_memberships(cache, *initial_z);
        detail::require_nonempty(cache);
        for (int k = 0; k < opt.held_cycles; ++k) {
            detail::set_memberships(cache, *initial_z);
            cache = cycle(std::move(cache), initial_z);
        }
    } else {
        detail::require_nonempty(cache);
    }
    res.loglik_trace.push_back(cache.loglik);

    for (int it = 1; it <= opt.max_iter; ++it) {
        cache = cycle(std::move(cache), nullptr);
        res.loglik_trace.push_back(cache.loglik);
        res.iterations = it;
        if (check_convergence(res.loglik_trace, opt.epsilon).stop) {
            res.converged = true;
            break;
        }
    }
    res.final_loglik = res.loglik_trace.back();
    res.z_hat = std::move(cache.z_hat);
    res.model = std::move(model);
    return res;
}

/// Multistart AECM fit; the start with the highest final log-likelihood is
/// kept. Labels in `data` (1..G) make the fit semi-supervised.
inline FitResult fit(const MatrixSample& data, Family family, int G, int q, int r, const FitOptions& opt = {}) {
    data.validate();
    if (G < 1) throw DomainError("G must be at least 1");
    if (q < 0 || r < 0 || q > data.rows() || r > data.cols()) {
        throw DomainError("factor counts out of range");
    }
    if (opt.starts < 1) throw DomainError("need at least one start");
    for (int l : data.labels) {
        if (l > G) throw DomainError("label " + std::to_string(l) + " exceeds G");
    }

    std::optional<FitResult> best;
    std::vector<double> start_ll;
    std::vector<std::string> failures;
    const int starts = opt.initial ? 1 : opt.starts;
    for (int s = 0; s < starts; ++s) {
        try {
            MixtureModel init;
            std::optional<Matrix> z0;
            if (opt.initial) {
                init = *opt.initial;
                if (init.family != family || init.G() != G || init.q() != q || init.r() != r ||
                    init.rows() != data.rows() || init.cols() != data.cols()) {
                    throw ShapeError("initial model does not match the requested configuration");
                }
            } else {
                std::seed_seq seq{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32),
                                  static_cast<std::uint32_t>(s)};
                Rng rng(seq);
                z0 = initial_memberships(data, G, rng);
                init = initial_model_from(data, family, *z0, q, r, rng, opt.variance_floor);
            }
            FitResult run = run_aecm(data, std::move(init), opt, z0 ? &*z0 : nullptr);
            start_ll.push_back(run.final_loglik);
            if (!best || run.final_loglik > best->final_loglik) {
                run.best_start = s;
                best = std::move(run);
            }
        } catch (const StartFailure& e) {
            start_ll.push_back(std::numeric_limits<double>::quiet_NaN());
            failures.push_back("start " + std::to_string(s) + ": " + e.what());
        } catch (const DomainError& e) {
            start_ll.push_back(std::numeric_limits<double>::quiet_NaN());
            failures.push_back("start " + std::to_string(s) + ": " + e.what());
        }
    }
    if (!best) {
        std::string msg = "all starts failed";
        for (const auto& f : failures) msg += "; " + f;
        throw FitError(msg);
    }
    best->start_logliks = std::move(start_ll);
    best->failures = std::move(failures);
    best->seed = opt.seed;
    return std::move(*best);
}

struct Prediction {
    std::vector<int> labels;  // 1-based MAP class
    Matrix z_hat;
};

/// MAP classification; ties go to the lowest component index.
inline std::vector<int> map_labels(const Matrix& z_hat) {
    std::vector<int> out(z_hat.rows());
    for (Eigen::Index i = 0; i < z_hat.rows(); ++i) {
        int best = 0;
        for (Eigen::Index g = 1; g < z_hat.cols(); ++g) {
            if (z_hat(i, g) > z_hat(i, best)) best = static_cast<int>(g);
        }
        out[i] = best + 1;
    }
    return out;
}

inline Prediction predict(const MixtureModel& model, const MatrixSample& data, bool use_labels = false) {
    model.validate();
    EStepOptions opt;
    opt.with_log_moment = false;
    opt.use_labels = use_labels;
    EStepCache cache = estep_stage1(data, model, opt);
    if (!cache.collapsed.empty()) throw DensitySingularity("model density is unbounded at an observation");
    Prediction p;
    p.labels = map_labels(cache.z_hat);
    p.z_hat = std::move(cache.z_hat);
    return p;
}

}  // namespace skewbfa
