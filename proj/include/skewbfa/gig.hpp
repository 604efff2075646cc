#pragma once

// Generalized inverse Gaussian law GIG(a, b, lambda) with density
//   f(y) = (a/b)^(lambda/2) y^(lambda-1) / (2 K_lambda(sqrt(ab))) exp(-(a y + b/y)/2),
// its moments, the (omega, eta, lambda) parameterization, and samplers for
// the latent weight W of each distribution family.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "errors.hpp"
#include "family.hpp"
#include "specfun.hpp"

namespace skewbfa {

using Rng = std::mt19937_64;

struct GigParams {
    double a;
    double b;
    double lambda;
};

struct GigMoments {
    double e_w;      // E[Y]
    double e_inv_w;  // E[1/Y]
    double e_log_w;  // E[log Y]
};

inline void validate(const GigParams& p) {
    if (!(p.a > 0.0) || !(p.b > 0.0) || !std::isfinite(p.a) || !std::isfinite(p.b) ||
        !std::isfinite(p.lambda)) {
        throw DomainError("GIG parameters require a > 0, b > 0 and finite lambda");
    }
}

/// E[Y], E[1/Y], E[log Y]. With `with_log == false` the log moment (which
/// needs a numerical order derivative) is skipped and reported as NaN.
inline GigMoments gig_moments(const GigParams& p, bool with_log = true) {
    validate(p);
    const double omega = std::sqrt(p.a * p.b);
    const double log_k = specfun::log_bessel_k(p.lambda, omega);
    const double ratio_up = std::exp(specfun::log_bessel_k(p.lambda + 1.0, omega) - log_k);

    GigMoments m{};
    m.e_w = std::sqrt(p.b / p.a) * ratio_up;
    if (p.lambda <= 0.0) {
        m.e_inv_w = std::sqrt(p.a / p.b) * ratio_up - 2.0 * p.lambda / p.b;
    } else {
        // Same quantity via K_{lambda+1} - (2 lambda / omega) K_lambda = K_{lambda-1};
        // avoids cancellation when 2 lambda / b dominates.
        const double ratio_down = std::exp(specfun::log_bessel_k(p.lambda - 1.0, omega) - log_k);
        m.e_inv_w = std::sqrt(p.a / p.b) * ratio_down;
    }
    m.e_log_w = with_log ? 0.5 * std::log(p.b / p.a) + specfun::dlog_bessel_k_dorder(p.lambda, omega)
                         : std::numeric_limits<double>::quiet_NaN();
    return m;
}

/// (omega, eta, lambda) -> (a, b, lambda) with omega = sqrt(ab), eta = sqrt(a/b).
inline GigParams gig_convert(double omega, double eta, double lambda) {
    if (!(omega > 0.0) || !(eta > 0.0) || !std::isfinite(omega) || !std::isfinite(eta)) {
        throw DomainError("gig_convert: omega and eta must be positive");
    }
    return {omega * eta, omega / eta, lambda};
}

namespace detail {

template <class Urbg>
double open_uniform(Urbg& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double v = 0.0;
    do {
        v = u(rng);
    } while (v <= 0.0);
    return v;
}

// Mode of the standardized density x^(lambda-1) exp(-omega/2 (x + 1/x)).
inline double gig_mode(double lambda, double omega) {
    if (lambda >= 1.0) {
        return (std::sqrt((lambda - 1.0) * (lambda - 1.0) + omega * omega) + (lambda - 1.0)) / omega;
    }
    return omega / (std::sqrt((1.0 - lambda) * (1.0 - lambda) + omega * omega) + (1.0 - lambda));
}

// Ratio-of-uniforms without mode shift (Dagpunar 1988, Lehner 1989).
template <class Urbg>
double rou_noshift(double lambda, double omega, Urbg& rng) {
    const double t = 0.5 * (lambda - 1.0);
    const double s = 0.25 * omega;
    const double xm = gig_mode(lambda, omega);
    const double nc = t * std::log(xm) - s * (xm + 1.0 / xm);
    const double ym = ((lambda + 1.0) + std::sqrt((lambda + 1.0) * (lambda + 1.0) + omega * omega)) / omega;
    const double um = std::exp(0.5 * (lambda + 1.0) * std::log(ym) - s * (ym + 1.0 / ym) - nc);
    for (;;) {
        const double u = um * open_uniform(rng);
        const double v = open_uniform(rng);
        const double x = u / v;
        if (std::log(v) <= t * std::log(x) - s * (x + 1.0 / x) - nc) return x;
    }
}

// Hormann & Leydold: constant hat in the log-concave part; 0 <= lambda < 1,
// omega <= 1.
template <class Urbg>
double concave_hat(double lambda, double omega, Urbg& rng) {
    const double xm = gig_mode(lambda, omega);
    const double x0 = omega / (1.0 - lambda);
    const double k0 = std::exp((lambda - 1.0) * std::log(xm) - 0.5 * omega * (xm + 1.0 / xm));
    const double area0 = k0 * x0;
    double k1 = 0.0;
    double k2 = 0.0;
    double area1 = 0.0;
    double area2 = 0.0;
    if (x0 >= 2.0 / omega) {
        k2 = std::pow(x0, lambda - 1.0);
        area2 = k2 * 2.0 * std::exp(-omega * x0 / 2.0) / omega;
    } else {
        k1 = std::exp(-omega);
        area1 = lambda == 0.0 ? k1 * std::log(2.0 / (omega * omega))
                              : k1 / lambda * (std::pow(2.0 / omega, lambda) - std::pow(x0, lambda));
        k2 = std::pow(2.0 / omega, lambda - 1.0);
        area2 = k2 * 2.0 * std::exp(-1.0) / omega;
    }
    const double total = area0 + area1 + area2;
    for (;;) {
        double v = total * open_uniform(rng);
        double x = 0.0;
        double hx = 0.0;
        if (v <= area0) {
            x = x0 * v / area0;
            hx = k0;
        } else if ((v -= area0) <= area1) {
            if (lambda == 0.0) {
                x = omega * std::exp(std::exp(omega) * v);
                hx = k1 / x;
            } else {
                x = std::pow(std::pow(x0, lambda) + lambda / k1 * v, 1.0 / lambda);
                hx = k1 * std::pow(x, lambda - 1.0);
            }
        } else {
            v -= area1;
            const double lo = std::max(x0, 2.0 / omega);
            x = -2.0 / omega * std::log(std::exp(-omega / 2.0 * lo) - omega / (2.0 * k2) * v);
            hx = k2 * std::exp(-omega / 2.0 * x);
        }
        const double u = open_uniform(rng) * hx;
        if (std::log(u) <= (lambda - 1.0) * std::log(x) - omega / 2.0 * (x + 1.0 / x)) return x;
    }
}

// Ratio-of-uniforms with shift by the mode (Dagpunar 1989, Lehner 1989).
template <class Urbg>
double rou_shift(double lambda, double omega, Urbg& rng) {
    const double t = 0.5 * (lambda - 1.0);
    const double s = 0.25 * omega;
    const double xm = gig_mode(lambda, omega);
    const double nc = t * std::log(xm) - s * (xm + 1.0 / xm);

    // Roots of the cubic y^3 + a y^2 + b y + c bounding the shifted region.
    const double a = -(2.0 * (lambda + 1.0) / omega + xm);
    const double b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
    const double c = xm;
    const double p = b - a * a / 3.0;
    const double q = (2.0 * a * a * a) / 27.0 - (a * b) / 3.0 + c;
    const double fi = std::acos(-q / (2.0 * std::sqrt(-(p * p * p) / 27.0)));
    const double fak = 2.0 * std::sqrt(-p / 3.0);
    const double y1 = fak * std::cos(fi / 3.0) - a / 3.0;
    const double y2 = fak * std::cos(fi / 3.0 + 4.0 / 3.0 * std::numbers::pi) - a / 3.0;
    const double uplus = (y1 - xm) * std::exp(t * std::log(y1) - s * (y1 + 1.0 / y1) - nc);
    const double uminus = (y2 - xm) * std::exp(t * std::log(y2) - s * (y2 + 1.0 / y2) - nc);
    for (;;) {
        const double u = uminus + open_uniform(rng) * (uplus - uminus);
        const double v = open_uniform(rng);
        const double x = u / v + xm;
        if (x > 0.0 && std::log(v) <= t * std::log(x) - s * (x + 1.0 / x) - nc) return x;
    }
}

}  // namespace detail

/// One draw from GIG(a, b, lambda).
template <class Urbg>
double sample_gig(const GigParams& p, Urbg& rng) {
    validate(p);
    const double lambda = std::abs(p.lambda);
    const double omega = std::sqrt(p.a * p.b);
    const double alpha = std::sqrt(p.b / p.a);
    double x = 0.0;
    if (lambda > 2.0 || omega > 3.0) {
        x = detail::rou_shift(lambda, omega, rng);
    } else if (lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2) {
        x = detail::rou_noshift(lambda, omega, rng);
    } else {
        x = detail::concave_hat(lambda, omega, rng);
    }
    // A draw for -lambda is the reciprocal of a draw for lambda.
    return p.lambda < 0.0 ? alpha / x : alpha * x;
}

/// i.i.d. draws of the latent weight W for a family. Gaussian yields 1.
template <class Urbg>
std::vector<double> sample_latent_w(const Theta& theta, std::size_t count, Urbg& rng) {
    validate_theta(theta);
    std::vector<double> out(count, 1.0);
    std::visit(
        [&](const auto& t) {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, SkewTTheta>) {
                std::gamma_distribution<double> g(t.nu / 2.0, 2.0 / t.nu);
                for (auto& w : out) {
                    double v = 0.0;
                    do {
                        v = g(rng);
                    } while (!(v > 0.0));
                    w = 1.0 / v;
                }
            } else if constexpr (std::is_same_v<T, GenHypTheta>) {
                const GigParams p = gig_convert(t.omega, 1.0, t.lambda);
                for (auto& w : out) w = sample_gig(p, rng);
            } else if constexpr (std::is_same_v<T, VarGammaTheta>) {
                std::gamma_distribution<double> g(t.gamma, 1.0 / t.gamma);
                for (auto& w : out) {
                    do {
                        w = g(rng);
                    } while (!(w > 0.0));
                }
            } else if constexpr (std::is_same_v<T, NigTheta>) {
                // IG(delta = 1, kappa) == GIG(kappa^2, 1, -1/2).
                const GigParams p{t.kappa * t.kappa, 1.0, -0.5};
                for (auto& w : out) w = sample_gig(p, rng);
            }
        },
        theta);
    return out;
}

/// Analytic E[W] for each family's latent law.
inline double latent_w_mean(const Theta& theta) {
    validate_theta(theta);
    return std::visit(
        [](const auto& t) -> double {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, SkewTTheta>) {
                return t.nu > 2.0 ? t.nu / (t.nu - 2.0) : std::numeric_limits<double>::infinity();
            } else if constexpr (std::is_same_v<T, GenHypTheta>) {
                return gig_moments(gig_convert(t.omega, 1.0, t.lambda), false).e_w;
            } else if constexpr (std::is_same_v<T, NigTheta>) {
                return 1.0 / t.kappa;
            } else {
                return 1.0;
            }
        },
        theta);
}

}  // namespace skewbfa
