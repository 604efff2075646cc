#pragma once

// Scalar special functions: log K_nu(x) carried with a separate exponent so
// that neither tiny nor huge values over/underflow, its derivative in the
// order, and the digamma function.

#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <string>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "errors.hpp"

namespace skewbfa::specfun {

/// log K_nu(x) together with the inputs it was evaluated at.
struct BesselEval {
    double log_value;
    double order;
    double arg;
};

namespace detail {

inline constexpr double kEps = std::numeric_limits<double>::epsilon();
inline constexpr int kMaxIter = 100000;

// K_nu(x) == mantissa * 2^exponent * exp(base). `base` depends only on x (and
// on which expansion was used, itself a function of x), so two evaluations at
// the same x and nearby orders share it exactly.
struct ScaledK {
    double mantissa;
    long exponent;
    double base;
};

// Starting pair (K_mu, K_mu+1) for |mu| <= 1/2, both scaled by exp(-base).
struct StartPair {
    double k_mu;
    double k_mu1;
    double base;
};

// Temme's series, x <= 2. Returned values are multiplied by x/2.
inline StartPair temme_series(double mu, double x) {
    const double x2 = 0.5 * x;
    const double mu2 = mu * mu;
    const double pimu = std::numbers::pi * mu;

    const double gampl = 1.0 / std::tgamma(1.0 + mu);
    const double gammi = 1.0 / std::tgamma(1.0 - mu);
    double gam1 = -std::numbers::egamma;
    if (mu != 0.0) {
        gam1 = (boost::math::tgamma1pm1(mu) - boost::math::tgamma1pm1(-mu)) * gampl * gammi /
               (2.0 * mu);
    }
    const double gam2 = 0.5 * (gammi + gampl);

    const double fact = std::abs(pimu) < kEps ? 1.0 : pimu / std::sin(pimu);
    double d = -std::log(x2);
    double e = mu * d;
    const double fact2 = std::abs(e) < kEps ? 1.0 : std::sinh(e) / e;
    double ff = fact * (gam1 * std::cosh(e) + gam2 * fact2 * d);
    double sum = ff;
    e = std::exp(e);
    double p = 0.5 * e / gampl;
    double q = 0.5 / (e * gammi);
    double c = 1.0;
    d = x2 * x2;
    double sum1 = p;
    for (int i = 1; i <= kMaxIter; ++i) {
        const double di = i;
        ff = (di * ff + p + q) / (di * di - mu2);
        c *= d / di;
        p /= di - mu;
        q /= di + mu;
        const double del = c * ff;
        sum += del;
        sum1 += c * (p - di * ff);
        if (std::abs(del) < std::abs(sum) * kEps) break;
    }
    // K_mu = sum, K_mu+1 = sum1 * 2/x; factor out 2/x.
    return {sum * x2, sum1, std::log(2.0 / x)};
}

// Steed's continued fraction CF2, x >= 2. Values carry exp(x).
inline StartPair steed_cf2(double mu, double x) {
    const double mu2 = mu * mu;
    double b = 2.0 * (1.0 + x);
    double d = 1.0 / b;
    double h = d;
    double delh = d;
    double q1 = 0.0;
    double q2 = 1.0;
    const double a1 = 0.25 - mu2;
    double q = a1;
    double c = a1;
    double a = -a1;
    double s = 1.0 + q * delh;
    for (int i = 1; i < kMaxIter; ++i) {
        a -= 2 * i;
        c = -a * c / (i + 1.0);
        const double qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        const double dels = q * delh;
        s += dels;
        if (std::abs(dels / s) < kEps) break;
    }
    h *= a1;
    const double k_mu = std::sqrt(std::numbers::pi / (2.0 * x)) / s;
    const double k_mu1 = k_mu * (mu + x + 0.5 - h) / x;
    return {k_mu, k_mu1, -x};
}

inline void check_args(double order, double arg) {
    if (!std::isfinite(order) || !std::isfinite(arg)) {
        throw DomainError("bessel_k: non-finite input");
    }
    if (!(arg > 0.0)) {
        throw DomainError("bessel_k: argument must be positive, got " + std::to_string(arg));
    }
}

// Forward recurrence from the Temme/Steed starting pair up to |order|.
inline ScaledK scaled_bessel_k(double order, double x) {
    const double nu = std::abs(order);
    const double steps = std::floor(nu + 0.5);
    const double mu = nu - steps;
    const StartPair start = x <= 2.0 ? temme_series(mu, x) : steed_cf2(mu, x);

    double km = start.k_mu;
    double kp = start.k_mu1;
    long exponent = 0;
    const long n = static_cast<long>(steps);
    if (n == 0) return {km, 0, start.base};

    constexpr double kRescale = 0x1p500;
    for (long j = 1; j < n; ++j) {
        const double next = km + (2.0 * (mu + static_cast<double>(j)) / x) * kp;
        km = kp;
        kp = next;
        if (kp > kRescale) {
            int e = 0;
            std::frexp(kp, &e);
            kp = std::ldexp(kp, -e);
            km = std::ldexp(km, -e);
            exponent += e;
        }
    }
    return {kp, exponent, start.base};
}

inline double log_of(const ScaledK& k) {
    return std::log(k.mantissa) + static_cast<double>(k.exponent) * std::numbers::ln2 + k.base;
}

}  // namespace detail

/// Natural log of the modified Bessel function of the second (third) kind,
/// K_order(arg). Even in the order. Accurate to roughly 1e-13 relative in
/// K (so absolute in the log) for |order| up to several hundred.
inline double log_bessel_k(double order, double arg) {
    detail::check_args(order, arg);
    return detail::log_of(detail::scaled_bessel_k(order, arg));
}

inline BesselEval eval_bessel_k(double order, double arg) {
    return {log_bessel_k(order, arg), order, arg};
}

/// exp(arg) * K_order(arg). Finite for large arg where K itself underflows.
inline double bessel_k_scaled(double order, double arg) {
    return std::exp(log_bessel_k(order, arg) + arg);
}

/// d/d(order) log K_order(arg) by central differences with step
/// h = max(1e-5, 1e-7 |order|) and one Richardson extrapolation.
inline double dlog_bessel_k_dorder(double order, double arg) {
    detail::check_args(order, arg);
    const auto diff = [arg](double lo, double hi) {
        const auto kl = detail::scaled_bessel_k(lo, arg);
        const auto kh = detail::scaled_bessel_k(hi, arg);
        // The shared base term cancels exactly; only mantissa and exponent differ.
        return (std::log(kh.mantissa) - std::log(kl.mantissa)) +
               static_cast<double>(kh.exponent - kl.exponent) * std::numbers::ln2;
    };
    const double h = std::max(1e-5, 1e-7 * std::abs(order));
    const double coarse = diff(order - h, order + h) / (2.0 * h);
    const double fine = diff(order - 0.5 * h, order + 0.5 * h) / h;
    return (4.0 * fine - coarse) / 3.0;
}

inline double digamma(double x) {
    if (!std::isfinite(x) || !(x > 0.0)) {
        throw DomainError("digamma: argument must be positive and finite");
    }
    return boost::math::digamma(x);
}

inline double log_gamma(double x) {
    if (!std::isfinite(x) || !(x > 0.0)) {
        throw DomainError("log_gamma: argument must be positive and finite");
    }
    return std::lgamma(x);
}

}  // namespace skewbfa::specfun
