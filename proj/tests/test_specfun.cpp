#include <cmath>
#include <numbers>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <gtest/gtest.h>

#include <skewbfa/specfun.hpp>

using namespace skewbfa;
using specfun::dlog_bessel_k_dorder;
using specfun::log_bessel_k;

namespace {

// log cosh and log |sinh| without overflow.
double log_cosh(double y) {
    y = std::abs(y);
    return y + std::log1p(std::exp(-2.0 * y)) - std::numbers::ln2;
}

double log_abs_sinh(double y) {
    y = std::abs(y);
    return y + std::log1p(-std::exp(-2.0 * y)) - std::numbers::ln2;
}

// K_nu(x) e^x = int_0^inf exp(-x (cosh t - 1)) cosh(nu t) dt.
double scaled_k_integral(double nu, double x) {
    boost::math::quadrature::exp_sinh<double> integrator;
    return integrator.integrate([&](double t) { return std::exp(-x * (std::cosh(t) - 1.0) + log_cosh(nu * t)); },
                                1e-14);
}

// d/dnu of the above: the integrand gains t tanh(nu t).
double scaled_dk_integral(double nu, double x) {
    boost::math::quadrature::exp_sinh<double> integrator;
    const double sign = nu < 0.0 ? -1.0 : 1.0;
    return sign * integrator.integrate(
                      [&](double t) {
                          if (t == 0.0 || nu == 0.0) return 0.0;
                          return t * std::exp(-x * (std::cosh(t) - 1.0) + log_abs_sinh(nu * t));
                      },
                      1e-14);
}

}  // namespace

TEST(Specfun, HalfIntegerClosedForms) {
    for (double x : {0.01, 0.3, 1.0, 2.0, 2.5, 7.0, 40.0, 700.0}) {
        const double k_half = 0.5 * std::log(std::numbers::pi / (2.0 * x)) - x;
        EXPECT_NEAR(log_bessel_k(0.5, x), k_half, 1e-13 * (1.0 + std::abs(k_half))) << x;
        EXPECT_NEAR(log_bessel_k(1.5, x), k_half + std::log1p(1.0 / x), 1e-13 * (1.0 + std::abs(k_half))) << x;
        EXPECT_NEAR(log_bessel_k(2.5, x), k_half + std::log(1.0 + 3.0 / x + 3.0 / (x * x)),
                    1e-13 * (1.0 + std::abs(k_half)))
            << x;
    }
    EXPECT_NEAR(log_bessel_k(0.5, 1.0), -0.7742086474, 1e-10);
}

TEST(Specfun, EvenInOrder) {
    for (double nu : {0.0, 0.25, 0.5, 1.0, 3.3, 12.0, 47.5}) {
        for (double x : {0.01, 0.5, 2.0, 9.0, 300.0}) {
            const double v = log_bessel_k(nu, x);
            EXPECT_LE(std::abs(v - log_bessel_k(-nu, x)), 1e-12 * std::abs(v) + 1e-300) << nu << " " << x;
        }
    }
}

TEST(Specfun, RecurrenceInOrder) {
    for (double nu = -20.0; nu <= 20.0; nu += 0.7) {
        for (double x : {0.01, 0.1, 0.9, 2.0, 2.1, 15.0, 120.0, 1000.0}) {
            // Divide through by the largest term to stay in range.
            const double lm = log_bessel_k(nu - 1.0, x);
            const double l0 = log_bessel_k(nu, x);
            const double lp = log_bessel_k(nu + 1.0, x);
            const double ref = std::max({lm, lp, l0 + std::log(2.0 * std::abs(nu) / x + 1e-300)});
            const double lhs = std::exp(lp - ref);
            const double rhs = std::exp(lm - ref) + (2.0 * nu / x) * std::exp(l0 - ref);
            EXPECT_NEAR(lhs, rhs, 1e-9) << nu << " " << x;
        }
    }
}

TEST(Specfun, MatchesIntegralRepresentation) {
    for (double nu : {0.0, 0.3, 1.0, 2.7, 8.0, 15.5}) {
        for (double x : {0.2, 1.0, 1.9, 2.2, 6.0, 30.0}) {
            const double ref = std::log(scaled_k_integral(nu, x)) - x;
            EXPECT_NEAR(log_bessel_k(nu, x), ref, 1e-11 * (1.0 + std::abs(ref))) << nu << " " << x;
        }
    }
}

TEST(Specfun, OrderDerivativeMatchesIntegral) {
    for (double nu : {-6.0, -0.4, 0.0, 0.5, 1.0, 3.25, 10.0}) {
        for (double x : {0.3, 1.0, 2.0, 5.0, 25.0}) {
            const double ref = scaled_dk_integral(nu, x) / scaled_k_integral(nu, x);
            EXPECT_NEAR(dlog_bessel_k_dorder(nu, x), ref, 1e-8 * (1.0 + std::abs(ref))) << nu << " " << x;
        }
    }
}

TEST(Specfun, DerivativeOfHalfOrderClosedForm) {
    // Matches the value obtained from the integral above; spot value at (1/2, 1).
    EXPECT_NEAR(dlog_bessel_k_dorder(0.5, 1.0), 0.361328616905, 1e-9);
    EXPECT_NEAR(dlog_bessel_k_dorder(0.0, 3.0), 0.0, 1e-10);
}

TEST(Specfun, ExtremeArguments) {
    // Small x: K_nu(x) ~ Gamma(nu) 2^(nu-1) x^-nu.
    const double small = std::lgamma(500.0) + 499.0 * std::numbers::ln2 - 500.0 * std::log(1e-6);
    EXPECT_NEAR(log_bessel_k(500.0, 1e-6), small, 1e-9 * std::abs(small));
    // Large x: K_nu(x) ~ sqrt(pi / 2x) e^-x (1 + (4 nu^2 - 1) / 8x + ...).
    const double x = 1e6;
    const double mu = 4.0 * 500.0 * 500.0;
    // Sum the asymptotic series until the terms stop mattering.
    double series = 1.0, term = 1.0;
    for (int k = 1; k < 60 && std::abs(term) > 1e-18; ++k) {
        term *= (mu - (2.0 * k - 1.0) * (2.0 * k - 1.0)) / (k * 8.0 * x);
        series += term;
    }
    const double large = 0.5 * std::log(std::numbers::pi / (2.0 * x)) - x + std::log(series);
    EXPECT_NEAR(log_bessel_k(500.0, x), large, 1e-12 * std::abs(large));
    EXPECT_TRUE(std::isfinite(log_bessel_k(0.0, 1e-300)));
    EXPECT_TRUE(std::isfinite(log_bessel_k(3.0, 1e300)));
    EXPECT_TRUE(std::isfinite(dlog_bessel_k_dorder(200.0, 1e4)));
}

TEST(Specfun, ScaledAndEvalAgree) {
    const auto e = specfun::eval_bessel_k(2.0, 3.0);
    EXPECT_EQ(e.order, 2.0);
    EXPECT_EQ(e.arg, 3.0);
    EXPECT_NEAR(std::log(specfun::bessel_k_scaled(2.0, 3.0)) - 3.0, e.log_value, 1e-13);
}

TEST(Specfun, DomainErrors) {
    EXPECT_THROW(log_bessel_k(1.0, 0.0), DomainError);
    EXPECT_THROW(log_bessel_k(1.0, -2.0), DomainError);
    EXPECT_THROW(log_bessel_k(std::nan(""), 1.0), DomainError);
    EXPECT_THROW(dlog_bessel_k_dorder(1.0, 0.0), DomainError);
    EXPECT_THROW(specfun::digamma(0.0), DomainError);
}

TEST(Specfun, Digamma) {
    EXPECT_NEAR(specfun::digamma(1.0), -std::numbers::egamma, 1e-15);
    EXPECT_NEAR(specfun::digamma(0.5), -std::numbers::egamma - 2.0 * std::numbers::ln2, 1e-14);
    // psi(x + 1) = psi(x) + 1/x
    for (double x : {0.05, 0.7, 3.0, 40.0}) {
        EXPECT_NEAR(specfun::digamma(x + 1.0), specfun::digamma(x) + 1.0 / x, 1e-12 * (1.0 + 1.0 / x));
    }
}
