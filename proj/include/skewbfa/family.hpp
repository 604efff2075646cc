#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>

#include "errors.hpp"

namespace skewbfa {

/// Law of the latent mixing weight W in X = M + W A + sqrt(W) V.
enum class Family { gaussian, skew_t, gen_hyperbolic, variance_gamma, nig };

struct GaussianTheta {};
/// W ~ inverse-gamma(nu/2, nu/2).
struct SkewTTheta {
    double nu = 20.0;
};
/// W ~ GIG with omega = sqrt(ab), eta = 1, index lambda.
struct GenHypTheta {
    double omega = 1.0;
    double lambda = 0.0;
};
/// W ~ gamma(gamma, gamma).
struct VarGammaTheta {
    double gamma = 5.0;
};
/// W ~ inverse-Gaussian(delta = 1, kappa).
struct NigTheta {
    double kappa = 1.0;
};

/// Family-specific parameters; the alternative index matches Family.
using Theta = std::variant<GaussianTheta, SkewTTheta, GenHypTheta, VarGammaTheta, NigTheta>;

inline Family family_of(const Theta& theta) {
    return static_cast<Family>(theta.index());
}

/// Starting values used when a fit is initialized.
inline Theta default_theta(Family family) {
    switch (family) {
        case Family::gaussian: return GaussianTheta{};
        case Family::skew_t: return SkewTTheta{};
        case Family::gen_hyperbolic: return GenHypTheta{};
        case Family::variance_gamma: return VarGammaTheta{};
        case Family::nig: return NigTheta{};
    }
    throw DomainError("unknown family");
}

/// Number of free parameters in theta.
inline int theta_dimension(Family family) {
    switch (family) {
        case Family::gaussian: return 0;
        case Family::gen_hyperbolic: return 2;
        default: return 1;
    }
}

inline bool has_skewness(Family family) { return family != Family::gaussian; }

inline void validate_theta(const Theta& theta) {
    const auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw DomainError(std::string(name) + " must be positive and finite");
        }
    };
    std::visit(
        [&](const auto& t) {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, SkewTTheta>) positive(t.nu, "nu");
            if constexpr (std::is_same_v<T, GenHypTheta>) {
                positive(t.omega, "omega");
                if (!std::isfinite(t.lambda)) throw DomainError("lambda must be finite");
            }
            if constexpr (std::is_same_v<T, VarGammaTheta>) positive(t.gamma, "gamma");
            if constexpr (std::is_same_v<T, NigTheta>) positive(t.kappa, "kappa");
        },
        theta);
}

inline std::string_view family_tag(Family family) {
    switch (family) {
        case Family::gaussian: return "GAUSS";
        case Family::skew_t: return "ST";
        case Family::gen_hyperbolic: return "GH";
        case Family::variance_gamma: return "VG";
        case Family::nig: return "NIG";
    }
    return "?";
}

/// Accepts the short tags (ST, GH, VG, NIG, GAUSS) case-insensitively, plus
/// the model acronyms MMVSTFA, MMVGHFA, MMVVGFA, MMVNIGFA and MMVBFA.
inline Family parse_family(std::string_view text) {
    std::string up(text);
    std::transform(up.begin(), up.end(), up.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    if (up == "GAUSS" || up == "GAUSSIAN" || up == "MMVBFA") return Family::gaussian;
    if (up == "ST" || up == "MMVSTFA") return Family::skew_t;
    if (up == "GH" || up == "MMVGHFA") return Family::gen_hyperbolic;
    if (up == "VG" || up == "MMVVGFA") return Family::variance_gamma;
    if (up == "NIG" || up == "MMVNIGFA") return Family::nig;
    throw DomainError("unknown family tag '" + std::string(text) + "'");
}

inline constexpr std::array<Family, 5> kAllFamilies = {
    Family::gaussian, Family::skew_t, Family::gen_hyperbolic, Family::variance_gamma,
    Family::nig};

}  // namespace skewbfa
