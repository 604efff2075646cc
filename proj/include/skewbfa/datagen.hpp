#pragma once

// Two-component simulation design: M1 = 0, M2 = c (all entries), Sigma1 = 2I,
// Sigma2 = I, Psi1 = I, Psi2 = 2I, A = all ones, three column factors and two
// row factors drawn uniform on [-1, 1], equal mixing proportions.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "bfa.hpp"
#include "errors.hpp"
#include "family.hpp"
#include "gig.hpp"
#include "matvar.hpp"
#include "model.hpp"

namespace skewbfa {

/// Per-component theta used by the reference design.
inline std::vector<Theta> reference_thetas(Family family) {
    switch (family) {
        case Family::gaussian: return {GaussianTheta{}, GaussianTheta{}};
        case Family::skew_t: return {SkewTTheta{4.0}, SkewTTheta{20.0}};
        case Family::gen_hyperbolic: return {GenHypTheta{4.0, -4.0}, GenHypTheta{10.0, 4.0}};
        case Family::variance_gamma: return {VarGammaTheta{4.0}, VarGammaTheta{10.0}};
        case Family::nig: return {NigTheta{2.0}, NigTheta{4.0}};
    }
    throw DomainError("unknown family");
}

struct SimConfig {
    Family family = Family::skew_t;
    int d = 10;
    int n_obs = 200;
    double c = 1.0;
    std::uint64_t seed = 1;
    int q_true = 3;
    int r_true = 2;
    std::vector<double> pi{0.5, 0.5};
    std::vector<Theta> thetas;  // empty: reference_thetas(family)

    void validate() const {
        if (d < 1 || n_obs < 1) throw DomainError("d and n_obs must be positive");
        if (q_true < 0 || r_true < 0 || q_true > d || r_true > d) throw DomainError("bad factor counts");
        if (pi.size() != 2) throw DomainError("the reference design has two components");
        double s = 0.0;
        for (double v : pi) {
            if (!(v > 0.0)) throw DomainError("mixing proportions must be positive");
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-12) throw DomainError("mixing proportions must sum to one");
        if (!thetas.empty()) {
            if (thetas.size() != 2) throw DomainError("need one theta per component");
            for (const auto& t : thetas) {
                if (family_of(t) != family) throw DomainError("theta does not match family");
                validate_theta(t);
            }
        }
    }
};

struct SimData {
    MatrixSample sample;
    std::vector<int> truth;  // 1-based
    MixtureModel truth_model;
};

/// The generating mixture for a config; loadings are drawn from `rng`.
inline MixtureModel reference_model(const SimConfig& cfg, Rng& rng) {
    cfg.validate();
    const int d = cfg.d;
    const auto thetas = cfg.thetas.empty() ? reference_thetas(cfg.family) : cfg.thetas;
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    const auto draw = [&](int rows, int cols) {
        Matrix m(rows, cols);
        for (int j = 0; j < cols; ++j)
            for (int i = 0; i < rows; ++i) m(i, j) = unif(rng);
        return m;
    };
    MixtureModel model;
    model.family = cfg.family;
    for (int g = 0; g < 2; ++g) {
        ComponentParams c;
        c.pi = cfg.pi[g];
        c.m = g == 0 ? Matrix::Zero(d, d) : Matrix::Constant(d, d, cfg.c);
        c.a = has_skewness(cfg.family) ? Matrix::Ones(d, d) : Matrix::Zero(d, d);
        c.sigma_diag = Vector::Constant(d, g == 0 ? 2.0 : 1.0);
        c.psi_diag = Vector::Constant(d, g == 0 ? 1.0 : 2.0);
        c.lambda = draw(d, cfg.q_true);
        c.delta = draw(d, cfg.r_true);
        c.theta = thetas[g];
        model.components.push_back(std::move(c));
    }
    return model;
}

/// N draws from a mixture with their 1-based component labels.
inline SimData sample_mixture(const MixtureModel& model, int n_obs, Rng& rng) {
    model.validate();
    std::vector<double> weights;
    std::vector<SkewMatParams> params;
    for (const auto& c : model.components) {
        weights.push_back(c.pi);
        params.push_back(marginal_density_params(c));
    }
    std::discrete_distribution<int> pick(weights.begin(), weights.end());
    SimData out;
    out.truth_model = model;
    out.sample.x.reserve(n_obs);
    for (int i = 0; i < n_obs; ++i) {
        const int g = pick(rng);
        out.truth.push_back(g + 1);
        out.sample.x.push_back(sample_skew(params[g], 1, rng).front());
    }
    return out;
}

/// Reproducible dataset for a config: same seed, same bits.
inline SimData generate(const SimConfig& cfg) {
    cfg.validate();
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32)};
    Rng rng(seq);
    const MixtureModel model = reference_model(cfg, rng);
    return sample_mixture(model, cfg.n_obs, rng);
}

}  // namespace skewbfa
