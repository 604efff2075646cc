#include <cmath>
#include <optional>
#include <random>

#include <gtest/gtest.h>

#include <skewbfa/datagen.hpp>
#include <skewbfa/selection.hpp>

using namespace skewbfa;

namespace {

// Counts parameter entries of an explicitly built model, then removes the
// rotational freedom of each loading matrix.
long symbol_count(Family family, int G, int n, int p, int q, int r) {
    long total = G - 1;
    for (int g = 0; g < G; ++g) {
        ComponentParams c;
        c.m = Matrix::Zero(n, p);
        c.a = Matrix::Zero(has_skewness(family) ? n : 0, has_skewness(family) ? p : 0);
        c.lambda = Matrix::Zero(n, q);
        c.sigma_diag = Vector::Zero(n);
        c.delta = Matrix::Zero(p, r);
        c.psi_diag = Vector::Zero(p);
        total += c.m.size() + c.a.size() + c.lambda.size() + c.sigma_diag.size() + c.delta.size() +
                 c.psi_diag.size();
        total -= q * (q - 1) / 2 + r * (r - 1) / 2;
        total += std::visit(
            [](const auto& t) -> long {
                using T = std::decay_t<decltype(t)>;
                if constexpr (std::is_same_v<T, GaussianTheta>) return 0;
                else if constexpr (std::is_same_v<T, GenHypTheta>) return 2;
                else return 1;
            },
            default_theta(family));
    }
    return total;
}

MatrixSample noise_sample(int N, int n, int p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    MatrixSample s;
    for (int i = 0; i < N; ++i) {
        Matrix x(n, p);
        for (int k = 0; k < x.size(); ++k) x.data()[k] = z(rng);
        s.x.push_back(x);
    }
    return s;
}

}  // namespace

TEST(Selection, CountExample) {
    EXPECT_EQ(count_free_params(Family::skew_t, 2, 10, 10, 3, 3), 551);
    EXPECT_EQ(count_free_params(Family::nig, 1, 4, 3, 0, 0), 12 + 12 + 4 + 3 + 1);
    EXPECT_EQ(count_free_params(Family::gaussian, 1, 4, 3, 0, 0), 12 + 4 + 3);
    EXPECT_EQ(count_free_params(Family::gen_hyperbolic, 1, 4, 3, 0, 0), 12 + 12 + 4 + 3 + 2);
    EXPECT_THROW(count_free_params(Family::skew_t, 0, 4, 3, 1, 1), DomainError);
}

TEST(Selection, ReductionIdentity) {
    const auto reduction = [](int dim, int k) { return dim * (dim + 1) / 2 - scale_params(dim, k); };
    EXPECT_EQ(reduction(10, 3), 18);
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> dim(1, 60);
    for (int t = 0; t < 200; ++t) {
        const int n = dim(rng), p = dim(rng);
        const int q = std::uniform_int_distribution<int>(0, n)(rng);
        const int r = std::uniform_int_distribution<int>(0, p)(rng);
        // Twice the saving equals (dim - k)^2 - (dim + k), for both scales.
        EXPECT_EQ(2 * reduction(n, q), (n - q) * (n - q) - (n + q)) << n << " " << q;
        EXPECT_EQ(2 * reduction(p, r), (p - r) * (p - r) - (p + r)) << p << " " << r;
        EXPECT_EQ(factor_reduction_holds(n, q), reduction(n, q) > 0);
    }
}

TEST(Selection, MatchesSymbolCount) {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> dim(1, 12), groups(1, 5);
    for (int t = 0; t < 20; ++t) {
        const Family f = kAllFamilies[t % kAllFamilies.size()];
        const int n = dim(rng), p = dim(rng), G = groups(rng);
        const int q = std::uniform_int_distribution<int>(0, n)(rng);
        const int r = std::uniform_int_distribution<int>(0, p)(rng);
        EXPECT_EQ(count_free_params(f, G, n, p, q, r), symbol_count(f, G, n, p, q, r));
    }
}

TEST(Selection, BicIdentity) {
    EXPECT_EQ(bic(-1234.5, 77, 400), 2.0 * -1234.5 - 77.0 * std::log(400.0));
    FitResult f;
    f.model.family = Family::variance_gamma;
    f.model.components.resize(2);
    for (auto& c : f.model.components) {
        c.m = c.a = Matrix::Zero(3, 2);
        c.lambda = Matrix::Zero(3, 1);
        c.sigma_diag = Vector::Ones(3);
        c.delta = Matrix::Zero(2, 1);
        c.psi_diag = Vector::Ones(2);
        c.theta = VarGammaTheta{};
    }
    f.final_loglik = -50.25;
    const ScoredModel s = score(f, 30);
    EXPECT_EQ(s.rho, count_free_params(Family::variance_gamma, 2, 3, 2, 1, 1));
    EXPECT_EQ(s.bic, 2.0 * -50.25 - static_cast<double>(s.rho) * std::log(30.0));
}

TEST(Selection, SingleCellReturnsItsFit) {
    SimConfig cfg;
    cfg.family = Family::nig;
    cfg.d = 4;
    cfg.n_obs = 60;
    cfg.c = 3.0;
    cfg.q_true = cfg.r_true = 1;
    const SimData d = generate(cfg);
    ModelGridSpec spec;
    spec.families = {Family::nig};
    spec.g_min = spec.g_max = 2;
    spec.extend = false;
    GridOptions opt;
    opt.fit.starts = 2;
    opt.fit.seed = 5;
    const GridResult res = grid_search(d.sample, spec, opt);
    ASSERT_TRUE(res.best.has_value());
    EXPECT_EQ(res.table.size(), 1u);
    FitOptions fo = opt.fit;
    fo.seed = cell_seed(5, {Family::nig, 2, 1, 1});
    const FitResult direct = fit(d.sample, Family::nig, 2, 1, 1, fo);
    EXPECT_EQ(res.best->fit.final_loglik, direct.final_loglik);
    EXPECT_EQ(res.best->fit.best_start, direct.best_start);
    EXPECT_EQ(res.best_cell.bic, res.best->bic);
}

TEST(Selection, PenaltyPrefersSmallerModel) {
    const MatrixSample s = noise_sample(5, 6, 6, 1);
    ModelGridSpec spec;
    spec.families = {Family::skew_t};
    spec.q_min = 1;
    spec.q_max = 2;
    spec.extend = false;
    GridOptions opt;
    // Same log-likelihood for both cells; only the penalty differs.
    opt.lookup = [](const GridCell& c) -> std::optional<CellScore> {
        CellScore sc;
        sc.ok = true;
        sc.loglik = -100.0;
        sc.rho = count_free_params(c.family, c.G, 6, 6, c.q, c.r);
        sc.bic = bic(sc.loglik, sc.rho, 5);
        return sc;
    };
    const GridResult res = grid_search(s, spec, opt);
    EXPECT_EQ(res.best_cell.cell.q, 1);
    EXPECT_FALSE(res.best.has_value());
}

TEST(Selection, ExtendsWhileWinnerIsOnTheBoundary) {
    const MatrixSample s = noise_sample(3, 10, 10, 2);
    ModelGridSpec spec;
    spec.families = {Family::gaussian};
    spec.q_min = 1;
    spec.q_max = 2;
    spec.r_min = spec.r_max = 1;
    GridOptions opt;
    int fitted = 0;
    opt.lookup = [](const GridCell& c) -> std::optional<CellScore> {
        CellScore sc;
        sc.ok = true;
        sc.bic = c.q + c.r;  // always favours more factors
        return sc;
    };
    opt.on_cell = [&](const CellScore&) { ++fitted; };
    const GridResult res = grid_search(s, spec, opt);
    // (10 - k)^2 > 10 + k holds up to k = 5.
    EXPECT_EQ(res.best_cell.cell.q, 5);
    EXPECT_EQ(res.best_cell.cell.r, 5);
    EXPECT_EQ(res.extensions, 4);
    EXPECT_EQ(fitted, static_cast<int>(res.table.size()));
    EXPECT_EQ(res.table.size(), 25u);
}

TEST(Selection, ExtensionCap) {
    const MatrixSample s = noise_sample(3, 60, 3, 3);
    ModelGridSpec spec;
    spec.families = {Family::gaussian};
    spec.q_min = spec.q_max = 1;
    spec.r_min = spec.r_max = 0;
    spec.max_extensions = 3;
    GridOptions opt;
    opt.lookup = [](const GridCell& c) -> std::optional<CellScore> {
        CellScore sc;
        sc.ok = true;
        sc.bic = c.q;
        return sc;
    };
    const GridResult res = grid_search(s, spec, opt);
    EXPECT_EQ(res.extensions, 3);
    EXPECT_EQ(res.best_cell.cell.q, 4);
}

TEST(Selection, GridValidation) {
    const MatrixSample s = noise_sample(3, 4, 3, 4);
    ModelGridSpec spec;
    spec.families = {Family::gaussian};
    spec.q_max = 4;
    EXPECT_THROW(grid_search(s, spec), DomainError);
    spec.q_max = 1;
    spec.families.clear();
    EXPECT_THROW(grid_search(s, spec), DomainError);
}

TEST(Selection, CellSeedsDiffer) {
    const std::uint64_t a = cell_seed(1, {Family::skew_t, 2, 1, 1});
    EXPECT_EQ(a, cell_seed(1, {Family::skew_t, 2, 1, 1}));
    EXPECT_NE(a, cell_seed(1, {Family::skew_t, 2, 1, 2}));
    EXPECT_NE(a, cell_seed(2, {Family::skew_t, 2, 1, 1}));
    EXPECT_NE(a, cell_seed(1, {Family::nig, 2, 1, 1}));
}
