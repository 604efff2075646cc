#pragma once

// Free-parameter counts, BIC, and grid search over family x G x q x r with
// boundary extension of the factor ranges.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "aecm.hpp"
#include "errors.hpp"
#include "family.hpp"
#include "model.hpp"

namespace skewbfa {

/// Free parameters of one loading-plus-diagonal scale of size dim with k
/// factors: dim k - k(k-1)/2 loadings (rotation removed) plus dim variances.
inline long scale_params(int dim, int k) {
    return static_cast<long>(dim) * k - static_cast<long>(k) * (k - 1) / 2 + dim;
}

inline long count_free_params(Family family, int G, int n, int p, int q, int r) {
    if (G < 1 || n < 1 || p < 1 || q < 0 || r < 0) throw DomainError("count_free_params: invalid dimensions");
    const long np = static_cast<long>(n) * p;
    const long per = np + (has_skewness(family) ? np : 0) + scale_params(n, q) + scale_params(p, r) +
                     theta_dimension(family);
    return (G - 1) + G * per;
}

/// True when k factors on a dim-sized scale give fewer parameters than an
/// unrestricted covariance: (dim - k)^2 > dim + k.
inline bool factor_reduction_holds(int dim, int k) {
    const long d = dim - k;
    return d * d > static_cast<long>(dim) + k;
}

inline double bic(double loglik, long rho, std::size_t n_obs) {
    return 2.0 * loglik - static_cast<double>(rho) * std::log(static_cast<double>(n_obs));
}

struct ScoredModel {
    FitResult fit;
    long rho = 0;
    double bic = 0.0;
};

inline ScoredModel score(FitResult fit, std::size_t n_obs) {
    ScoredModel s;
    s.rho = count_free_params(fit.model.family, fit.model.G(), fit.model.rows(), fit.model.cols(),
                              fit.model.q(), fit.model.r());
    s.bic = bic(fit.final_loglik, s.rho, n_obs);
    s.fit = std::move(fit);
    return s;
}

struct ModelGridSpec {
    std::vector<Family> families;
    int g_min = 1, g_max = 1;
    int q_min = 1, q_max = 1;
    int r_min = 1, r_max = 1;
    bool extend = true;
    int max_extensions = 10;

    void validate(int n, int p) const {
        if (families.empty()) throw DomainError("grid needs at least one family");
        if (g_min < 1 || g_max < g_min) throw DomainError("bad G range");
        if (q_min < 0 || q_max < q_min || q_max >= n) throw DomainError("bad q range (need q < n)");
        if (r_min < 0 || r_max < r_min || r_max >= p) throw DomainError("bad r range (need r < p)");
    }
};

struct GridCell {
    Family family = Family::gaussian;
    int G = 1;
    int q = 0;
    int r = 0;

    bool operator==(const GridCell&) const = default;
};

struct CellScore {
    GridCell cell;
    bool ok = false;
    double loglik = std::numeric_limits<double>::quiet_NaN();
    long rho = 0;
    double bic = -std::numeric_limits<double>::infinity();
    int iterations = 0;
    std::string error;
};

struct GridOptions {
    FitOptions fit;  // seed is the base seed; each cell derives its own
    int threads = 1;
    /// Called once per finished cell (serialized); used for append-only logs.
    std::function<void(const CellScore&)> on_cell;
    /// Previously finished cells; a hit skips the fit.
    std::function<std::optional<CellScore>(const GridCell&)> lookup;
};

struct GridResult {
    std::optional<ScoredModel> best;  // empty if the best cell came from `lookup`
    CellScore best_cell;
    std::vector<CellScore> table;
    int extensions = 0;
};

/// Seed of a cell, independent of scheduling order.
inline std::uint64_t cell_seed(std::uint64_t base, const GridCell& cell) {
    std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                      static_cast<std::uint32_t>(cell.family), static_cast<std::uint32_t>(cell.G),
                      static_cast<std::uint32_t>(cell.q), static_cast<std::uint32_t>(cell.r)};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

namespace detail {

struct CellRun {
    CellScore score;
    std::optional<FitResult> fit;
};

inline CellRun run_cell(const MatrixSample& data, const GridCell& cell, const GridOptions& opt) {
    CellRun out;
    out.score.cell = cell;
    if (opt.lookup) {
        if (auto hit = opt.lookup(cell)) {
            out.score = *hit;
            out.score.cell = cell;
            return out;
        }
    }
    FitOptions fo = opt.fit;
    fo.seed = cell_seed(opt.fit.seed, cell);
    fo.initial.reset();
    try {
        FitResult f = fit(data, cell.family, cell.G, cell.q, cell.r, fo);
        out.score.ok = true;
        out.score.loglik = f.final_loglik;
        out.score.rho = count_free_params(cell.family, cell.G, data.rows(), data.cols(), cell.q, cell.r);
        out.score.bic = bic(f.final_loglik, out.score.rho, data.size());
        out.score.iterations = f.iterations;
        out.fit = std::move(f);
    } catch (const std::exception& e) {
        out.score.ok = false;
        out.score.error = e.what();
    }
    return out;
}

}  // namespace detail

/// Fits every cell and returns the BIC winner. When the winner uses the
/// largest q (or r) tried and one more factor still reduces the parameter
/// count, that range grows by one and the new cells are fitted; at most
/// `max_extensions` rounds.
inline GridResult grid_search(const MatrixSample& data, const ModelGridSpec& spec, const GridOptions& opt = {}) {
    data.validate();
    spec.validate(data.rows(), data.cols());
    const int n = data.rows();
    const int p = data.cols();

    GridResult result;
    std::vector<detail::CellRun> runs;
    int q_hi = spec.q_max;
    int r_hi = spec.r_max;

    const auto fit_cells = [&](const std::vector<GridCell>& cells) {
        std::vector<detail::CellRun> local(cells.size());
        std::mutex mu;
        std::atomic<std::size_t> next{0};
        const auto worker = [&] {
            for (;;) {
                const std::size_t k = next.fetch_add(1);
                if (k >= cells.size()) return;
                local[k] = detail::run_cell(data, cells[k], opt);
                if (opt.on_cell) {
                    std::lock_guard<std::mutex> lock(mu);
                    opt.on_cell(local[k].score);
                }
            }
        };
        const int threads = std::max(1, std::min<int>(opt.threads, static_cast<int>(cells.size())));
        if (threads == 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
        }
        for (auto& run : local) runs.push_back(std::move(run));
    };

    const auto cells_for = [&](int qlo, int qhi, int rlo, int rhi) {
        std::vector<GridCell> cells;
        for (Family f : spec.families)
            for (int g = spec.g_min; g <= spec.g_max; ++g)
                for (int q = qlo; q <= qhi; ++q)
                    for (int r = rlo; r <= rhi; ++r) cells.push_back({f, g, q, r});
        return cells;
    };

    const auto winner = [&]() -> int {
        int best = -1;
        for (int k = 0; k < static_cast<int>(runs.size()); ++k) {
            if (!runs[k].score.ok) continue;
            if (best < 0 || runs[k].score.bic > runs[best].score.bic) best = k;
        }
        return best;
    };

    fit_cells(cells_for(spec.q_min, q_hi, spec.r_min, r_hi));
    int best = winner();
    while (spec.extend && best >= 0 && result.extensions < spec.max_extensions) {
        const GridCell& w = runs[best].score.cell;
        const bool grow_q = w.q == q_hi && q_hi + 1 < n && factor_reduction_holds(n, q_hi + 1);
        const bool grow_r = w.r == r_hi && r_hi + 1 < p && factor_reduction_holds(p, r_hi + 1);
        if (!grow_q && !grow_r) break;
        std::vector<GridCell> extra;
        if (grow_q) {
            for (const auto& c : cells_for(q_hi + 1, q_hi + 1, spec.r_min, r_hi)) extra.push_back(c);
        }
        if (grow_r) {
            for (const auto& c : cells_for(spec.q_min, q_hi + (grow_q ? 1 : 0), r_hi + 1, r_hi + 1)) extra.push_back(c);
        }
        if (grow_q) ++q_hi;
        if (grow_r) ++r_hi;
        fit_cells(extra);
        ++result.extensions;
        best = winner();
    }

    for (const auto& run : runs) result.table.push_back(run.score);
    if (best < 0) {
        std::string msg = "every grid cell failed";
        for (const auto& run : runs) {
            msg += "; " + std::string(family_tag(run.score.cell.family)) + " G=" + std::to_string(run.score.cell.G) +
                   " q=" + std::to_string(run.score.cell.q) + " r=" + std::to_string(run.score.cell.r) + ": " +
                   run.score.error;
        }
        throw FitError(msg);
    }
    result.best_cell = runs[best].score;
    if (runs[best].fit) {
        ScoredModel sm;
        sm.rho = runs[best].score.rho;
        sm.bic = runs[best].score.bic;
        sm.fit = std::move(*runs[best].fit);
        result.best = std::move(sm);
    }
    return result;
}

}  // namespace skewbfa
