#pragma once

// Agreement between a predicted and a true partition: adjusted Rand index
// and misclassification rate under the best one-to-one label matching.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

#include "errors.hpp"

namespace skewbfa {

struct Partition {
    std::vector<int> labels;

    /// Relabels to 1..K in increasing order of the original ids.
    Partition canonical() const {
        std::vector<int> ids = labels;
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        std::map<int, int> to;
        for (std::size_t k = 0; k < ids.size(); ++k) to[ids[k]] = static_cast<int>(k) + 1;
        Partition out;
        out.labels.reserve(labels.size());
        for (int l : labels) out.labels.push_back(to[l]);
        return out;
    }

    int classes() const {
        std::vector<int> ids = labels;
        std::sort(ids.begin(), ids.end());
        return static_cast<int>(std::unique(ids.begin(), ids.end()) - ids.begin());
    }
};

namespace detail {

// counts[t][p] for canonical labels.
inline std::vector<std::vector<long>> contingency(const std::vector<int>& truth, const std::vector<int>& pred,
                                                  int kt, int kp) {
    std::vector<std::vector<long>> c(kt, std::vector<long>(kp, 0));
    for (std::size_t i = 0; i < truth.size(); ++i) ++c[truth[i] - 1][pred[i] - 1];
    return c;
}

inline double choose2(double v) { return 0.5 * v * (v - 1.0); }

// Minimum-cost perfect assignment on a square matrix (Hungarian method with
// potentials). Returns the column assigned to each row.
inline std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> match(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= n; ++j) {
        if (match[j] > 0) row_to_col[match[j] - 1] = j - 1;
    }
    return row_to_col;
}

}  // namespace detail

inline double ari(const Partition& truth, const Partition& pred) {
    if (truth.labels.size() != pred.labels.size()) throw ShapeError("partitions differ in length");
    const std::size_t n = truth.labels.size();
    if (n < 2) return 1.0;
    const Partition t = truth.canonical();
    const Partition p = pred.canonical();
    const int kt = t.classes();
    const int kp = p.classes();
    const auto c = detail::contingency(t.labels, p.labels, kt, kp);

    double sum_cells = 0.0;
    std::vector<double> rows(kt, 0.0), cols(kp, 0.0);
    for (int i = 0; i < kt; ++i) {
        for (int j = 0; j < kp; ++j) {
            sum_cells += detail::choose2(static_cast<double>(c[i][j]));
            rows[i] += static_cast<double>(c[i][j]);
            cols[j] += static_cast<double>(c[i][j]);
        }
    }
    double sum_rows = 0.0, sum_cols = 0.0;
    for (double v : rows) sum_rows += detail::choose2(v);
    for (double v : cols) sum_cols += detail::choose2(v);
    const double total = detail::choose2(static_cast<double>(n));
    const double expected = sum_rows * sum_cols / total;
    const double maximum = 0.5 * (sum_rows + sum_cols);
    if (maximum == expected) {
        // Both partitions trivial in the same way (all singletons or one block).
        return sum_cells == expected ? 1.0 : 0.0;
    }
    return (sum_cells - expected) / (maximum - expected);
}

inline double ari(const std::vector<int>& truth, const std::vector<int>& pred) {
    return ari(Partition{truth}, Partition{pred});
}

/// Classes up to this count are matched by enumerating all permutations;
/// larger problems use the assignment solver.
inline constexpr int kExhaustiveMatchLimit = 8;

inline double mcr(const Partition& truth, const Partition& pred) {
    if (truth.labels.size() != pred.labels.size()) throw ShapeError("partitions differ in length");
    const std::size_t n = truth.labels.size();
    if (n == 0) return 0.0;
    const Partition t = truth.canonical();
    const Partition p = pred.canonical();
    const int k = std::max(t.classes(), p.classes());
    const auto c = detail::contingency(t.labels, p.labels, k, k);

    long best = 0;
    if (k <= kExhaustiveMatchLimit) {
        std::vector<int> perm(k);
        std::iota(perm.begin(), perm.end(), 0);
        do {
            long agree = 0;
            for (int i = 0; i < k; ++i) agree += c[i][perm[i]];
            best = std::max(best, agree);
        } while (std::next_permutation(perm.begin(), perm.end()));
    } else {
        std::vector<std::vector<double>> cost(k, std::vector<double>(k));
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) cost[i][j] = -static_cast<double>(c[i][j]);
        const auto assign = detail::hungarian(cost);
        for (int i = 0; i < k; ++i) best += c[i][assign[i]];
    }
    return 1.0 - static_cast<double>(best) / static_cast<double>(n);
}

inline double mcr(const std::vector<int>& truth, const std::vector<int>& pred) {
    return mcr(Partition{truth}, Partition{pred});
}

}  // namespace skewbfa
