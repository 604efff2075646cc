#pragma once

// Subcommand implementations behind the skewbfa executable. Each command
// takes a plain options struct, writes its report to an ostream and throws
// on failure; run_guarded maps exceptions to exit codes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "aecm.hpp"
#include "datagen.hpp"
#include "errors.hpp"
#include "family.hpp"
#include "io.hpp"
#include "metrics.hpp"
#include "selection.hpp"

namespace skewbfa::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kIo = 3, kNumerical = 4 };

/// Invalid command-line values.
class UsageError : public std::invalid_argument {
public:
    explicit UsageError(const std::string& what) : std::invalid_argument(what) {}
};

struct IntRange {
    int lo = 1;
    int hi = 1;
};

/// "3" or "1:4".
inline IntRange parse_range(const std::string& text) {
    const auto colon = text.find(':');
    try {
        std::size_t used = 0;
        if (colon == std::string::npos) {
            const int v = std::stoi(text, &used);
            if (used != text.size()) throw UsageError("");
            return {v, v};
        }
        const std::string a = text.substr(0, colon);
        const std::string b = text.substr(colon + 1);
        IntRange r;
        r.lo = std::stoi(a, &used);
        if (used != a.size()) throw UsageError("");
        r.hi = std::stoi(b, &used);
        if (used != b.size()) throw UsageError("");
        if (r.hi < r.lo) throw UsageError("");
        return r;
    } catch (const std::exception&) {
        throw UsageError("bad range '" + text + "' (expected N or LO:HI)");
    }
}

inline std::vector<Family> parse_family_list(const std::string& text) {
    std::vector<Family> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(parse_family(item));
        } catch (const DomainError& e) {
            throw UsageError(e.what());
        }
    }
    if (out.empty()) throw UsageError("no families given");
    return out;
}

inline std::vector<int> class_sizes(const std::vector<int>& labels, int G) {
    std::vector<int> sizes(G, 0);
    for (int l : labels) {
        if (l >= 1 && l <= G) ++sizes[l - 1];
    }
    return sizes;
}

inline io::FitMetadata metadata_of(const FitResult& f, std::size_t n_obs) {
    io::FitMetadata md;
    md.final_loglik = f.final_loglik;
    md.rho = count_free_params(f.model.family, f.model.G(), f.model.rows(), f.model.cols(), f.model.q(),
                               f.model.r());
    md.bic = bic(f.final_loglik, md.rho, n_obs);
    md.iterations = f.iterations;
    md.converged = f.converged;
    md.seed = f.seed;
    md.n_obs = n_obs;
    return md;
}

/// Labels from a separate file replace any carried by the data file.
inline void attach_labels(MatrixSample& data, const std::string& path) {
    if (path.empty()) return;
    auto labels = io::load_labels(path);
    if (labels.size() != data.size()) {
        throw IoError("label file has " + std::to_string(labels.size()) + " entries, data has " +
                      std::to_string(data.size()));
    }
    data.labels = std::move(labels);
}

inline std::string fmt(double v) { return io::format_double(v); }

// ----------------------------------------------------------------------------

struct FitArgs {
    std::string data;
    std::string family = "ST";
    int G = 2;
    int q = 1;
    int r = 1;
    std::string labels;
    std::string truth;
    int starts = 5;
    std::uint64_t seed = 1;
    int max_iter = 1000;
    std::string out;
};

inline void cmd_fit(const FitArgs& a, std::ostream& os) {
    Family family;
    try {
        family = parse_family(a.family);
    } catch (const DomainError& e) {
        throw UsageError(e.what());
    }
    if (a.G < 1 || a.q < 0 || a.r < 0 || a.starts < 1 || a.max_iter < 1) {
        throw UsageError("G, starts and max-iter must be positive; q and r non-negative");
    }
    MatrixSample data = io::load_mvstack(a.data);
    attach_labels(data, a.labels);
    if (a.q > data.rows() || a.r > data.cols()) throw UsageError("q must not exceed n and r must not exceed p");

    FitOptions opt;
    opt.starts = a.starts;
    opt.seed = a.seed;
    opt.max_iter = a.max_iter;
    const FitResult f = fit(data, family, a.G, a.q, a.r, opt);
    const io::FitMetadata md = metadata_of(f, data.size());
    if (!a.out.empty()) io::save_model(a.out, {f.model, md});

    const auto labels = map_labels(f.z_hat);
    os << "family " << family_tag(family) << "\nG " << a.G << "\nq " << a.q << "\nr " << a.r << "\n";
    os << "N " << data.size() << "\n";
    os << "loglik " << fmt(md.final_loglik) << "\nrho " << md.rho << "\nbic " << fmt(md.bic) << "\n";
    os << "iterations " << md.iterations << "\nconverged " << (md.converged ? 1 : 0) << "\n";
    os << "loglik_first " << fmt(f.loglik_trace.front()) << "\nloglik_last " << fmt(f.loglik_trace.back()) << "\n";
    os << "starts " << a.starts << "\nfailed_starts " << f.failures.size() << "\nbest_start " << f.best_start << "\n";
    os << "fallbacks " << f.fallback_count << "\nclass_sizes";
    for (int s : class_sizes(labels, a.G)) os << ' ' << s;
    os << "\n";
    if (!a.truth.empty()) {
        const auto truth = io::load_labels(a.truth);
        if (truth.size() != labels.size()) throw IoError("truth file length differs from data");
        os << "ari " << fmt(ari(truth, labels)) << "\nmcr " << fmt(mcr(truth, labels)) << "\n";
    }
}

// ----------------------------------------------------------------------------

struct PredictArgs {
    std::string model;
    std::string data;
    std::string out;
    std::string z_out;
};

inline void cmd_predict(const PredictArgs& a, std::ostream& os) {
    const io::ModelFile mf = io::load_model(a.model);
    const MatrixSample data = io::load_mvstack(a.data);
    if (data.rows() != mf.model.rows() || data.cols() != mf.model.cols()) {
        throw ShapeError("data dimensions do not match the model");
    }
    const Prediction pr = predict(mf.model, data);
    if (!a.out.empty()) io::save_labels(a.out, pr.labels);
    if (!a.z_out.empty()) io::save_matrix_rows(a.z_out, pr.z_hat);
    os << "N " << data.size() << "\nclass_sizes";
    for (int s : class_sizes(pr.labels, mf.model.G())) os << ' ' << s;
    os << "\n";
    if (a.out.empty()) {
        for (int l : pr.labels) os << l << '\n';
    }
}

// ----------------------------------------------------------------------------

struct SimulateArgs {
    std::string family = "ST";
    int d = 10;
    int n_obs = 200;
    double c = 1.0;
    std::uint64_t seed = 1;
    std::string out;
    std::string truth_out;  // default: <out>.truth
    double supervision = 0.0;
    std::string partial_labels_out;
};

/// Reveals round(fraction * N) randomly chosen true labels; 0 elsewhere.
inline std::vector<int> partial_labels(const std::vector<int>& truth, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw UsageError("supervision must lie in [0, 1]");
    std::vector<std::size_t> order(truth.size());
    std::iota(order.begin(), order.end(), 0);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x1abe1u};
    Rng rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(truth.size())));
    std::vector<int> out(truth.size(), 0);
    for (std::size_t j = 0; j < k; ++j) out[order[j]] = truth[order[j]];
    return out;
}

inline void cmd_simulate(const SimulateArgs& a, std::ostream& os) {
    SimConfig cfg;
    try {
        cfg.family = parse_family(a.family);
    } catch (const DomainError& e) {
        throw UsageError(e.what());
    }
    if (a.d < 1 || a.n_obs < 1) throw UsageError("d and N must be positive");
    if (a.out.empty()) throw UsageError("--out is required");
    cfg.d = a.d;
    cfg.n_obs = a.n_obs;
    cfg.c = a.c;
    cfg.seed = a.seed;
    cfg.q_true = std::min(cfg.q_true, a.d);
    cfg.r_true = std::min(cfg.r_true, a.d);
    const SimData sim = generate(cfg);
    io::save_mvstack(a.out, sim.sample);
    const std::string truth_path = a.truth_out.empty() ? a.out + ".truth" : a.truth_out;
    io::save_labels(truth_path, sim.truth);
    if (!a.partial_labels_out.empty()) {
        io::save_labels(a.partial_labels_out, partial_labels(sim.truth, a.supervision, a.seed));
    } else if (a.supervision > 0.0) {
        throw UsageError("--supervision needs --partial-labels-out");
    }
    os << "wrote " << a.out << "\ntruth " << truth_path << "\nclass_sizes";
    for (int s : class_sizes(sim.truth, 2)) os << ' ' << s;
    os << "\n";
}

// ----------------------------------------------------------------------------

struct EvaluateArgs {
    std::string pred;
    std::string truth;
};

inline void cmd_evaluate(const EvaluateArgs& a, std::ostream& os) {
    const auto pred = io::load_labels(a.pred);
    const auto truth = io::load_labels(a.truth);
    if (pred.size() != truth.size()) throw IoError("label files differ in length");
    os << "ari " << fmt(ari(truth, pred)) << "\nmcr " << fmt(mcr(truth, pred)) << "\n";
}

// ----------------------------------------------------------------------------

struct GridArgs {
    std::string data;
    std::string families = "ST";
    std::string g_range = "1:4";
    std::string q_range = "1:5";
    std::string r_range = "1:5";
    std::string labels;
    int starts = 5;
    std::uint64_t seed = 1;
    int max_iter = 1000;
    int threads = 1;
    bool extend = true;
    std::string out;
    std::string model_out;
};

inline constexpr const char* kGridHeader = "family\tG\tq\tr\tloglik\trho\tbic\tstatus";

inline std::string grid_row(const CellScore& s) {
    std::ostringstream os;
    os << family_tag(s.cell.family) << '\t' << s.cell.G << '\t' << s.cell.q << '\t' << s.cell.r << '\t';
    if (s.ok) {
        os << fmt(s.loglik) << '\t' << s.rho << '\t' << fmt(s.bic) << "\tok";
    } else {
        std::string msg = s.error;
        std::replace(msg.begin(), msg.end(), '\t', ' ');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        os << "nan\t" << s.rho << "\tnan\tfailed: " << msg;
    }
    return os.str();
}

/// Completed cells from an existing table; partial trailing lines are ignored.
inline std::vector<CellScore> read_grid_table(const std::string& path) {
    std::vector<CellScore> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line.rfind("family\t", 0) == 0) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string item;
        while (std::getline(ss, item, '\t')) f.push_back(item);
        if (f.size() < 8) continue;
        try {
            CellScore s;
            s.cell = {parse_family(f[0]), std::stoi(f[1]), std::stoi(f[2]), std::stoi(f[3])};
            s.rho = std::stol(f[5]);
            s.ok = f[7] == "ok";
            if (s.ok) {
                s.loglik = io::detail::parse_double(f[4], "loglik");
                s.bic = io::detail::parse_double(f[6], "bic");
            } else {
                s.error = f[7];
            }
            out.push_back(s);
        } catch (const std::exception&) {
            continue;
        }
    }
    return out;
}

inline void cmd_grid(const GridArgs& a, std::ostream& os) {
    ModelGridSpec spec;
    spec.families = parse_family_list(a.families);
    const IntRange g = parse_range(a.g_range);
    const IntRange q = parse_range(a.q_range);
    const IntRange r = parse_range(a.r_range);
    spec.g_min = g.lo;
    spec.g_max = g.hi;
    spec.q_min = q.lo;
    spec.q_max = q.hi;
    spec.r_min = r.lo;
    spec.r_max = r.hi;
    spec.extend = a.extend;
    if (a.starts < 1 || a.max_iter < 1 || a.threads < 1) throw UsageError("starts, max-iter, threads must be positive");

    MatrixSample data = io::load_mvstack(a.data);
    attach_labels(data, a.labels);
    try {
        spec.validate(data.rows(), data.cols());
    } catch (const DomainError& e) {
        throw UsageError(e.what());
    }

    GridOptions opt;
    opt.fit.starts = a.starts;
    opt.fit.seed = a.seed;
    opt.fit.max_iter = a.max_iter;
    opt.threads = a.threads;

    std::vector<CellScore> done;
    std::ofstream table;
    if (!a.out.empty()) {
        done = read_grid_table(a.out);
        const bool fresh = !std::filesystem::exists(a.out) || std::filesystem::file_size(a.out) == 0;
        table.open(a.out, std::ios::app);
        if (!table) throw IoError("cannot open '" + a.out + "' for appending");
        if (fresh) table << kGridHeader << '\n' << std::flush;
        opt.lookup = [&done](const GridCell& c) -> std::optional<CellScore> {
            for (const auto& s : done) {
                if (s.cell == c) return s;
            }
            return std::nullopt;
        };
    }
    std::vector<GridCell> reused;
    for (const auto& s : done) reused.push_back(s.cell);
    opt.on_cell = [&](const CellScore& s) {
        if (!table.is_open()) return;
        if (std::find(reused.begin(), reused.end(), s.cell) != reused.end()) return;
        table << grid_row(s) << '\n' << std::flush;
    };

    GridResult res = grid_search(data, spec, opt);
    if (!table.is_open()) {
        os << kGridHeader << '\n';
        for (const auto& s : res.table) os << grid_row(s) << '\n';
    }
    const GridCell& w = res.best_cell.cell;
    os << "winner " << family_tag(w.family) << " G=" << w.G << " q=" << w.q << " r=" << w.r
       << " bic=" << fmt(res.best_cell.bic) << "\n";
    os << "cells " << res.table.size() << "\nextensions " << res.extensions << "\n";

    if (!a.model_out.empty()) {
        if (!res.best) {
            // Winner came from an earlier run: refit it with its own seed.
            FitOptions fo = opt.fit;
            fo.seed = cell_seed(opt.fit.seed, w);
            res.best = score(fit(data, w.family, w.G, w.q, w.r, fo), data.size());
        }
        io::save_model(a.model_out, {res.best->fit.model, metadata_of(res.best->fit, data.size())});
    }
}

// ----------------------------------------------------------------------------

/// Runs `body`, printing "error: <kind>: <message>" to `err` on failure.
template <class F>
int run_guarded(F&& body, std::ostream& err) {
    try {
        body();
        return kOk;
    } catch (const UsageError& e) {
        err << "error: usage: " << e.what() << '\n';
        return kUsage;
    } catch (const IoError& e) {
        err << "error: io: " << e.what() << '\n';
        return kIo;
    } catch (const ShapeError& e) {
        err << "error: usage: " << e.what() << '\n';
        return kUsage;
    } catch (const DomainError& e) {
        err << "error: usage: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: numerical: " << e.what() << '\n';
        return kNumerical;
    }
}

}  // namespace skewbfa::cli
