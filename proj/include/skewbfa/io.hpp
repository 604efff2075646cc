#pragma once

// Text formats.
//
// MVSTACK: first line "MVSTACK 1 N n p [labelled]" where labelled is 0 or 1,
// then N blocks of n lines with p numbers each, then (if labelled) N integer
// labels with 0 meaning unknown. Numbers are written with 17 significant
// digits so doubles survive a round trip.
//
// Label files: whitespace-separated integers, one per observation.
//
// Model files: JSON holding the family, dimensions, per-component
// parameters and fit metadata.

#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <iterator>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "family.hpp"
#include "model.hpp"

namespace skewbfa::io {

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        const std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) out.push_back(text.substr(start, i - start));
    }
    return out;
}

inline double parse_double(std::string_view tok, std::string_view what) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw IoError("cannot parse " + std::string(what) + " '" + std::string(tok) + "'");
    }
    return v;
}

inline long parse_long(std::string_view tok, std::string_view what) {
    long v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw IoError("cannot parse " + std::string(what) + " '" + std::string(tok) + "'");
    }
    return v;
}

inline std::string slurp(std::istream& in) {
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return in;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    return out;
}

}  // namespace detail

inline void write_mvstack(std::ostream& out, const MatrixSample& data) {
    data.validate();
    const bool labelled = data.has_labels();
    out << "MVSTACK 1 " << data.size() << ' ' << data.rows() << ' ' << data.cols() << ' ' << (labelled ? 1 : 0)
        << '\n';
    for (const auto& x : data.x) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            for (Eigen::Index j = 0; j < x.cols(); ++j) {
                if (j > 0) out << ' ';
                out << format_double(x(i, j));
            }
            out << '\n';
        }
    }
    if (labelled) {
        for (std::size_t i = 0; i < data.labels.size(); ++i) out << (i ? " " : "") << data.labels[i];
        out << '\n';
    }
    if (!out) throw IoError("write failed");
}

inline MatrixSample read_mvstack(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) throw IoError("empty MVSTACK input");
    const auto h = detail::split_ws(header);
    if (h.size() < 5 || h.size() > 6 || h[0] != "MVSTACK") throw IoError("missing MVSTACK header");
    if (h[1] != "1") throw IoError("unsupported MVSTACK version '" + std::string(h[1]) + "'");
    const long N = detail::parse_long(h[2], "N");
    const long n = detail::parse_long(h[3], "n");
    const long p = detail::parse_long(h[4], "p");
    const long flag = h.size() == 6 ? detail::parse_long(h[5], "label flag") : 0;
    if (N < 1 || n < 1 || p < 1) throw IoError("MVSTACK dimensions must be positive");
    if (flag != 0 && flag != 1) throw IoError("label flag must be 0 or 1");

    const std::string body = detail::slurp(in);
    const auto tok = detail::split_ws(body);
    const std::size_t values = static_cast<std::size_t>(N) * n * p;
    const std::size_t expected = values + (flag ? static_cast<std::size_t>(N) : 0);
    if (tok.size() != expected) {
        throw IoError("MVSTACK declares " + std::to_string(expected) + " entries but holds " +
                      std::to_string(tok.size()));
    }
    MatrixSample data;
    data.x.reserve(N);
    std::size_t k = 0;
    for (long i = 0; i < N; ++i) {
        Matrix x(n, p);
        for (long r = 0; r < n; ++r)
            for (long c = 0; c < p; ++c) x(r, c) = detail::parse_double(tok[k++], "value");
        data.x.push_back(std::move(x));
    }
    if (flag) {
        for (long i = 0; i < N; ++i) {
            const long l = detail::parse_long(tok[k++], "label");
            if (l < 0) throw IoError("negative label");
            data.labels.push_back(static_cast<int>(l));
        }
    }
    try {
        data.validate();
    } catch (const std::exception& e) {
        throw IoError(e.what());
    }
    return data;
}

inline MatrixSample load_mvstack(const std::string& path) {
    auto in = detail::open_in(path);
    return read_mvstack(in);
}

inline void save_mvstack(const std::string& path, const MatrixSample& data) {
    auto out = detail::open_out(path);
    write_mvstack(out, data);
}

inline std::vector<int> read_labels(std::istream& in) {
    const std::string body = detail::slurp(in);
    std::vector<int> out;
    for (auto t : detail::split_ws(body)) {
        const long l = detail::parse_long(t, "label");
        if (l < 0) throw IoError("negative label");
        out.push_back(static_cast<int>(l));
    }
    return out;
}

inline std::vector<int> load_labels(const std::string& path) {
    auto in = detail::open_in(path);
    return read_labels(in);
}

inline void save_labels(const std::string& path, const std::vector<int>& labels) {
    auto out = detail::open_out(path);
    for (int l : labels) out << l << '\n';
    if (!out) throw IoError("write failed for '" + path + "'");
}

/// One row per observation, G responsibilities each.
inline void save_matrix_rows(const std::string& path, const Matrix& m) {
    auto out = detail::open_out(path);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << format_double(m(i, j));
        out << '\n';
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

inline Matrix load_matrix_rows(const std::string& path) {
    auto in = detail::open_in(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        const auto tok = detail::split_ws(line);
        if (tok.empty()) continue;
        std::vector<double> row;
        for (auto t : tok) row.push_back(detail::parse_double(t, "value"));
        if (!rows.empty() && row.size() != rows.front().size()) throw IoError("ragged matrix file");
        rows.push_back(std::move(row));
    }
    Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    return m;
}

// ----------------------------------------------------------------------------
// model files

struct FitMetadata {
    double final_loglik = 0.0;
    double bic = 0.0;
    long rho = 0;
    int iterations = 0;
    bool converged = false;
    std::uint64_t seed = 0;
    std::size_t n_obs = 0;
};

struct ModelFile {
    MixtureModel model;
    std::optional<FitMetadata> meta;
};

namespace detail {

using nlohmann::json;

inline json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from(const json& j, Eigen::Index rows, Eigen::Index cols, const char* name) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
        throw IoError(std::string("field '") + name + "' has the wrong number of rows");
    }
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const json& row = j[i];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw IoError(std::string("field '") + name + "' has the wrong number of columns");
        }
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row[c].get<double>();
    }
    return m;
}

inline json vector_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

inline Vector vector_from(const json& j, Eigen::Index size, const char* name) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != size) {
        throw IoError(std::string("field '") + name + "' has the wrong length");
    }
    Vector v(size);
    for (Eigen::Index i = 0; i < size; ++i) v(i) = j[i].get<double>();
    return v;
}

inline json theta_json(const Theta& theta) {
    return std::visit(
        [](const auto& t) -> json {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, SkewTTheta>) return {{"nu", t.nu}};
            else if constexpr (std::is_same_v<T, GenHypTheta>) return {{"omega", t.omega}, {"lambda", t.lambda}};
            else if constexpr (std::is_same_v<T, VarGammaTheta>) return {{"gamma", t.gamma}};
            else if constexpr (std::is_same_v<T, NigTheta>) return {{"kappa", t.kappa}};
            else return json::object();
        },
        theta);
}

inline Theta theta_from(Family family, const json& j) {
    switch (family) {
        case Family::gaussian: return GaussianTheta{};
        case Family::skew_t: return SkewTTheta{j.at("nu").get<double>()};
        case Family::gen_hyperbolic: return GenHypTheta{j.at("omega").get<double>(), j.at("lambda").get<double>()};
        case Family::variance_gamma: return VarGammaTheta{j.at("gamma").get<double>()};
        case Family::nig: return NigTheta{j.at("kappa").get<double>()};
    }
    throw IoError("unknown family");
}

}  // namespace detail

inline nlohmann::json model_to_json(const ModelFile& file) {
    using nlohmann::json;
    const MixtureModel& m = file.model;
    json doc;
    doc["format"] = "skewbfa-model";
    doc["version"] = 1;
    doc["family"] = std::string(family_tag(m.family));
    doc["G"] = m.G();
    doc["n"] = m.rows();
    doc["p"] = m.cols();
    doc["q"] = m.q();
    doc["r"] = m.r();
    json comps = json::array();
    for (const auto& c : m.components) {
        json jc;
        jc["pi"] = c.pi;
        jc["M"] = detail::matrix_json(c.m);
        jc["A"] = detail::matrix_json(c.a);
        jc["Lambda"] = detail::matrix_json(c.lambda);
        jc["Sigma_diag"] = detail::vector_json(c.sigma_diag);
        jc["Delta"] = detail::matrix_json(c.delta);
        jc["Psi_diag"] = detail::vector_json(c.psi_diag);
        jc["theta"] = detail::theta_json(c.theta);
        comps.push_back(std::move(jc));
    }
    doc["components"] = std::move(comps);
    if (file.meta) {
        const auto& md = *file.meta;
        doc["fit"] = {{"final_loglik", md.final_loglik}, {"bic", md.bic},           {"rho", md.rho},
                      {"iterations", md.iterations},     {"converged", md.converged}, {"seed", md.seed},
                      {"n_obs", md.n_obs}};
    }
    return doc;
}

inline ModelFile model_from_json(const nlohmann::json& doc) {
    try {
        if (doc.value("format", std::string()) != "skewbfa-model") throw IoError("not a model file");
        ModelFile file;
        MixtureModel& m = file.model;
        m.family = parse_family(doc.at("family").get<std::string>());
        const int G = doc.at("G").get<int>();
        const int n = doc.at("n").get<int>();
        const int p = doc.at("p").get<int>();
        const int q = doc.at("q").get<int>();
        const int r = doc.at("r").get<int>();
        const auto& comps = doc.at("components");
        if (!comps.is_array() || static_cast<int>(comps.size()) != G) throw IoError("component count differs from G");
        for (const auto& jc : comps) {
            ComponentParams c;
            c.pi = jc.at("pi").get<double>();
            c.m = detail::matrix_from(jc.at("M"), n, p, "M");
            c.a = detail::matrix_from(jc.at("A"), n, p, "A");
            c.lambda = detail::matrix_from(jc.at("Lambda"), n, q, "Lambda");
            c.sigma_diag = detail::vector_from(jc.at("Sigma_diag"), n, "Sigma_diag");
            c.delta = detail::matrix_from(jc.at("Delta"), p, r, "Delta");
            c.psi_diag = detail::vector_from(jc.at("Psi_diag"), p, "Psi_diag");
            c.theta = detail::theta_from(m.family, jc.at("theta"));
            m.components.push_back(std::move(c));
        }
        if (doc.contains("fit")) {
            const auto& f = doc.at("fit");
            FitMetadata md;
            md.final_loglik = f.at("final_loglik").get<double>();
            md.bic = f.at("bic").get<double>();
            md.rho = f.at("rho").get<long>();
            md.iterations = f.at("iterations").get<int>();
            md.converged = f.at("converged").get<bool>();
            md.seed = f.at("seed").get<std::uint64_t>();
            md.n_obs = f.at("n_obs").get<std::size_t>();
            file.meta = md;
        }
        m.validate();
        return file;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed model file: ") + e.what());
    } catch (const DomainError& e) {
        throw IoError(std::string("invalid model file: ") + e.what());
    } catch (const ShapeError& e) {
        throw IoError(std::string("invalid model file: ") + e.what());
    }
}

inline void save_model(const std::string& path, const ModelFile& file) {
    auto out = detail::open_out(path);
    out << model_to_json(file).dump(2) << '\n';
    if (!out) throw IoError("write failed for '" + path + "'");
}

inline ModelFile load_model(const std::string& path) {
    auto in = detail::open_in(path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("cannot parse '" + path + "': " + e.what());
    }
    return model_from_json(doc);
}

}  // namespace skewbfa::io
