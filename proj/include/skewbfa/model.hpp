#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "bfa.hpp"
#include "errors.hpp"
#include "family.hpp"

namespace skewbfa {

/// N observed n x p matrices with optional per-observation labels
/// (0 = unlabelled, 1..G = known class).
struct MatrixSample {
    std::vector<Matrix> x;
    std::vector<int> labels;

    std::size_t size() const { return x.size(); }
    bool empty() const { return x.empty(); }
    int rows() const { return x.empty() ? 0 : static_cast<int>(x.front().rows()); }
    int cols() const { return x.empty() ? 0 : static_cast<int>(x.front().cols()); }
    bool has_labels() const { return !labels.empty(); }
    int label(std::size_t i) const { return labels.empty() ? 0 : labels[i]; }

    void validate() const {
        if (x.empty()) throw ShapeError("sample is empty");
        for (const auto& m : x) {
            if (m.rows() != x.front().rows() || m.cols() != x.front().cols()) {
                throw ShapeError("observations differ in shape");
            }
            if (!m.allFinite()) throw DomainError("observation contains non-finite values");
        }
        if (!labels.empty() && labels.size() != x.size()) {
            throw ShapeError("label count does not match observation count");
        }
        for (int l : labels) {
            if (l < 0) throw DomainError("labels must be non-negative");
        }
    }
};

/// A fitted or hand-built mixture: one family shared by G components.
struct MixtureModel {
    Family family = Family::gaussian;
    std::vector<ComponentParams> components;

    int G() const { return static_cast<int>(components.size()); }
    int rows() const { return components.empty() ? 0 : components.front().rows(); }
    int cols() const { return components.empty() ? 0 : components.front().cols(); }
    int q() const { return components.empty() ? 0 : components.front().q(); }
    int r() const { return components.empty() ? 0 : components.front().r(); }

    void validate() const {
        if (components.empty()) throw DomainError("model has no components");
        for (const auto& c : components) {
            if (family_of(c.theta) != family) throw DomainError("component theta does not match family");
            validate_theta(c.theta);
            if (c.rows() != rows() || c.cols() != cols() || c.q() != q() || c.r() != r()) {
                throw ShapeError("components differ in dimensions");
            }
            if (!(c.pi > 0.0)) throw DomainError("mixing proportions must be positive");
        }
    }
};

}  // namespace skewbfa
