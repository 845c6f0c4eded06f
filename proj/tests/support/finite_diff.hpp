#pragma once

// Central finite-difference gradient oracle. Deliberately knows nothing about
// the graph: it re-evaluates a scalar-valued function while nudging one leaf
// element at a time, so it stays independent of the backward implementation.

#include <cmath>
#include <functional>
#include <vector>

#include "licda/tensor.hpp"

namespace testsupport {

template <class S, class F>
std::vector<double> numeric_grad(licda::Tensor<S>& leaf, F&& eval, double h = 1e-5) {
    auto& v = leaf.values();
    std::vector<double> g(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const S orig = v[i];
        v[i] = orig + static_cast<S>(h);
        const double f_plus = eval();
        v[i] = orig - static_cast<S>(h);
        const double f_minus = eval();
        v[i] = orig;
        g[i] = (f_plus - f_minus) / (2.0 * h);
    }
    return g;
}

inline double rel_err(double analytic, double numeric) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-6});
    return std::fabs(analytic - numeric) / denom;
}

template <class S>
double max_rel_err(const std::vector<S>& analytic, const std::vector<double>& numeric) {
    double worst = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i)
        worst = std::max(worst, rel_err(static_cast<double>(analytic[i]), numeric[i]));
    return worst;
}

}  // namespace testsupport
