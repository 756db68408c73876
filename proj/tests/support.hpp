#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "yoro/tensor.hpp"

namespace testing {

inline yoro::Tensor random_leaf(std::mt19937_64& rng, yoro::Shape shape, double lo = -2.0, double hi = 2.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(yoro::shape_size(shape));
    for (double& x : v) x = u(rng);
    return yoro::Tensor::from(std::move(shape), std::move(v), true);
}

// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
// derivative is ~0 from turning round-off into large relative errors.
inline double rel_err(double a, double n, double floor) {
    return std::fabs(a - n) / std::max({std::fabs(a), std::fabs(n), floor});
}

struct GradCheck {
    double max_rel = 0.0;
    std::size_t checked = 0;
    // The pair behind max_rel.
    double analytic = 0.0, numeric = 0.0;
};

// Analytic gradients of a scalar-valued f against central differences
// with step h, for every element of every input.
inline GradCheck check_gradients(const std::function<yoro::Tensor()>& f, std::vector<yoro::Tensor> inputs,
                                 double h = 1e-5, double floor = 1e-6) {
    for (auto& t : inputs) t.zero_grad();
    yoro::backward(f());
    std::vector<std::vector<double>> analytic;
    for (const auto& t : inputs) {
        if (t.has_grad())
            analytic.emplace_back(t.grad().begin(), t.grad().end());
        else
            analytic.emplace_back(t.size(), 0.0);
    }
    GradCheck out;
    yoro::NoGradGuard guard;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto v = inputs[k].mutable_data();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double saved = v[i];
            v[i] = saved + h;
            const double up = f().item();
            v[i] = saved - h;
            const double down = f().item();
            v[i] = saved;
            const double numeric = (up - down) / (2 * h);
            const double e = rel_err(analytic[k][i], numeric, floor);
            if (e > out.max_rel) out.max_rel = e, out.analytic = analytic[k][i], out.numeric = numeric;
            ++out.checked;
        }
    }
    return out;
}

}  // namespace testing
