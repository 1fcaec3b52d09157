#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "cadis/autograd.hpp"

namespace cadis::testing {

// Central finite-difference gradient check. `build` must construct the full
// forward graph from the current parameter values and return the scalar root.
// Checks up to `max_coords` evenly spaced coordinates per parameter.
inline double max_grad_rel_err(const std::vector<ag::Var>& params,
                               const std::function<ag::Var()>& build, double step = 1e-5,
                               int max_coords = 6) {
    auto root = build();
    ag::backward(root);
    std::vector<Tensor> analytic;
    for (const auto& p : params) {
        analytic.push_back(p->has_grad ? p->grad : Tensor::zeros(p->value.shape));
        p->has_grad = false;
        p->grad = Tensor();
    }
    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        std::size_t n = p->value.numel();
        std::size_t stride = std::max<std::size_t>(1, n / static_cast<std::size_t>(max_coords));
        for (std::size_t i = 0; i < n; i += stride) {
            double saved = p->value.data[i];
            p->value.data[i] = saved + step;
            double fp = build()->value.data[0];
            p->value.data[i] = saved - step;
            double fm = build()->value.data[0];
            p->value.data[i] = saved;
            double numeric = (fp - fm) / (2.0 * step);
            double a = analytic[pi].data[i];
            double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-6});
            worst = std::max(worst, std::fabs(a - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace cadis::testing
