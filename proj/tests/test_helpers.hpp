#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "dps/tensor.hpp"

namespace dps::testing {

/// Central finite differences against autodiff, the gradient oracle used
/// throughout the suite. `make_loss` must rebuild the loss from the current
/// parameter values each call (fresh tape).
inline double max_relative_grad_error(std::vector<Tensor>& params,
                                      const std::function<Tensor()>& make_loss,
                                      double step = 1e-5) {
    for (Tensor& p : params) p.set_requires_grad(true);
    zero_grads(params);
    Tensor loss = make_loss();
    backward(loss);

    std::vector<std::vector<double>> analytic;
    for (Tensor& p : params) analytic.push_back(p.grad());

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = params[pi];
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double orig = p.data()[j];
            p.mutable_data()[j] = orig + step;
            const double up = make_loss().value();
            p.mutable_data()[j] = orig - step;
            const double down = make_loss().value();
            p.mutable_data()[j] = orig;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[pi][j];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-6});
            const double rel = std::fabs(a - numeric) / denom;
            if (std::fabs(a) < 1e-10 && std::fabs(numeric) < 1e-10) continue;
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace dps::testing
