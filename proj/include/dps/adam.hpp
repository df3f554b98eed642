#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "dps/tensor.hpp"

namespace dps {

/// Adam with bias correction. State moments are keyed positionally to the
/// parameter list, which therefore must be stable across steps.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

inline void adam_step(std::vector<Tensor>& params, AdamState& st, double lr) {
    if (!(lr > 0.0)) throw std::invalid_argument("adam_step: lr must be positive");
    if (st.m.empty()) {
        st.m.resize(params.size());
        st.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            st.m[i].assign(params[i].size(), 0.0);
            st.v[i].assign(params[i].size(), 0.0);
        }
    }
    if (st.m.size() != params.size())
        throw std::invalid_argument("adam_step: state holds " + std::to_string(st.m.size()) +
                                    " moments for " + std::to_string(params.size()) +
                                    " params");
    st.step += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        if (st.m[i].size() != p.size())
            throw std::invalid_argument("adam_step: moment/param shape mismatch at index " +
                                        std::to_string(i));
        const bool has_g = p.has_grad();
        const std::vector<double>* g = has_g ? &p.grad() : nullptr;
        std::vector<double>& data = p.mutable_data();
        for (std::size_t j = 0; j < data.size(); ++j) {
            const double gj = has_g ? (*g)[j] : 0.0;
            st.m[i][j] = st.beta1 * st.m[i][j] + (1.0 - st.beta1) * gj;
            st.v[i][j] = st.beta2 * st.v[i][j] + (1.0 - st.beta2) * gj * gj;
            const double mhat = st.m[i][j] / bc1;
            const double vhat = st.v[i][j] / bc2;
            data[j] -= lr * mhat / (std::sqrt(vhat) + st.eps);
        }
    }
}

}  // namespace dps
