#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "cws/error.hpp"
#include "cws/tensor.hpp"

namespace cws {

struct AdamState {
    std::size_t step = 0;
    std::vector<Vector> first_moment;
    std::vector<Vector> second_moment;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    bool operator==(AdamState const&) const = default;
};

/// One bias-corrected Adam step over a list of parameter tensors.
/// Moments are sized (zero-filled) on the first call.
inline void adam_update(std::span<std::span<double> const> params,
                        std::span<std::span<double const> const> grads,
                        AdamState& state,
                        double lr)
{
    if (params.size() != grads.size()) {
        throw ShapeError("adam_update: " + std::to_string(params.size()) + " parameter tensors but "
                         + std::to_string(grads.size()) + " gradients");
    }
    if (state.first_moment.empty() && state.step == 0) {
        for (auto const& p : params) {
            state.first_moment.emplace_back(p.size(), 0.0);
            state.second_moment.emplace_back(p.size(), 0.0);
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw ShapeError("adam_update: optimizer state tracks a different tensor count");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size() != grads[i].size() || state.first_moment[i].size() != params[i].size()) {
            throw ShapeError("adam_update: shape mismatch in tensor " + std::to_string(i));
        }
    }
    ++state.step;
    auto const t = static_cast<double>(state.step);
    double const correction1 = 1.0 - std::pow(state.beta1, t);
    double const correction2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i];
        auto const g = grads[i];
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            double const m_hat = m[j] / correction1;
            double const v_hat = v[j] / correction2;
            p[j] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
}

}  // namespace cws
