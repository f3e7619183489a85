#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "cws/error.hpp"

namespace cws {

/// Central-difference check of `analytic` against `loss` over every
/// coordinate of `params`. Returns max |a - n| / max(1, |a| + |n|).
///
/// `loss` must be a deterministic function of `params`; it is evaluated
/// twice at the unperturbed point to confirm that.
inline double grad_check(std::function<double()> const& loss,
                         std::span<double> params,
                         std::span<double const> analytic,
                         double perturbation = 1e-4)
{
    if (!(perturbation >= 1e-6 && perturbation <= 1e-3)) {
        throw ConfigError("grad_check: perturbation must lie in [1e-6, 1e-3]");
    }
    if (params.size() != analytic.size()) {
        throw ShapeError("grad_check: analytic gradient has " + std::to_string(analytic.size())
                         + " entries for " + std::to_string(params.size()) + " parameters");
    }
    double const first = loss();
    double const second = loss();
    if (first != second) {
        throw DeterminismError("grad_check: loss closure is not deterministic");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        double const saved = params[i];
        params[i] = saved + perturbation;
        double const up = loss();
        params[i] = saved - perturbation;
        double const down = loss();
        params[i] = saved;
        double const numeric = (up - down) / (2.0 * perturbation);
        double const a = analytic[i];
        double const err = std::abs(a - numeric) / std::max(1.0, std::abs(a) + std::abs(numeric));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace cws
