#pragma once

#include <cmath>
#include <vector>

#include "thermoforge/core.hpp"
#include "thermoforge/tape.hpp"

namespace thermoforge {

// Standard Adam with bias correction.
struct AdamState {
    double lr = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int t = 0;
    std::vector<ad::Vec> m, v;  // one slot per parameter vector

    explicit AdamState(double lr_ = 1e-2) : lr(lr_) {}
};

inline void adam_step(AdamState& state, std::vector<ad::Vec*> params,
                      const std::vector<const ad::Vec*>& grads) {
    require(params.size() == grads.size(), "adam_step: params/grads size mismatch");
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t p = 0; p < params.size(); ++p) {
            state.m[p].assign(params[p]->size(), 0.0);
            state.v[p].assign(params[p]->size(), 0.0);
        }
    }
    state.t += 1;
    double bc1 = 1.0 - std::pow(state.beta1, state.t);
    double bc2 = 1.0 - std::pow(state.beta2, state.t);
    for (std::size_t p = 0; p < params.size(); ++p) {
        require(params[p]->size() == grads[p]->size(), "adam_step: grad shape mismatch");
        for (std::size_t i = 0; i < params[p]->size(); ++i) {
            double g = (*grads[p])[i];
            if (!std::isfinite(g))
                throw SimulationError("adam_step: non-finite gradient in parameter " +
                                      std::to_string(p) + "[" + std::to_string(i) + "]");
            state.m[p][i] = state.beta1 * state.m[p][i] + (1.0 - state.beta1) * g;
            state.v[p][i] = state.beta2 * state.v[p][i] + (1.0 - state.beta2) * g * g;
            double mhat = state.m[p][i] / bc1;
            double vhat = state.v[p][i] / bc2;
            (*params[p])[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace thermoforge
