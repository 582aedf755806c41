#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "handcontact/error.hpp"
#include "handcontact/tensor.hpp"

namespace hc::opt {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment buffers, one pair per parameter tensor, same order.
struct AdamState {
    long step = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;

    template <typename Params>
    static AdamState zeros_like(const Params& params) {
        AdamState s;
        s.m.reserve(params.size());
        s.v.reserve(params.size());
        for (const auto& [name, t] : params) {
            s.m.emplace_back(t.shape(), 0.0);
            s.v.emplace_back(t.shape(), 0.0);
        }
        return s;
    }
};

template <typename Params>
void adam_step(Params& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamConfig& cfg) {
    if (grads.size() != params.size() || state.m.size() != params.size())
        throw DimensionError("adam: parameter/gradient/state count mismatch");
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& w = params[p].second;
        const Tensor& g = grads[p];
        if (!w.same_shape(g)) throw DimensionError("adam: gradient shape mismatch");
        double* mw = state.m[p].data();
        double* vw = state.v[p].data();
        double* ww = w.data();
        const double* gw = g.data();
        for (int i = 0; i < w.numel(); ++i) {
            mw[i] = cfg.beta1 * mw[i] + (1.0 - cfg.beta1) * gw[i];
            vw[i] = cfg.beta2 * vw[i] + (1.0 - cfg.beta2) * gw[i] * gw[i];
            const double mhat = mw[i] / bc1;
            const double vhat = vw[i] / bc2;
            ww[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

}  // namespace hc::opt
