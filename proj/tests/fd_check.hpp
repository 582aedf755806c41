#pragma once

#include <functional>
#include <vector>

#include "doctest.h"
#include "handcontact/tape.hpp"

namespace hc::testutil {

using Builder = std::function<ad::NodeId(ad::Tape&, const std::vector<ad::NodeId>&)>;

inline double eval_loss(const std::vector<Tensor>& inputs, const Builder& build) {
    ad::Tape tape;
    std::vector<ad::NodeId> ids;
    ids.reserve(inputs.size());
    for (const auto& x : inputs) ids.push_back(tape.leaf(x));
    return tape.value(build(tape, ids))[0];
}

// Central-difference check of every input element against the recorded
// backward pass.
inline void check_gradients(std::vector<Tensor> inputs, const Builder& build,
                            double tol = 1e-6, double h = 1e-6) {
    ad::Tape tape;
    std::vector<ad::NodeId> ids;
    for (const auto& x : inputs) ids.push_back(tape.leaf(x));
    const ad::NodeId loss = build(tape, ids);
    tape.backward(loss);

    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::size_t e = 0; e < inputs[i].numel(); ++e) {
            auto plus = inputs;
            auto minus = inputs;
            plus[i][e] += h;
            minus[i][e] -= h;
            const double fd = (eval_loss(plus, build) - eval_loss(minus, build)) / (2.0 * h);
            const double an = tape.grad(ids[i])[e];
            const double scale = std::max({1.0, std::abs(fd), std::abs(an)});
            INFO("input ", i, " element ", e, " analytic ", an, " fd ", fd);
            REQUIRE(std::abs(an - fd) <= tol * scale);
        }
    }
}

// Random but reproducible tensors for gradient probes.
inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape), 0.0);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Reduce an arbitrary node to a scalar with fixed pseudo-random weights so
// every output element influences the loss differently.
inline ad::NodeId weighted_sum(ad::Tape& tape, ad::NodeId x, std::uint64_t salt = 7) {
    Rng rng(salt);
    Tensor w(tape.value(x).shape(), 0.0);
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(0.25, 1.75);
    return tape.sum(tape.mul(x, tape.constant(std::move(w))));
}

}  // namespace hc::testutil
