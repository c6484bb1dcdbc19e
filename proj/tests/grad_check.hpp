#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "fpm/sdae.hpp"

namespace fpm::testing {

inline double objective(const AutoencoderModel& m, const Matrix& input, const Matrix& target, const std::vector<double>& w,
                 const std::vector<int>& groups, double lambda) {
    const ForwardPass f = forward(m, input);
    double v = weighted_loss(target, f.output(), w);
    if (lambda > 0.0) v += lambda * latent_penalty(f.acts[m.encoder_depth], groups).value;
    return v;
}

// Sign pattern of every ReLU pre-activation; a change under perturbation means
// the finite difference straddles a kink.
inline std::vector<bool> relu_pattern(const AutoencoderModel& m, const Matrix& input) {
    const ForwardPass f = forward(m, input);
    std::vector<bool> p;
    for (std::size_t l = 0; l < m.layers.size(); ++l)
        if (m.layers[l].activation == ActivationKind::ReLU)
            for (double z : f.pre[l].data()) p.push_back(z > 0.0);
    return p;
}

struct GradCheck {
    double worst = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;
};

// Relative error |a - f| / max(|a|, |f|, 1e-3): relative for gradients of
// ordinary size, absolute below 1e-3 where round-off in the difference
// quotient (about 1e-10 at h = 1e-6) would dominate a pure ratio.
inline GradCheck check_gradients(AutoencoderModel m, const Matrix& input, const Matrix& target, const std::vector<double>& w,
                          const std::vector<int>& groups, double lambda) {
    const ForwardPass f = forward(m, input);
    LatentPenalty p;
    if (lambda > 0.0) p = latent_penalty(f.acts[m.encoder_depth], groups);
    const Gradients g = backward(m, f, target, w, lambda > 0.0 ? &p.grad : nullptr, lambda);
    const auto base = relu_pattern(m, input);
    const double h = 1e-6;
    GradCheck out;
    auto probe = [&](double& param, double analytic) {
        const double saved = param;
        param = saved + h;
        const double up = objective(m, input, target, w, groups, lambda);
        const bool kink_up = relu_pattern(m, input) != base;
        param = saved - h;
        const double down = objective(m, input, target, w, groups, lambda);
        const bool kink_down = relu_pattern(m, input) != base;
        param = saved;
        if (kink_up || kink_down) {
            ++out.skipped;
            return;
        }
        const double fd = (up - down) / (2 * h);
        const double rel = std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-3});
        out.worst = std::max(out.worst, rel);
        ++out.checked;
    };
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        auto& W = m.layers[l].W.data();
        for (std::size_t i = 0; i < W.size(); ++i) probe(W[i], g.dW[l].data()[i]);
        auto& b = m.layers[l].b;
        for (std::size_t j = 0; j < b.size(); ++j) probe(b[j], g.db[l][j]);
    }
    return out;
}

inline AutoencoderModel small_net(ActivationPreset preset, std::uint64_t seed) {
    AutoencoderModel m = init_model(7, 3, {5}, {5}, preset, seed);
    Rng rng(seed + 99);
    for (auto& L : m.layers)
        for (double& v : L.b) v = rng.uniform(-0.3, 0.3);
    return m;
}

} // namespace fpm::testing
