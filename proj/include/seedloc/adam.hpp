#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "seedloc/layers.hpp"

namespace seedloc {

// Adam with bias correction. One moment pair per trainable tensor, in the
// order the network lists them; updates are elementwise and deterministic.
template <typename T>
struct Adam {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step_count = 0;

    struct Slot {
        std::vector<T> m, v;
    };
    std::vector<Slot> slots;

    void init(const std::vector<ParamRef<T>>& params) {
        slots.clear();
        for (const auto& p : params) {
            if (!p.trainable) continue;
            Slot s;
            s.m.assign(p.value->size(), T(0));
            s.v.assign(p.value->size(), T(0));
            slots.push_back(std::move(s));
        }
        step_count = 0;
    }

    void step(const std::vector<ParamRef<T>>& params, double lr) {
        ++step_count;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        std::size_t slot = 0;
        for (const auto& p : params) {
            if (!p.trainable) continue;
            auto& s = slots.at(slot++);
            const auto& g = *p.grad;
            auto& w = *p.value;
            for (std::size_t i = 0; i < g.size(); ++i)
                if (!std::isfinite(static_cast<double>(g[i])))
                    throw std::runtime_error("adam: non-finite gradient in " + p.name);
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double gi = g[i];
                const double m = beta1 * s.m[i] + (1.0 - beta1) * gi;
                const double v = beta2 * s.v[i] + (1.0 - beta2) * gi * gi;
                s.m[i] = static_cast<T>(m);
                s.v[i] = static_cast<T>(v);
                const double mhat = m / bc1;
                const double vhat = v / bc2;
                w[i] = static_cast<T>(w[i] - lr * mhat / (std::sqrt(vhat) + eps));
            }
        }
        if (slot != slots.size()) throw std::logic_error("adam: parameter list changed size");
    }
};

}  // namespace seedloc
