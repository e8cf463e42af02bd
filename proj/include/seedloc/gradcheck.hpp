#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "seedloc/loss.hpp"
#include "seedloc/net.hpp"
#include "seedloc/targetmap.hpp"

namespace seedloc {

struct GradCheckEntry {
    std::string name;
    double max_rel = 0.0;
    double max_abs = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> tensors;
    double max_rel = 0.0;
    double seconds = 0.0;

    bool pass(double threshold) const { return max_rel < threshold; }
};

// Central finite differences through the whole network and loss, in double
// precision, for every element of every trainable tensor. The relative
// error denominator is floored at a few percent of the largest gradient so
// near-zero entries are compared absolutely.
inline GradCheckReport gradient_check(const ArchConfig& arch = {1, 2}, Index3 input_shape = {8, 8, 8},
                                      std::uint64_t seed = 7, double h = 1e-5,
                                      double weight_floor = 1e-3) {
    const auto t0 = std::chrono::steady_clock::now();
    RegressionNet<double> net(arch, seed);
    Rng rng(seed + 1);
    Tensor<double> x(1, arch.input_channels, input_shape);
    for (auto& v : x.data) v = rng.normal();

    // structured target: two kernels inside the grid, mildly scaled
    Volume grid(input_shape, {1, 1, 1}, {0, 0, 0});
    AnnotationSet ann;
    ann.points_mm.push_back({3.1, 3.7, 4.2});
    ann.points_mm.push_back({5.4, 4.1, 3.0});
    const ProbabilityMap map = build_target_map(grid, ann, KernelSpec{{1.0, 1.0, 2.0}, 4.0}, 30.0);
    Tensor<double> target = tensor_from_volume<double>(map.grid);

    auto loss_of = [&]() {
        const Tensor<double> pred = net.forward(x, true);
        double loss = 0.0;
        const double n = static_cast<double>(pred.size());
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double t = target.data[i];
            const double d = t - pred.data[i];
            loss += (t + weight_floor) * d * d;
        }
        return loss / n;
    };

    auto params = net.params();
    {
        const Tensor<double> pred = net.forward(x, true);
        auto [loss, grad] = weighted_mse(pred, target, weight_floor);
        (void)loss;
        net.backward(grad);
    }
    std::vector<std::vector<double>> analytic;
    double gmax = 0.0;
    for (const auto& p : params) {
        if (!p.trainable) continue;
        analytic.push_back(*p.grad);
        for (double g : analytic.back()) gmax = std::max(gmax, std::abs(g));
    }
    const double floor = std::max(1e-8, 0.02 * gmax);

    GradCheckReport report;
    std::size_t ti = 0;
    for (auto& p : params) {
        if (!p.trainable) continue;
        GradCheckEntry entry;
        entry.name = p.name;
        auto& w = *p.value;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double old = w[i];
            w[i] = old + h;
            const double lp = loss_of();
            w[i] = old - h;
            const double lm = loss_of();
            w[i] = old;
            const double fd = (lp - lm) / (2.0 * h);
            const double a = analytic[ti][i];
            const double abs_err = std::abs(a - fd);
            const double rel = abs_err / std::max({std::abs(a), std::abs(fd), floor});
            entry.max_abs = std::max(entry.max_abs, abs_err);
            entry.max_rel = std::max(entry.max_rel, rel);
        }
        report.max_rel = std::max(report.max_rel, entry.max_rel);
        report.tensors.push_back(std::move(entry));
        ++ti;
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace seedloc
