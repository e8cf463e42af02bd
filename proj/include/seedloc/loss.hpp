#pragma once

#include <stdexcept>
#include <utility>

#include "seedloc/tensor.hpp"

namespace seedloc {

// Mean squared error weighted per voxel by (target + weight_floor), so
// background voxels (target 0) contribute nothing when the floor is 0.
//   L = (1/N) * sum_n (t_n + w0) * (t_n - p_n)^2
//   dL/dp_n = -(2/N) * (t_n + w0) * (t_n - p_n)
template <typename T>
std::pair<double, Tensor<T>> weighted_mse(const Tensor<T>& pred, const Tensor<T>& target,
                                          double weight_floor = 0.0) {
    if (!pred.same_shape(target)) throw std::invalid_argument("loss: shape mismatch");
    const double n = static_cast<double>(pred.size());
    Tensor<T> grad(pred.n, pred.c, pred.sp);
    double loss = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double t = target.data[i];
        const double d = t - static_cast<double>(pred.data[i]);
        const double wgt = t + weight_floor;
        loss += wgt * d * d;
        grad.data[i] = static_cast<T>(-2.0 / n * wgt * d);
    }
    return {loss / n, std::move(grad)};
}

}  // namespace seedloc
