#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "seedloc/types.hpp"

namespace seedloc {

// Dense (batch, channel, x, y, z) tensor, x-fastest like Volume, channels
// and batch slowest: flat = ix + nx*(iy + ny*(iz + nz*(c + C*n))).
template <typename T>
struct Tensor {
    int n = 0, c = 0;
    Index3 sp{0, 0, 0};
    std::vector<T> data;

    Tensor() = default;
    Tensor(int n_, int c_, Index3 sp_, T fill = T(0))
        : n(n_), c(c_), sp(sp_),
          data(static_cast<std::size_t>(n_) * c_ * sp_[0] * sp_[1] * sp_[2], fill) {}

    std::size_t spatial_size() const {
        return static_cast<std::size_t>(sp[0]) * sp[1] * sp[2];
    }
    std::size_t size() const { return data.size(); }

    std::size_t block(int in, int ic) const {  // offset of the (n,c) spatial block
        return (static_cast<std::size_t>(in) * c + ic) * spatial_size();
    }
    T* slice(int in, int ic) { return data.data() + block(in, ic); }
    const T* slice(int in, int ic) const { return data.data() + block(in, ic); }

    std::size_t flat(int in, int ic, int ix, int iy, int iz) const {
        return block(in, ic) + static_cast<std::size_t>(ix) +
               static_cast<std::size_t>(sp[0]) *
                   (static_cast<std::size_t>(iy) + static_cast<std::size_t>(sp[1]) * iz);
    }
    T& at(int in, int ic, int ix, int iy, int iz) { return data[flat(in, ic, ix, iy, iz)]; }
    T at(int in, int ic, int ix, int iy, int iz) const { return data[flat(in, ic, ix, iy, iz)]; }

    bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && sp == o.sp; }
};

template <typename T>
Tensor<T> tensor_from_volume(const Volume& v) {
    Tensor<T> t(1, 1, v.shape);
    for (std::size_t i = 0; i < v.data.size(); ++i) t.data[i] = static_cast<T>(v.data[i]);
    return t;
}

template <typename T>
Volume volume_from_tensor(const Tensor<T>& t, const Volume& like, int in = 0, int ic = 0) {
    Volume v(t.sp, like.spacing_mm, like.origin_mm);
    const T* s = t.slice(in, ic);
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = static_cast<float>(s[i]);
    return v;
}

// Channel concatenation [a ; b]; spatial shapes and batch must agree.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.n != b.n || a.sp != b.sp) throw std::invalid_argument("concat: shape mismatch");
    Tensor<T> out(a.n, a.c + b.c, a.sp);
    const std::size_t sz = a.spatial_size();
    for (int in = 0; in < a.n; ++in) {
        for (int ic = 0; ic < a.c; ++ic)
            std::copy(a.slice(in, ic), a.slice(in, ic) + sz, out.slice(in, ic));
        for (int ic = 0; ic < b.c; ++ic)
            std::copy(b.slice(in, ic), b.slice(in, ic) + sz, out.slice(in, a.c + ic));
    }
    return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& t, int c_first) {
    if (c_first <= 0 || c_first >= t.c) throw std::invalid_argument("split: bad channel count");
    Tensor<T> a(t.n, c_first, t.sp), b(t.n, t.c - c_first, t.sp);
    const std::size_t sz = t.spatial_size();
    for (int in = 0; in < t.n; ++in) {
        for (int ic = 0; ic < a.c; ++ic)
            std::copy(t.slice(in, ic), t.slice(in, ic) + sz, a.slice(in, ic));
        for (int ic = 0; ic < b.c; ++ic)
            std::copy(t.slice(in, c_first + ic), t.slice(in, c_first + ic) + sz, b.slice(in, ic));
    }
    return {std::move(a), std::move(b)};
}

}  // namespace seedloc
