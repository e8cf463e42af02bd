#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "seedloc/parallel.hpp"
#include "seedloc/rng.hpp"
#include "seedloc/tensor.hpp"

namespace seedloc {

// Handle to one named parameter/buffer tensor of the network. Buffers
// (running statistics) have trainable=false and no gradient storage.
template <typename T>
struct ParamRef {
    std::string name;
    std::vector<T>* value = nullptr;
    std::vector<T>* grad = nullptr;
    std::vector<int> shape;
    bool trainable = true;
};

namespace rowops {

// Row kernels for the convolution inner loops. Local accumulator buffers
// and restrict-qualified pointers keep the compiler free to vectorize;
// lane-split dot products fix the accumulation order independently of the
// instruction set, so results do not depend on the worker count.

template <typename T>
__attribute__((noinline)) void axpy(T* __restrict__ acc, const T* __restrict__ x, T w, int len) {
    for (int i = 0; i < len; ++i) acc[i] += w * x[i];
}

template <typename T>
__attribute__((noinline)) T dot(const T* __restrict__ a, const T* __restrict__ b, int len) {
    constexpr int lanes = 16;
    T lane[lanes] = {};
    int i = 0;
    for (; i + lanes <= len; i += lanes)
        for (int j = 0; j < lanes; ++j) lane[j] += a[i + j] * b[i + j];
    T tail = T(0);
    for (; i < len; ++i) tail += a[i] * b[i];
    T sum = tail;
    for (int j = 0; j < lanes; ++j) sum += lane[j];
    return sum;
}

// acc[i] += w0*x[i-1] + w1*x[i] + w2*x[i+1], zero beyond the row ends
template <typename T>
__attribute__((noinline)) void tap3(T* __restrict__ acc, const T* __restrict__ x, T w0, T w1, T w2, int n) {
    if (n == 1) {
        acc[0] += w1 * x[0];
        return;
    }
    acc[0] += w1 * x[0] + w2 * x[1];
    for (int i = 1; i < n - 1; ++i) acc[i] += w0 * x[i - 1] + w1 * x[i] + w2 * x[i + 1];
    acc[n - 1] += w0 * x[n - 2] + w1 * x[n - 1];
}

// three stacked rows at once; w points at 9 taps ordered [ky][kx]
template <typename T>
__attribute__((noinline)) void tap33(T* __restrict__ acc, const T* __restrict__ r0, const T* __restrict__ r1,
                  const T* __restrict__ r2, const T* __restrict__ w, int n) {
    if (n == 1) {
        acc[0] += w[1] * r0[0] + w[4] * r1[0] + w[7] * r2[0];
        return;
    }
    acc[0] += w[1] * r0[0] + w[2] * r0[1] + w[4] * r1[0] + w[5] * r1[1] + w[7] * r2[0] +
              w[8] * r2[1];
    for (int i = 1; i < n - 1; ++i)
        acc[i] += w[0] * r0[i - 1] + w[1] * r0[i] + w[2] * r0[i + 1] + w[3] * r1[i - 1] +
                  w[4] * r1[i] + w[5] * r1[i + 1] + w[6] * r2[i - 1] + w[7] * r2[i] +
                  w[8] * r2[i + 1];
    acc[n - 1] += w[0] * r0[n - 2] + w[1] * r0[n - 1] + w[3] * r1[n - 2] + w[4] * r1[n - 1] +
                  w[6] * r2[n - 2] + w[7] * r2[n - 1];
}

// multi-row variant of dot3: both pointers advance by `stride` after each of
// `rows` rows; the accumulators stay live across the whole sweep
template <typename T>
__attribute__((noinline)) void dot3_rows(const T* __restrict__ g, const T* __restrict__ x,
                                         std::size_t stride, int rows, int n,
                                         T* __restrict__ d) {
    if (n == 1) {
        T s1 = T(0);
        for (int r = 0; r < rows; ++r, g += stride, x += stride) s1 += g[0] * x[0];
        d[1] += s1;
        return;
    }
    constexpr int lanes = 8;
    T l0[lanes] = {}, l1[lanes] = {}, l2[lanes] = {};
    T s0 = T(0), s1 = T(0), s2 = T(0);
    for (int r = 0; r < rows; ++r, g += stride, x += stride) {
        int i = 1;
        for (; i + lanes <= n - 1; i += lanes)
            for (int j = 0; j < lanes; ++j) {
                const T gv = g[i + j];
                l0[j] += gv * x[i + j - 1];
                l1[j] += gv * x[i + j];
                l2[j] += gv * x[i + j + 1];
            }
        for (; i < n - 1; ++i) {
            const T gv = g[i];
            s0 += gv * x[i - 1];
            s1 += gv * x[i];
            s2 += gv * x[i + 1];
        }
        s1 += g[0] * x[0];
        s2 += g[0] * x[1];
        s0 += g[n - 1] * x[n - 2];
        s1 += g[n - 1] * x[n - 1];
    }
    for (int j = 0; j < lanes; ++j) {
        s0 += l0[j];
        s1 += l1[j];
        s2 += l2[j];
    }
    d[0] += s0;
    d[1] += s1;
    d[2] += s2;
}

// d[kx] += sum_ox g[ox] * x[ox + kx - 1] for kx in {0,1,2}
template <typename T>
__attribute__((noinline)) void dot3(const T* __restrict__ g, const T* __restrict__ x, int n, T* __restrict__ d) {
    if (n == 1) {
        d[1] += g[0] * x[0];
        return;
    }
    constexpr int lanes = 8;
    T l0[lanes] = {}, l1[lanes] = {}, l2[lanes] = {};
    int i = 1;
    for (; i + lanes <= n - 1; i += lanes)
        for (int j = 0; j < lanes; ++j) {
            const T gv = g[i + j];
            l0[j] += gv * x[i + j - 1];
            l1[j] += gv * x[i + j];
            l2[j] += gv * x[i + j + 1];
        }
    T s0 = T(0), s1 = T(0), s2 = T(0);
    for (; i < n - 1; ++i) {
        const T gv = g[i];
        s0 += gv * x[i - 1];
        s1 += gv * x[i];
        s2 += gv * x[i + 1];
    }
    for (int j = 0; j < lanes; ++j) {
        s0 += l0[j];
        s1 += l1[j];
        s2 += l2[j];
    }
    s1 += g[0] * x[0];
    s2 += g[0] * x[1];
    s0 += g[n - 1] * x[n - 2];
    s1 += g[n - 1] * x[n - 1];
    d[0] += s0;
    d[1] += s1;
    d[2] += s2;
}

}  // namespace rowops

namespace act {

template <typename T>
T softplus(T x, T beta) {
    const T bx = beta * x;
    if (bx > T(0)) return x + std::log1p(std::exp(-bx)) / beta;
    return std::log1p(std::exp(bx)) / beta;
}

// derivative expressed through the output: d/dx softplus = 1 - exp(-beta*y)
template <typename T>
T softplus_grad_from_output(T y, T beta) {
    return T(1) - std::exp(-beta * y);
}

template <typename T>
T relu(T x) {
    return x > T(0) ? x : T(0);
}

}  // namespace act

// 3D cross-correlation, zero padding. Kernel layout [oc][ic][kz][ky][kx].
template <typename T>
struct Conv3d {
    int in_ch = 1, out_ch = 1, ksize = 3, stride = 1, pad = 1;
    std::vector<T> w, b, gw, gb;

    Conv3d() = default;
    Conv3d(int ic, int oc, int k = 3, int s = 1, int p = 1)
        : in_ch(ic), out_ch(oc), ksize(k), stride(s), pad(p),
          w(static_cast<std::size_t>(oc) * ic * k * k * k), b(static_cast<std::size_t>(oc)),
          gw(w.size()), gb(b.size()) {}

    void init_he(Rng& rng) {
        const double fan_in = static_cast<double>(in_ch) * ksize * ksize * ksize;
        const double sd = std::sqrt(2.0 / fan_in);
        for (auto& v : w) v = static_cast<T>(rng.normal(0.0, sd));
        for (auto& v : b) v = T(0);
    }

    Index3 out_shape(const Index3& in) const {
        Index3 o;
        for (int a = 0; a < 3; ++a) {
            const int t = in[a] + 2 * pad - ksize;
            if (t < 0 || t % stride != 0)
                throw std::invalid_argument("conv: input shape incompatible with kernel/stride");
            o[a] = t / stride + 1;
        }
        return o;
    }

    std::size_t widx(int oc, int ic, int kx, int ky, int kz) const {
        return ((static_cast<std::size_t>(oc) * in_ch + ic) * ksize + kz) *
                   static_cast<std::size_t>(ksize) * ksize +
               static_cast<std::size_t>(ky) * ksize + kx;
    }

    Tensor<T> forward(const Tensor<T>& x, bool cache) {
        if (x.c != in_ch) throw std::invalid_argument("conv: channel mismatch");
        const Index3 os = out_shape(x.sp);
        Tensor<T> y(x.n, out_ch, os);
        const int nx = x.sp[0], ny = x.sp[1], nz = x.sp[2];
        const int ox_n = os[0], oy_n = os[1], oz_n = os[2];
        const bool same_pad = ksize == 3 && stride == 1 && pad == 1;
        if (same_pad) {
            // one task per (sample, output plane); all output channels are
            // accumulated while the contributing input rows are cache-hot
            parallel_for(0, static_cast<std::int64_t>(x.n) * nz, [&](std::int64_t idx) {
                const int in_ = static_cast<int>(idx / nz);
                const int oz = static_cast<int>(idx % nz);
                std::vector<T> acc(static_cast<std::size_t>(out_ch) * nx);
                for (int oy = 0; oy < ny; ++oy) {
                    for (int oc = 0; oc < out_ch; ++oc)
                        std::fill(acc.begin() + static_cast<std::size_t>(oc) * nx,
                                  acc.begin() + static_cast<std::size_t>(oc + 1) * nx,
                                  b[static_cast<std::size_t>(oc)]);
                    for (int ic = 0; ic < in_ch; ++ic) {
                        const T* xsl = x.slice(in_, ic);
                        for (int kz = 0; kz < 3; ++kz) {
                            const int iz = oz + kz - 1;
                            if (iz < 0 || iz >= nz) continue;
                            const T* plane = xsl + static_cast<std::size_t>(iz) * ny * nx;
                            if (oy >= 1 && oy + 1 < ny) {
                                const T* r0 = plane + static_cast<std::size_t>(oy - 1) * nx;
                                const T* r1 = plane + static_cast<std::size_t>(oy) * nx;
                                const T* r2 = plane + static_cast<std::size_t>(oy + 1) * nx;
                                for (int oc = 0; oc < out_ch; ++oc)
                                    rowops::tap33(acc.data() + static_cast<std::size_t>(oc) * nx,
                                                  r0, r1, r2, &w[widx(oc, ic, 0, 0, kz)], nx);
                            } else {
                                for (int ky = 0; ky < 3; ++ky) {
                                    const int iy = oy + ky - 1;
                                    if (iy < 0 || iy >= ny) continue;
                                    const T* row = plane + static_cast<std::size_t>(iy) * nx;
                                    for (int oc = 0; oc < out_ch; ++oc) {
                                        const T* w9 = &w[widx(oc, ic, 0, 0, kz)];
                                        rowops::tap3(acc.data() +
                                                         static_cast<std::size_t>(oc) * nx,
                                                     row, w9[ky * 3], w9[ky * 3 + 1],
                                                     w9[ky * 3 + 2], nx);
                                    }
                                }
                            }
                        }
                    }
                    for (int oc = 0; oc < out_ch; ++oc)
                        std::copy(acc.begin() + static_cast<std::size_t>(oc) * nx,
                                  acc.begin() + static_cast<std::size_t>(oc + 1) * nx,
                                  y.slice(in_, oc) + (static_cast<std::size_t>(oz) * ny + oy) * nx);
                }
            });
            if (cache) x_ = x;
            return y;
        }
        parallel_for(0, static_cast<std::int64_t>(x.n) * out_ch, [&](std::int64_t idx) {
            const int in_ = static_cast<int>(idx / out_ch);
            const int oc = static_cast<int>(idx % out_ch);
            T* yslice = y.slice(in_, oc);
            if (stride == 1) {
                std::vector<T> acc(static_cast<std::size_t>(ox_n));
                for (int oz = 0; oz < oz_n; ++oz)
                    for (int oy = 0; oy < oy_n; ++oy) {
                        std::fill(acc.begin(), acc.end(), b[static_cast<std::size_t>(oc)]);
                        for (int ic = 0; ic < in_ch; ++ic) {
                            const T* xsl = x.slice(in_, ic);
                            for (int kz = 0; kz < ksize; ++kz) {
                                const int iz = oz + kz - pad;
                                if (iz < 0 || iz >= nz) continue;
                                for (int ky = 0; ky < ksize; ++ky) {
                                    const int iy = oy + ky - pad;
                                    if (iy < 0 || iy >= ny) continue;
                                    const T* xrow =
                                        xsl + (static_cast<std::size_t>(iz) * ny + iy) * nx;
                                    for (int kx = 0; kx < ksize; ++kx) {
                                        const T wv = w[widx(oc, ic, kx, ky, kz)];
                                        const int sh = kx - pad;  // ix = ox + sh
                                        const int lo = std::max(0, -sh);
                                        const int hi = std::min(ox_n, nx - sh);
                                        if (hi > lo)
                                            rowops::axpy(acc.data() + lo, xrow + sh + lo, wv,
                                                         hi - lo);
                                    }
                                }
                            }
                        }
                        std::copy(acc.begin(), acc.end(),
                                  yslice + (static_cast<std::size_t>(oz) * oy_n + oy) * ox_n);
                    }
            } else {
                std::fill(yslice, yslice + y.spatial_size(), b[static_cast<std::size_t>(oc)]);
                for (int oz = 0; oz < oz_n; ++oz)
                    for (int oy = 0; oy < oy_n; ++oy)
                        for (int ox = 0; ox < ox_n; ++ox) {
                            T acc = b[static_cast<std::size_t>(oc)];
                            for (int ic = 0; ic < in_ch; ++ic)
                                for (int kz = 0; kz < ksize; ++kz) {
                                    const int iz = oz * stride + kz - pad;
                                    if (iz < 0 || iz >= nz) continue;
                                    for (int ky = 0; ky < ksize; ++ky) {
                                        const int iy = oy * stride + ky - pad;
                                        if (iy < 0 || iy >= ny) continue;
                                        for (int kx = 0; kx < ksize; ++kx) {
                                            const int ix = ox * stride + kx - pad;
                                            if (ix < 0 || ix >= nx) continue;
                                            acc += w[widx(oc, ic, kx, ky, kz)] *
                                                   x.at(in_, ic, ix, iy, iz);
                                        }
                                    }
                                }
                            y.at(in_, oc, ox, oy, oz) = acc;
                        }
            }
        });
        if (cache) x_ = x;
        return y;
    }

    // Fills gw/gb and returns the gradient w.r.t. the cached input.
    Tensor<T> backward(const Tensor<T>& g) {
        if (x_.size() == 0) throw std::logic_error("conv: backward without cached forward");
        if (stride != 1) throw std::logic_error("conv: backward implemented for stride 1");
        const Tensor<T>& x = x_;
        const Index3 os = g.sp;
        const int nx = x.sp[0], ny = x.sp[1], nz = x.sp[2];
        const int ox_n = os[0], oy_n = os[1], oz_n = os[2];

        const bool same_pad = ksize == 3 && stride == 1 && pad == 1;
        const std::size_t taps = static_cast<std::size_t>(ksize) * ksize * ksize;

        // weight gradient: per-(sample, input channel) partials, merged in a
        // fixed order so the result does not depend on the worker count
        std::vector<std::vector<double>> partial(
            static_cast<std::size_t>(x.n) * in_ch,
            std::vector<double>(static_cast<std::size_t>(out_ch) * taps, 0.0));
        parallel_for(0, static_cast<std::int64_t>(x.n) * in_ch, [&](std::int64_t idx) {
            const int in_ = static_cast<int>(idx / in_ch);
            const int ic = static_cast<int>(idx % in_ch);
            std::vector<double>& wacc = partial[static_cast<std::size_t>(idx)];
            const T* xsl = x.slice(in_, ic);
            if (same_pad) {
                // one fused sweep per (oc, kz, ky, output plane)
                for (int oc = 0; oc < out_ch; ++oc) {
                    const T* gsl = g.slice(in_, oc);
                    for (int kz = 0; kz < 3; ++kz)
                        for (int ky = 0; ky < 3; ++ky) {
                            const int oy_lo = std::max(0, 1 - ky);
                            const int oy_hi = std::min(ny, ny + 1 - ky);
                            if (oy_hi <= oy_lo) continue;
                            T d[3] = {};
                            for (int oz = std::max(0, 1 - kz); oz < std::min(nz, nz + 1 - kz);
                                 ++oz) {
                                const int iz = oz + kz - 1;
                                const T* grow =
                                    gsl + (static_cast<std::size_t>(oz) * ny + oy_lo) * nx;
                                const T* xrow =
                                    xsl +
                                    (static_cast<std::size_t>(iz) * ny + (oy_lo + ky - 1)) * nx;
                                rowops::dot3_rows(grow, xrow, static_cast<std::size_t>(nx),
                                                  oy_hi - oy_lo, nx, d);
                            }
                            double* wrow =
                                &wacc[static_cast<std::size_t>(oc) * taps +
                                      (static_cast<std::size_t>(kz) * 3 + ky) * 3];
                            wrow[0] += static_cast<double>(d[0]);
                            wrow[1] += static_cast<double>(d[1]);
                            wrow[2] += static_cast<double>(d[2]);
                        }
                }
                return;
            }
            for (int oz = 0; oz < oz_n; ++oz)
                for (int oy = 0; oy < oy_n; ++oy)
                    for (int kz = 0; kz < ksize; ++kz) {
                        const int iz = oz + kz - pad;
                        if (iz < 0 || iz >= nz) continue;
                        for (int ky = 0; ky < ksize; ++ky) {
                            const int iy = oy + ky - pad;
                            if (iy < 0 || iy >= ny) continue;
                            const T* xrow = xsl + (static_cast<std::size_t>(iz) * ny + iy) * nx;
                            for (int oc = 0; oc < out_ch; ++oc) {
                                const T* grow = g.slice(in_, oc) +
                                                (static_cast<std::size_t>(oz) * oy_n + oy) * ox_n;
                                double* wrow =
                                    &wacc[static_cast<std::size_t>(oc) * taps +
                                          (static_cast<std::size_t>(kz) * ksize + ky) * ksize];
                                for (int kx = 0; kx < ksize; ++kx) {
                                    const int sh = kx - pad;  // ix = ox + sh
                                    const int lo = std::max(0, -sh);
                                    const int hi = std::min(ox_n, nx - sh);
                                    if (hi <= lo) continue;
                                    wrow[kx] += static_cast<double>(
                                        rowops::dot(grow + lo, xrow + sh + lo, hi - lo));
                                }
                            }
                        }
                    }
        });
        for (int oc = 0; oc < out_ch; ++oc)
            for (int ic = 0; ic < in_ch; ++ic)
                for (int kz = 0; kz < ksize; ++kz)
                    for (int ky = 0; ky < ksize; ++ky)
                        for (int kx = 0; kx < ksize; ++kx) {
                            double sum = 0.0;
                            for (int in_ = 0; in_ < x.n; ++in_)
                                sum += partial[static_cast<std::size_t>(in_) * in_ch + ic]
                                              [static_cast<std::size_t>(oc) * taps +
                                               (static_cast<std::size_t>(kz) * ksize + ky) *
                                                   ksize +
                                               kx];
                            gw[widx(oc, ic, kx, ky, kz)] = static_cast<T>(sum);
                        }

        // bias gradient: plain sums of the upstream gradient per channel
        parallel_for(0, out_ch, [&](std::int64_t oc) {
            double bacc = 0.0;
            const std::size_t sz = g.spatial_size();
            for (int in_ = 0; in_ < g.n; ++in_) {
                const T* gs = g.slice(in_, static_cast<int>(oc));
                for (std::size_t i = 0; i < sz; ++i) bacc += gs[i];
            }
            gb[static_cast<std::size_t>(oc)] = static_cast<T>(bacc);
        });

        // input gradient; one task per (sample, input plane), all input
        // channels accumulated while the upstream gradient rows are hot
        Tensor<T> gx(x.n, in_ch, x.sp);
        if (same_pad) {
            // adjoint taps are the forward taps reversed within each
            // (oc, ic, kz) block of nine
            std::vector<T> wrev(w.size());
            for (int oc = 0; oc < out_ch; ++oc)
                for (int ic = 0; ic < in_ch; ++ic)
                    for (int kz = 0; kz < 3; ++kz) {
                        const T* w9 = &w[widx(oc, ic, 0, 0, kz)];
                        T* r9 = &wrev[widx(oc, ic, 0, 0, kz)];
                        for (int m = 0; m < 9; ++m) r9[m] = w9[8 - m];
                    }
            parallel_for(0, static_cast<std::int64_t>(x.n) * nz, [&](std::int64_t idx) {
                const int in_ = static_cast<int>(idx / nz);
                const int iz = static_cast<int>(idx % nz);
                std::vector<T> acc(static_cast<std::size_t>(in_ch) * nx);
                for (int iy = 0; iy < ny; ++iy) {
                    std::fill(acc.begin(), acc.end(), T(0));
                    const bool y_interior = iy >= 1 && iy + 1 < ny;
                    for (int oc = 0; oc < out_ch; ++oc) {
                        const T* gsl = g.slice(in_, oc);
                        for (int kz = 0; kz < 3; ++kz) {
                            const int oz = iz - kz + 1;
                            if (oz < 0 || oz >= nz) continue;
                            const T* gplane = gsl + static_cast<std::size_t>(oz) * ny * nx;
                            if (y_interior) {
                                const T* r0 = gplane + static_cast<std::size_t>(iy - 1) * nx;
                                const T* r1 = gplane + static_cast<std::size_t>(iy) * nx;
                                const T* r2 = gplane + static_cast<std::size_t>(iy + 1) * nx;
                                for (int ic = 0; ic < in_ch; ++ic)
                                    rowops::tap33(acc.data() + static_cast<std::size_t>(ic) * nx,
                                                  r0, r1, r2, &wrev[widx(oc, ic, 0, 0, kz)], nx);
                                continue;
                            }
                            for (int ky = 0; ky < 3; ++ky) {
                                const int oy = iy - ky + 1;
                                if (oy < 0 || oy >= ny) continue;
                                const T* grow = gplane + static_cast<std::size_t>(oy) * nx;
                                for (int ic = 0; ic < in_ch; ++ic) {
                                    const T* w9 = &w[widx(oc, ic, 0, 0, kz)];
                                    rowops::tap3(acc.data() + static_cast<std::size_t>(ic) * nx,
                                                 grow, w9[ky * 3 + 2], w9[ky * 3 + 1], w9[ky * 3],
                                                 nx);
                                }
                            }
                        }
                    }
                    for (int ic = 0; ic < in_ch; ++ic)
                        std::copy(acc.begin() + static_cast<std::size_t>(ic) * nx,
                                  acc.begin() + static_cast<std::size_t>(ic + 1) * nx,
                                  gx.slice(in_, ic) + (static_cast<std::size_t>(iz) * ny + iy) * nx);
                }
            });
            return gx;
        }
        parallel_for(0, static_cast<std::int64_t>(x.n) * in_ch, [&](std::int64_t idx) {
            const int in_ = static_cast<int>(idx / in_ch);
            const int ic = static_cast<int>(idx % in_ch);
            T* gxsl = gx.slice(in_, ic);
            std::vector<T> acc(static_cast<std::size_t>(nx));
            for (int iz = 0; iz < nz; ++iz)
                for (int iy = 0; iy < ny; ++iy) {
                    std::fill(acc.begin(), acc.end(), T(0));
                    for (int oc = 0; oc < out_ch; ++oc) {
                        const T* gsl = g.slice(in_, oc);
                        for (int kz = 0; kz < ksize; ++kz) {
                            const int oz = iz - kz + pad;
                            if (oz < 0 || oz >= oz_n) continue;
                            const T* gplane = gsl + static_cast<std::size_t>(oz) * oy_n * ox_n;
                            for (int ky = 0; ky < ksize; ++ky) {
                                const int oy = iy - ky + pad;
                                if (oy < 0 || oy >= oy_n) continue;
                                const T* grow = gplane + static_cast<std::size_t>(oy) * ox_n;
                                for (int kx = 0; kx < ksize; ++kx) {
                                    const T wv = w[widx(oc, ic, kx, ky, kz)];
                                    const int sh = pad - kx;  // ox = ix + sh
                                    const int lo = std::max(0, -sh);
                                    const int hi = std::min(nx, ox_n - sh);
                                    if (hi > lo)
                                        rowops::axpy(acc.data() + lo, grow + sh + lo, wv, hi - lo);
                                }
                            }
                        }
                    }
                    std::copy(acc.begin(), acc.end(),
                              gxsl + (static_cast<std::size_t>(iz) * ny + iy) * nx);
                }
        });
        return gx;
    }

    void drop_cache() { x_ = Tensor<T>(); }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        out.push_back({prefix + ".weight", &w, &gw, {out_ch, in_ch, ksize, ksize, ksize}, true});
        out.push_back({prefix + ".bias", &b, &gb, {out_ch}, true});
    }

private:
    Tensor<T> x_;
};

// 2x2x2 max pooling, stride 2. Ties resolve to the lowest flat index.
template <typename T>
struct MaxPool3d {
    Tensor<T> forward(const Tensor<T>& x, bool cache) {
        for (int a = 0; a < 3; ++a)
            if (x.sp[a] % 2 != 0) throw std::invalid_argument("maxpool: spatial dims must be even");
        const Index3 os{x.sp[0] / 2, x.sp[1] / 2, x.sp[2] / 2};
        Tensor<T> y(x.n, x.c, os);
        if (cache) {
            argmax_.assign(y.size(), 0);
            in_sp_ = x.sp;
        }
        const int nx = x.sp[0], ny = x.sp[1];
        parallel_for(0, static_cast<std::int64_t>(x.n) * x.c, [&](std::int64_t idx) {
            const int in_ = static_cast<int>(idx / x.c);
            const int ic = static_cast<int>(idx % x.c);
            const T* xs = x.slice(in_, ic);
            T* ys = y.slice(in_, ic);
            std::uint32_t* am = cache ? argmax_.data() + y.block(in_, ic) : nullptr;
            std::size_t o = 0;
            for (int oz = 0; oz < os[2]; ++oz)
                for (int oy = 0; oy < os[1]; ++oy)
                    for (int ox = 0; ox < os[0]; ++ox, ++o) {
                        T best = -std::numeric_limits<T>::infinity();
                        std::uint32_t besti = 0;
                        for (int dz = 0; dz < 2; ++dz)
                            for (int dy = 0; dy < 2; ++dy)
                                for (int dx = 0; dx < 2; ++dx) {
                                    const std::size_t f =
                                        static_cast<std::size_t>(2 * ox + dx) +
                                        static_cast<std::size_t>(nx) *
                                            (static_cast<std::size_t>(2 * oy + dy) +
                                             static_cast<std::size_t>(ny) * (2 * oz + dz));
                                    if (xs[f] > best) {
                                        best = xs[f];
                                        besti = static_cast<std::uint32_t>(f);
                                    }
                                }
                        ys[o] = best;
                        if (am) am[o] = besti;
                    }
        });
        return y;
    }

    Tensor<T> backward(const Tensor<T>& g) {
        if (argmax_.empty()) throw std::logic_error("maxpool: backward without cached forward");
        Tensor<T> gx(g.n, g.c, in_sp_, T(0));
        parallel_for(0, static_cast<std::int64_t>(g.n) * g.c, [&](std::int64_t idx) {
            const int in_ = static_cast<int>(idx / g.c);
            const int ic = static_cast<int>(idx % g.c);
            const T* gs = g.slice(in_, ic);
            T* gxs = gx.slice(in_, ic);
            const std::uint32_t* am = argmax_.data() + g.block(in_, ic);
            const std::size_t count = g.spatial_size();
            for (std::size_t o = 0; o < count; ++o) gxs[am[o]] += gs[o];
        });
        return gx;
    }

private:
    std::vector<std::uint32_t> argmax_;
    Index3 in_sp_{0, 0, 0};
};

// Transpose convolution with kernel = stride = 2: every output voxel receives
// exactly one kernel tap, so each spatial dimension doubles. Kernel layout
// [ic][oc][kz][ky][kx].
template <typename T>
struct ConvTranspose3d {
    int in_ch = 1, out_ch = 1;
    static constexpr int k = 2;
    std::vector<T> w, b, gw, gb;

    ConvTranspose3d() = default;
    ConvTranspose3d(int ic, int oc)
        : in_ch(ic), out_ch(oc), w(static_cast<std::size_t>(ic) * oc * k * k * k),
          b(static_cast<std::size_t>(oc)), gw(w.size()), gb(b.size()) {}

    void init_he(Rng& rng) {
        const double sd = std::sqrt(2.0 / in_ch);  // one tap per input channel per output
        for (auto& v : w) v = static_cast<T>(rng.normal(0.0, sd));
        for (auto& v : b) v = T(0);
    }

    std::size_t widx(int ic, int oc, int dx, int dy, int dz) const {
        return ((static_cast<std::size_t>(ic) * out_ch + oc) * k + dz) *
                   static_cast<std::size_t>(k) * k +
               static_cast<std::size_t>(dy) * k + dx;
    }

    Tensor<T> forward(const Tensor<T>& x, bool cache) {
        if (x.c != in_ch) throw std::invalid_argument("tconv: channel mismatch");
        const Index3 os{x.sp[0] * 2, x.sp[1] * 2, x.sp[2] * 2};
        Tensor<T> y(x.n, out_ch, os);
        parallel_for(0, static_cast<std::int64_t>(x.n) * out_ch, [&](std::int64_t idx) {
            const int in_ = static_cast<int>(idx / out_ch);
            const int oc = static_cast<int>(idx % out_ch);
            T* ys = y.slice(in_, oc);
            std::size_t o = 0;
            for (int oz = 0; oz < os[2]; ++oz) {
                const int iz = oz / 2, dz = oz % 2;
                for (int oy = 0; oy < os[1]; ++oy) {
                    const int iy = oy / 2, dy = oy % 2;
                    for (int ox = 0; ox < os[0]; ++ox, ++o) {
                        const int ix = ox / 2, dx = ox % 2;
                        T acc = b[static_cast<std::size_t>(oc)];
                        for (int ic = 0; ic < in_ch; ++ic)
                            acc += w[widx(ic, oc, dx, dy, dz)] * x.at(in_, ic, ix, iy, iz);
                        ys[o] = acc;
                    }
                }
            }
        });
        if (cache) x_ = x;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& g) {
        if (x_.size() == 0) throw std::logic_error("tconv: backward without cached forward");
        const Tensor<T>& x = x_;

        parallel_for(0, static_cast<std::int64_t>(in_ch) * out_ch, [&](std::int64_t idx) {
            const int ic = static_cast<int>(idx / out_ch);
            const int oc = static_cast<int>(idx % out_ch);
            double wacc[k * k * k] = {};
            for (int in_ = 0; in_ < x.n; ++in_)
                for (int iz = 0; iz < x.sp[2]; ++iz)
                    for (int iy = 0; iy < x.sp[1]; ++iy)
                        for (int ix = 0; ix < x.sp[0]; ++ix) {
                            const T xv = x.at(in_, ic, ix, iy, iz);
                            for (int dz = 0; dz < 2; ++dz)
                                for (int dy = 0; dy < 2; ++dy)
                                    for (int dx = 0; dx < 2; ++dx)
                                        wacc[(dz * 2 + dy) * 2 + dx] +=
                                            static_cast<double>(xv) *
                                            g.at(in_, oc, 2 * ix + dx, 2 * iy + dy, 2 * iz + dz);
                        }
            for (int dz = 0; dz < 2; ++dz)
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx)
                        gw[widx(ic, oc, dx, dy, dz)] =
                            static_cast<T>(wacc[(dz * 2 + dy) * 2 + dx]);
        });
        parallel_for(0, out_ch, [&](std::int64_t oc) {
            double acc = 0.0;
            const std::size_t sz = g.spatial_size();
            for (int in_ = 0; in_ < g.n; ++in_) {
                const T* gs = g.slice(in_, static_cast<int>(oc));
                for (std::size_t i = 0; i < sz; ++i) acc += gs[i];
            }
            gb[static_cast<std::size_t>(oc)] = static_cast<T>(acc);
        });

        Tensor<T> gx(x.n, in_ch, x.sp);
        parallel_for(0, static_cast<std::int64_t>(x.n) * in_ch, [&](std::int64_t idx) {
            const int in_ = static_cast<int>(idx / in_ch);
            const int ic = static_cast<int>(idx % in_ch);
            for (int iz = 0; iz < x.sp[2]; ++iz)
                for (int iy = 0; iy < x.sp[1]; ++iy)
                    for (int ix = 0; ix < x.sp[0]; ++ix) {
                        T acc = T(0);
                        for (int oc = 0; oc < out_ch; ++oc)
                            for (int dz = 0; dz < 2; ++dz)
                                for (int dy = 0; dy < 2; ++dy)
                                    for (int dx = 0; dx < 2; ++dx)
                                        acc += w[widx(ic, oc, dx, dy, dz)] *
                                               g.at(in_, oc, 2 * ix + dx, 2 * iy + dy, 2 * iz + dz);
                        gx.at(in_, ic, ix, iy, iz) = acc;
                    }
        });
        return gx;
    }

    void drop_cache() { x_ = Tensor<T>(); }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        out.push_back({prefix + ".weight", &w, &gw, {in_ch, out_ch, k, k, k}, true});
        out.push_back({prefix + ".bias", &b, &gb, {out_ch}, true});
    }

private:
    Tensor<T> x_;
};

// Per-channel batch normalization over batch and all spatial dims.
template <typename T>
struct BatchNorm3d {
    int ch = 1;
    double eps = 1e-5, momentum = 0.1;
    std::vector<T> gamma, beta, ggamma, gbeta;
    std::vector<T> running_mean, running_var, batches_tracked;  // buffers

    BatchNorm3d() = default;
    BatchNorm3d(int c, double eps_ = 1e-5, double momentum_ = 0.1)
        : ch(c), eps(eps_), momentum(momentum_), gamma(static_cast<std::size_t>(c), T(1)),
          beta(static_cast<std::size_t>(c), T(0)), ggamma(gamma.size()), gbeta(beta.size()),
          running_mean(static_cast<std::size_t>(c), T(0)),
          running_var(static_cast<std::size_t>(c), T(1)), batches_tracked(1, T(0)) {}

    Tensor<T> forward(const Tensor<T>& x, bool train) {
        if (x.c != ch) throw std::invalid_argument("batchnorm: channel mismatch");
        Tensor<T> y(x.n, x.c, x.sp);
        if (!train) {
            if (batches_tracked[0] == T(0))
                throw std::invalid_argument("batchnorm: eval mode before any running stats");
            parallel_for(0, ch, [&](std::int64_t c) {
                const T m = running_mean[static_cast<std::size_t>(c)];
                const T inv = static_cast<T>(
                    1.0 / std::sqrt(static_cast<double>(running_var[static_cast<std::size_t>(c)]) +
                                    eps));
                const T g = gamma[static_cast<std::size_t>(c)], bt = beta[static_cast<std::size_t>(c)];
                const std::size_t sz = x.spatial_size();
                for (int in_ = 0; in_ < x.n; ++in_) {
                    const T* xs = x.slice(in_, static_cast<int>(c));
                    T* ys = y.slice(in_, static_cast<int>(c));
                    for (std::size_t i = 0; i < sz; ++i) ys[i] = g * (xs[i] - m) * inv + bt;
                }
            });
            return y;
        }

        xhat_ = Tensor<T>(x.n, x.c, x.sp);
        invstd_.assign(static_cast<std::size_t>(ch), T(0));
        m_count_ = static_cast<double>(x.n) * static_cast<double>(x.spatial_size());
        parallel_for(0, ch, [&](std::int64_t c) {
            const std::size_t sz = x.spatial_size();
            double sum = 0.0;
            for (int in_ = 0; in_ < x.n; ++in_) {
                const T* xs = x.slice(in_, static_cast<int>(c));
                for (std::size_t i = 0; i < sz; ++i) sum += xs[i];
            }
            const double mean = sum / m_count_;
            double var = 0.0;
            for (int in_ = 0; in_ < x.n; ++in_) {
                const T* xs = x.slice(in_, static_cast<int>(c));
                for (std::size_t i = 0; i < sz; ++i) {
                    const double d = xs[i] - mean;
                    var += d * d;
                }
            }
            var /= m_count_;
            const double inv = 1.0 / std::sqrt(var + eps);
            invstd_[static_cast<std::size_t>(c)] = static_cast<T>(inv);
            const T g = gamma[static_cast<std::size_t>(c)], bt = beta[static_cast<std::size_t>(c)];
            for (int in_ = 0; in_ < x.n; ++in_) {
                const T* xs = x.slice(in_, static_cast<int>(c));
                T* hs = xhat_.slice(in_, static_cast<int>(c));
                T* ys = y.slice(in_, static_cast<int>(c));
                for (std::size_t i = 0; i < sz; ++i) {
                    const T h = static_cast<T>((xs[i] - mean) * inv);
                    hs[i] = h;
                    ys[i] = g * h + bt;
                }
            }
            running_mean[static_cast<std::size_t>(c)] = static_cast<T>(
                (1.0 - momentum) * running_mean[static_cast<std::size_t>(c)] + momentum * mean);
            running_var[static_cast<std::size_t>(c)] = static_cast<T>(
                (1.0 - momentum) * running_var[static_cast<std::size_t>(c)] + momentum * var);
        });
        batches_tracked[0] += T(1);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& g) {
        if (xhat_.size() == 0) throw std::logic_error("batchnorm: backward without cached forward");
        Tensor<T> gx(g.n, g.c, g.sp);
        parallel_for(0, ch, [&](std::int64_t c) {
            const std::size_t sz = g.spatial_size();
            double dbeta = 0.0, dgamma = 0.0;
            for (int in_ = 0; in_ < g.n; ++in_) {
                const T* gs = g.slice(in_, static_cast<int>(c));
                const T* hs = xhat_.slice(in_, static_cast<int>(c));
                for (std::size_t i = 0; i < sz; ++i) {
                    dbeta += gs[i];
                    dgamma += static_cast<double>(gs[i]) * hs[i];
                }
            }
            gbeta[static_cast<std::size_t>(c)] = static_cast<T>(dbeta);
            ggamma[static_cast<std::size_t>(c)] = static_cast<T>(dgamma);
            const double gam = gamma[static_cast<std::size_t>(c)];
            const double inv = invstd_[static_cast<std::size_t>(c)];
            const double scale = gam * inv / m_count_;
            for (int in_ = 0; in_ < g.n; ++in_) {
                const T* gs = g.slice(in_, static_cast<int>(c));
                const T* hs = xhat_.slice(in_, static_cast<int>(c));
                T* gxs = gx.slice(in_, static_cast<int>(c));
                for (std::size_t i = 0; i < sz; ++i)
                    gxs[i] = static_cast<T>(scale * (m_count_ * gs[i] - dbeta - hs[i] * dgamma));
            }
        });
        return gx;
    }

    void drop_cache() {
        xhat_ = Tensor<T>();
        invstd_.clear();
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        out.push_back({prefix + ".weight", &gamma, &ggamma, {ch}, true});
        out.push_back({prefix + ".bias", &beta, &gbeta, {ch}, true});
        out.push_back({prefix + ".running_mean", &running_mean, nullptr, {ch}, false});
        out.push_back({prefix + ".running_var", &running_var, nullptr, {ch}, false});
        out.push_back({prefix + ".batches_tracked", &batches_tracked, nullptr, {1}, false});
    }

private:
    Tensor<T> xhat_;
    std::vector<T> invstd_;
    double m_count_ = 0.0;
};

template <typename T>
struct Relu {
    Tensor<T> forward(const Tensor<T>& x, bool cache) {
        Tensor<T> y(x.n, x.c, x.sp);
        if (cache) mask_.assign(x.size(), 0);
        parallel_for(0, static_cast<std::int64_t>(x.n) * x.c, [&](std::int64_t idx) {
            const std::size_t sz = x.spatial_size();
            const std::size_t off = static_cast<std::size_t>(idx) * sz;
            for (std::size_t i = 0; i < sz; ++i) {
                const T v = x.data[off + i];
                const bool pos = v > T(0);
                y.data[off + i] = pos ? v : T(0);
                if (cache) mask_[off + i] = pos;
            }
        });
        return y;
    }

    Tensor<T> backward(const Tensor<T>& g) {
        if (mask_.size() != g.size()) throw std::logic_error("relu: backward without cached forward");
        Tensor<T> gx(g.n, g.c, g.sp);
        for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] = mask_[i] ? g.data[i] : T(0);
        return gx;
    }

    void drop_cache() { mask_.clear(); }

private:
    std::vector<std::uint8_t> mask_;
};

template <typename T>
struct Softplus {
    double beta = 1.0;

    Softplus() = default;
    explicit Softplus(double beta_) : beta(beta_) {
        if (!(beta > 0.0)) throw std::invalid_argument("softplus: beta must be positive");
    }

    Tensor<T> forward(const Tensor<T>& x, bool cache) {
        Tensor<T> y(x.n, x.c, x.sp);
        const T b = static_cast<T>(beta);
        parallel_for(0, static_cast<std::int64_t>(x.n) * x.c, [&](std::int64_t idx) {
            const std::size_t sz = x.spatial_size();
            const std::size_t off = static_cast<std::size_t>(idx) * sz;
            for (std::size_t i = 0; i < sz; ++i) y.data[off + i] = act::softplus(x.data[off + i], b);
        });
        if (cache) y_ = y;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& g) {
        if (y_.size() != g.size()) throw std::logic_error("softplus: backward without cached forward");
        Tensor<T> gx(g.n, g.c, g.sp);
        const T b = static_cast<T>(beta);
        for (std::size_t i = 0; i < g.size(); ++i)
            gx.data[i] = g.data[i] * act::softplus_grad_from_output(y_.data[i], b);
        return gx;
    }

    void drop_cache() { y_ = Tensor<T>(); }

private:
    Tensor<T> y_;
};

}  // namespace seedloc
