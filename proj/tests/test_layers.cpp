#include <doctest.h>

#include "seedloc/layers.hpp"
#include "seedloc/rng.hpp"

using namespace seedloc;

namespace {

Tensor<double> random_tensor(int n, int c, Index3 sp, std::uint64_t seed, double sd = 1.0) {
    Tensor<double> t(n, c, sp);
    Rng rng(seed);
    for (auto& v : t.data) v = rng.normal(0.0, sd);
    return t;
}

double probe(const Tensor<double>& y, const Tensor<double>& r) {
    double j = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) j += y.data[i] * r.data[i];
    return j;
}

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4});
}

}  // namespace

TEST_CASE("conv with a 1x1x1 identity kernel reproduces the input") {
    Conv3d<double> conv(1, 1, 1, 1, 0);
    conv.w = {1.0};
    conv.b = {0.0};
    const Tensor<double> x = random_tensor(2, 1, {4, 5, 3}, 1);
    const Tensor<double> y = conv.forward(x, false);
    CHECK(y.sp == x.sp);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data[i] == x.data[i]);
}

TEST_CASE("all-ones 3x3x3 kernel sums the neighborhood") {
    Conv3d<double> conv(1, 1, 3, 1, 1);
    std::fill(conv.w.begin(), conv.w.end(), 1.0);
    conv.b = {0.0};
    Tensor<double> x(1, 1, {5, 5, 5});
    std::fill(x.data.begin(), x.data.end(), 2.5);
    const Tensor<double> y = conv.forward(x, false);
    CHECK(y.at(0, 0, 2, 2, 2) == doctest::Approx(27 * 2.5).epsilon(1e-12));
    CHECK(y.at(0, 0, 0, 0, 0) == doctest::Approx(8 * 2.5).epsilon(1e-12));  // corner
}

TEST_CASE("conv gradients match central finite differences") {
    const double h = 1e-5;
    for (int pad : {1, 0}) {
        Conv3d<double> conv(1, 2, 3, 1, pad);
        Rng rng(7);
        conv.init_he(rng);
        Tensor<double> x = random_tensor(1, 1, {6, 6, 6}, 8);
        const Tensor<double> y0 = conv.forward(x, true);
        const Tensor<double> r = random_tensor(y0.n, y0.c, y0.sp, 9);
        const Tensor<double> gx = conv.backward(r);

        double max_rel = 0.0;
        auto fd_check = [&](std::vector<double>& vec, const std::vector<double>& grad) {
            for (std::size_t i = 0; i < vec.size(); ++i) {
                const double old = vec[i];
                vec[i] = old + h;
                const double jp = probe(conv.forward(x, false), r);
                vec[i] = old - h;
                const double jm = probe(conv.forward(x, false), r);
                vec[i] = old;
                max_rel = std::max(max_rel, rel_err(grad[i], (jp - jm) / (2 * h)));
            }
        };
        fd_check(conv.w, conv.gw);
        fd_check(conv.b, conv.gb);
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            const double old = x.data[i];
            x.data[i] = old + h;
            const double jp = probe(conv.forward(x, false), r);
            x.data[i] = old - h;
            const double jm = probe(conv.forward(x, false), r);
            x.data[i] = old;
            max_rel = std::max(max_rel, rel_err(gx.data[i], (jp - jm) / (2 * h)));
        }
        CHECK(max_rel < 1e-6);
    }
}

TEST_CASE("maxpool halves dimensions and routes gradients to the argmax") {
    SUBCASE("constant volume pools to constant, ties at the lowest flat index") {
        Tensor<double> x(1, 1, {4, 4, 4});
        std::fill(x.data.begin(), x.data.end(), 3.0);
        MaxPool3d<double> pool;
        const Tensor<double> y = pool.forward(x, true);
        CHECK(y.sp == Index3{2, 2, 2});
        for (double v : y.data) CHECK(v == 3.0);
        Tensor<double> g(1, 1, {2, 2, 2});
        std::fill(g.data.begin(), g.data.end(), 1.0);
        const Tensor<double> gx = pool.backward(g);
        // tie-break sends each gradient to the first voxel of its block
        CHECK(gx.at(0, 0, 0, 0, 0) == 1.0);
        CHECK(gx.at(0, 0, 1, 0, 0) == 0.0);
        CHECK(gx.at(0, 0, 2, 0, 0) == 1.0);
    }
    SUBCASE("documented block maximum") {
        Tensor<double> x(1, 1, {2, 2, 2});
        x.data = {1, 2, 3, 4, 5, 6, 7, 8};
        MaxPool3d<double> pool;
        const Tensor<double> y = pool.forward(x, false);
        CHECK(y.data[0] == 8.0);
    }
    SUBCASE("backward of ones puts exactly one unit per block") {
        Tensor<double> x = random_tensor(1, 2, {4, 4, 4}, 17);
        MaxPool3d<double> pool;
        (void)pool.forward(x, true);
        Tensor<double> g(1, 2, {2, 2, 2});
        std::fill(g.data.begin(), g.data.end(), 1.0);
        const Tensor<double> gx = pool.backward(g);
        double sum = 0.0;
        int nonzero = 0;
        for (double v : gx.data) {
            sum += v;
            if (v != 0.0) ++nonzero;
        }
        CHECK(sum == doctest::Approx(16.0));
        CHECK(nonzero == 16);
    }
    SUBCASE("odd dims rejected") {
        Tensor<double> x(1, 1, {3, 4, 4});
        MaxPool3d<double> pool;
        CHECK_THROWS_AS(pool.forward(x, false), std::invalid_argument);
    }
}

TEST_CASE("transpose conv expands single voxels into 2x2x2 blocks") {
    ConvTranspose3d<double> up(1, 1);
    std::fill(up.w.begin(), up.w.end(), 0.75);
    std::fill(up.b.begin(), up.b.end(), 0.0);
    Tensor<double> x(1, 1, {1, 1, 1});
    x.data = {2.0};
    const Tensor<double> y = up.forward(x, false);
    CHECK(y.sp == Index3{2, 2, 2});
    for (double v : y.data) CHECK(v == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("transpose conv doubles each spatial dimension") {
    ConvTranspose3d<double> up(3, 2);
    Rng rng(5);
    up.init_he(rng);
    const Tensor<double> x = random_tensor(1, 3, {8, 8, 6}, 6);
    const Tensor<double> y = up.forward(x, false);
    CHECK(y.c == 2);
    CHECK(y.sp == Index3{16, 16, 12});
}

TEST_CASE("transpose conv gradients match central finite differences") {
    const double h = 1e-5;
    ConvTranspose3d<double> up(2, 2);
    Rng rng(11);
    up.init_he(rng);
    Tensor<double> x = random_tensor(1, 2, {3, 3, 3}, 12);
    const Tensor<double> y0 = up.forward(x, true);
    const Tensor<double> r = random_tensor(y0.n, y0.c, y0.sp, 13);
    const Tensor<double> gx = up.backward(r);

    double max_rel = 0.0;
    auto fd_check = [&](std::vector<double>& vec, const std::vector<double>& grad) {
        for (std::size_t i = 0; i < vec.size(); ++i) {
            const double old = vec[i];
            vec[i] = old + h;
            const double jp = probe(up.forward(x, false), r);
            vec[i] = old - h;
            const double jm = probe(up.forward(x, false), r);
            vec[i] = old;
            max_rel = std::max(max_rel, rel_err(grad[i], (jp - jm) / (2 * h)));
        }
    };
    fd_check(up.w, up.gw);
    fd_check(up.b, up.gb);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double old = x.data[i];
        x.data[i] = old + h;
        const double jp = probe(up.forward(x, false), r);
        x.data[i] = old - h;
        const double jm = probe(up.forward(x, false), r);
        x.data[i] = old;
        max_rel = std::max(max_rel, rel_err(gx.data[i], (jp - jm) / (2 * h)));
    }
    CHECK(max_rel < 1e-6);
}

TEST_CASE("batchnorm") {
    SUBCASE("constant channel normalizes to beta") {
        BatchNorm3d<double> bn(1);
        Tensor<double> x(2, 1, {3, 3, 3});
        std::fill(x.data.begin(), x.data.end(), 5.0);
        const Tensor<double> y = bn.forward(x, true);
        for (double v : y.data) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("train mode standardizes each channel") {
        BatchNorm3d<double> bn(2);
        Tensor<double> x = random_tensor(2, 2, {6, 6, 6}, 19, 2.0);
        for (auto& v : x.data) v += 3.0;
        const Tensor<double> y = bn.forward(x, true);
        for (int c = 0; c < 2; ++c) {
            double sum = 0.0, sq = 0.0;
            std::size_t m = 0;
            for (int n = 0; n < 2; ++n) {
                const double* s = y.slice(n, c);
                for (std::size_t i = 0; i < y.spatial_size(); ++i, ++m) {
                    sum += s[i];
                    sq += s[i] * s[i];
                }
            }
            const double mean = sum / static_cast<double>(m);
            const double var = sq / static_cast<double>(m) - mean * mean;
            CHECK(std::abs(mean) < 1e-10);
            CHECK(std::abs(var - 1.0) < 1e-5);
        }
    }
    SUBCASE("eval before any running stats is an error") {
        BatchNorm3d<double> bn(1);
        Tensor<double> x = random_tensor(1, 1, {2, 2, 2}, 23);
        CHECK_THROWS_AS(bn.forward(x, false), std::invalid_argument);
        (void)bn.forward(x, true);
        CHECK_NOTHROW(bn.forward(x, false));
    }
    SUBCASE("gradients match central finite differences") {
        const double h = 1e-5;
        BatchNorm3d<double> bn(2);
        Rng rng(29);
        for (auto& v : bn.gamma) v = rng.uniform(0.5, 1.5);
        for (auto& v : bn.beta) v = rng.uniform(-0.5, 0.5);
        Tensor<double> x = random_tensor(2, 2, {3, 3, 3}, 31);
        const Tensor<double> y0 = bn.forward(x, true);
        const Tensor<double> r = random_tensor(y0.n, y0.c, y0.sp, 37);
        const Tensor<double> gx = bn.backward(r);

        double max_rel = 0.0;
        auto fd_check = [&](std::vector<double>& vec, const std::vector<double>& grad) {
            for (std::size_t i = 0; i < vec.size(); ++i) {
                const double old = vec[i];
                vec[i] = old + h;
                const double jp = probe(bn.forward(x, true), r);
                vec[i] = old - h;
                const double jm = probe(bn.forward(x, true), r);
                vec[i] = old;
                max_rel = std::max(max_rel, rel_err(grad[i], (jp - jm) / (2 * h)));
            }
        };
        fd_check(bn.gamma, bn.ggamma);
        fd_check(bn.beta, bn.gbeta);
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            const double old = x.data[i];
            x.data[i] = old + h;
            const double jp = probe(bn.forward(x, true), r);
            x.data[i] = old - h;
            const double jm = probe(bn.forward(x, true), r);
            x.data[i] = old;
            max_rel = std::max(max_rel, rel_err(gx.data[i], (jp - jm) / (2 * h)));
        }
        // restore the cache for consistency
        (void)bn.forward(x, true);
        CHECK(max_rel < 1e-5);
    }
}

TEST_CASE("activations") {
    SUBCASE("softplus closed-form values") {
        CHECK(act::softplus(0.0, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
        CHECK(std::abs(act::softplus(50.0, 1.0) - 50.0) < 1e-9);
        const double tiny = act::softplus(-50.0, 1.0);
        CHECK(tiny > 0.0);
        CHECK(tiny == doctest::Approx(1.9287e-22).epsilon(1e-3));
        // beta sharpens the knee
        CHECK(act::softplus(0.0, 2.0) == doctest::Approx(std::log(2.0) / 2.0).epsilon(1e-12));
    }
    SUBCASE("softplus derivative from the output matches the sigmoid") {
        for (double x : {-3.0, -0.5, 0.0, 0.7, 4.0, 40.0}) {
            const double y = act::softplus(x, 1.0);
            const double want = 1.0 / (1.0 + std::exp(-x));
            CHECK(act::softplus_grad_from_output(y, 1.0) == doctest::Approx(want).epsilon(1e-9));
        }
    }
    SUBCASE("relu layer masks gradients") {
        Relu<double> relu;
        Tensor<double> x(1, 1, {2, 2, 2});
        x.data = {-1, 2, -3, 4, 0, 5, -6, 7};
        const Tensor<double> y = relu.forward(x, true);
        CHECK(y.data == std::vector<double>{0, 2, 0, 4, 0, 5, 0, 7});
        Tensor<double> g(1, 1, {2, 2, 2});
        std::fill(g.data.begin(), g.data.end(), 1.0);
        const Tensor<double> gx = relu.backward(g);
        CHECK(gx.data == std::vector<double>{0, 1, 0, 1, 0, 1, 0, 1});
    }
    SUBCASE("softplus layer output is positive everywhere") {
        Softplus<double> sp(1.0);
        Tensor<double> x = random_tensor(1, 1, {4, 4, 4}, 41, 10.0);
        const Tensor<double> y = sp.forward(x, false);
        for (double v : y.data) CHECK(v > 0.0);
    }
}
