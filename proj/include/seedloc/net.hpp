#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "seedloc/layers.hpp"
#include "seedloc/rng.hpp"
#include "seedloc/tensor.hpp"

namespace seedloc {

// Encoder-decoder regression network: per level two 3x3x3 conv-BN-ReLU
// blocks and a 2x2x2 max-pool on the way down, transpose-conv upsampling
// with channel-concatenated skip connections on the way up, and a softplus
// head so the output map is strictly positive. Channel width doubles per
// level starting at base_channels.
struct ArchConfig {
    int levels = 3;
    int base_channels = 16;
    int input_channels = 1;
    int output_channels = 1;
    double softplus_beta = 1.0;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;

    void validate() const {
        if (levels < 1) throw std::invalid_argument("arch: levels must be >= 1");
        if (base_channels < 1) throw std::invalid_argument("arch: base_channels must be >= 1");
        if (input_channels < 1 || output_channels < 1)
            throw std::invalid_argument("arch: channel counts must be >= 1");
        if (!(softplus_beta > 0)) throw std::invalid_argument("arch: softplus beta must be positive");
    }

    int channels_at(int level) const { return base_channels << level; }  // level 0..levels
};

template <typename T>
struct RegressionNet {
    struct Block {
        Conv3d<T> conv;
        BatchNorm3d<T> bn;
        Relu<T> act;

        Block() = default;
        Block(int ic, int oc, const ArchConfig& a)
            : conv(ic, oc, 3, 1, 1), bn(oc, a.bn_eps, a.bn_momentum) {}

        Tensor<T> forward(const Tensor<T>& x, bool train) {
            return act.forward(bn.forward(conv.forward(x, train), train), train);
        }
        Tensor<T> backward(const Tensor<T>& g) {
            return conv.backward(bn.backward(act.backward(g)));
        }
        void collect(const std::string& p, std::vector<ParamRef<T>>& out) {
            conv.collect(p + ".conv", out);
            bn.collect(p + ".bn", out);
        }
        void init(Rng& rng) { conv.init_he(rng); }
        void drop_cache() {
            conv.drop_cache();
            bn.drop_cache();
            act.drop_cache();
        }
    };

    struct EncLevel {
        Block c1, c2;
        MaxPool3d<T> pool;
    };
    struct DecLevel {
        ConvTranspose3d<T> up;
        Block c1, c2;
    };

    ArchConfig cfg;
    std::vector<EncLevel> enc;
    Block mid1, mid2;
    std::vector<DecLevel> dec;  // dec[l] corresponds to encoder level l
    Conv3d<T> head;
    Softplus<T> out_act;

    explicit RegressionNet(const ArchConfig& a, std::uint64_t init_seed = 0) : cfg(a) {
        cfg.validate();
        int in_c = cfg.input_channels;
        for (int l = 0; l < cfg.levels; ++l) {
            const int c = cfg.channels_at(l);
            EncLevel e;
            e.c1 = Block(in_c, c, cfg);
            e.c2 = Block(c, c, cfg);
            enc.push_back(std::move(e));
            in_c = c;
        }
        const int mid_c = cfg.channels_at(cfg.levels);
        mid1 = Block(in_c, mid_c, cfg);
        mid2 = Block(mid_c, mid_c, cfg);
        dec.resize(static_cast<std::size_t>(cfg.levels));
        for (int l = cfg.levels - 1; l >= 0; --l) {
            const int c = cfg.channels_at(l);
            const int c_above = l + 1 == cfg.levels ? mid_c : cfg.channels_at(l + 1);
            DecLevel d;
            d.up = ConvTranspose3d<T>(c_above, c);
            d.c1 = Block(2 * c, c, cfg);
            d.c2 = Block(c, c, cfg);
            dec[static_cast<std::size_t>(l)] = std::move(d);
        }
        head = Conv3d<T>(cfg.channels_at(0), cfg.output_channels, 3, 1, 1);
        out_act = Softplus<T>(cfg.softplus_beta);
        Rng rng(init_seed);
        for (auto& e : enc) {
            e.c1.init(rng);
            e.c2.init(rng);
        }
        mid1.init(rng);
        mid2.init(rng);
        for (auto& d : dec) {
            d.up.init_he(rng);
            d.c1.init(rng);
            d.c2.init(rng);
        }
        head.init_he(rng);
    }

    void check_input_shape(const Index3& sp) const {
        const int div = 1 << cfg.levels;
        for (int a = 0; a < 3; ++a)
            if (sp[a] % div != 0)
                throw std::invalid_argument("net: input dims must be divisible by 2^levels");
    }

    // train=true uses batch statistics and caches everything backward needs.
    Tensor<T> forward(const Tensor<T>& x, bool train) {
        check_input_shape(x.sp);
        if (x.c != cfg.input_channels) throw std::invalid_argument("net: input channel mismatch");
        skips_.clear();
        Tensor<T> cur = x;
        for (auto& e : enc) {
            cur = e.c1.forward(cur, train);
            cur = e.c2.forward(cur, train);
            skips_.push_back(std::move(cur));
            cur = e.pool.forward(skips_.back(), train);
        }
        cur = mid1.forward(cur, train);
        cur = mid2.forward(cur, train);
        for (int l = cfg.levels - 1; l >= 0; --l) {
            auto& d = dec[static_cast<std::size_t>(l)];
            cur = d.up.forward(cur, train);
            cur = concat_channels(cur, skips_[static_cast<std::size_t>(l)]);
            cur = d.c1.forward(cur, train);
            cur = d.c2.forward(cur, train);
        }
        if (!train) skips_.clear();
        return out_act.forward(head.forward(cur, train), train);
    }

    // Backward through the whole net; fills every layer's parameter
    // gradients and returns the gradient w.r.t. the input.
    Tensor<T> backward(const Tensor<T>& grad_pred) {
        std::vector<Tensor<T>> skip_grads(static_cast<std::size_t>(cfg.levels));
        Tensor<T> g = head.backward(out_act.backward(grad_pred));
        for (int l = 0; l < cfg.levels; ++l) {
            auto& d = dec[static_cast<std::size_t>(l)];
            g = d.c1.backward(d.c2.backward(g));
            const int c = cfg.channels_at(l);
            auto [g_up, g_skip] = split_channels(g, c);
            skip_grads[static_cast<std::size_t>(l)] = std::move(g_skip);
            g = d.up.backward(g_up);
        }
        g = mid1.backward(mid2.backward(g));
        for (int l = cfg.levels - 1; l >= 0; --l) {
            auto& e = enc[static_cast<std::size_t>(l)];
            g = e.pool.backward(g);
            const auto& sg = skip_grads[static_cast<std::size_t>(l)];
            for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += sg.data[i];
            g = e.c1.backward(e.c2.backward(g));
        }
        return g;
    }

    std::vector<ParamRef<T>> params() {
        std::vector<ParamRef<T>> out;
        for (std::size_t l = 0; l < enc.size(); ++l) {
            enc[l].c1.collect("enc" + std::to_string(l) + ".c1", out);
            enc[l].c2.collect("enc" + std::to_string(l) + ".c2", out);
        }
        mid1.collect("mid.c1", out);
        mid2.collect("mid.c2", out);
        for (std::size_t l = 0; l < dec.size(); ++l) {
            dec[l].up.collect("dec" + std::to_string(l) + ".up", out);
            dec[l].c1.collect("dec" + std::to_string(l) + ".c1", out);
            dec[l].c2.collect("dec" + std::to_string(l) + ".c2", out);
        }
        head.collect("head", out);
        return out;
    }

    void drop_caches() {
        for (auto& e : enc) {
            e.c1.drop_cache();
            e.c2.drop_cache();
        }
        mid1.drop_cache();
        mid2.drop_cache();
        for (auto& d : dec) {
            d.up.drop_cache();
            d.c1.drop_cache();
            d.c2.drop_cache();
        }
        head.drop_cache();
        out_act.drop_cache();
        skips_.clear();
    }

private:
    std::vector<Tensor<T>> skips_;
};

}  // namespace seedloc
