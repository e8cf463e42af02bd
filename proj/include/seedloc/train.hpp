#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "seedloc/adam.hpp"
#include "seedloc/checkpoint.hpp"
#include "seedloc/loss.hpp"
#include "seedloc/net.hpp"
#include "seedloc/preprocess.hpp"
#include "seedloc/rng.hpp"
#include "seedloc/targetmap.hpp"

namespace seedloc {

struct TrainConfig {
    double learning_rate = 0.003;
    int batch_size = 4;
    int max_rounds = 500;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
    double lr_decay_factor = 0.5;
    int lr_patience = 8;       // consecutive non-improving validations before decay
    int stop_patience = 24;    // consecutive non-improving validations before stopping
    double min_delta = 0.0;
    std::uint64_t rng_seed = 0;
    double weight_floor = 0.0;
    double validation_fraction = 0.1;
    double clamp_lo = -80.0, clamp_hi = 175.0;
    KernelSpec kernel;
    double map_scale = 1.0;
    bool save_optimizer_state = false;

    void validate() const {
        if (!(learning_rate > 0)) throw std::invalid_argument("train: learning_rate must be > 0");
        if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
        if (max_rounds < 1) throw std::invalid_argument("train: max_rounds must be >= 1");
        if (!(lr_decay_factor > 0 && lr_decay_factor < 1))
            throw std::invalid_argument("train: lr_decay_factor must be in (0,1)");
        if (lr_patience < 1 || stop_patience < 1)
            throw std::invalid_argument("train: patience values must be >= 1");
        if (!(validation_fraction > 0 && validation_fraction < 1))
            throw std::invalid_argument("train: validation_fraction must be in (0,1)");
        if (!(clamp_lo < clamp_hi)) throw std::invalid_argument("train: clamp range inverted");
        kernel.validate();
    }
};

// Decays the learning rate after `patience` consecutive non-improving
// validations and requests a stop after `stop_patience` of them.
struct PlateauScheduler {
    double factor = 0.5;
    int patience = 8;
    int stop_patience = 24;
    double min_delta = 0.0;

    double best = std::numeric_limits<double>::infinity();
    int bad_streak = 0;

    struct Decision {
        bool improved = false;
        bool decay = false;
        bool stop = false;
    };

    Decision observe(double val_loss) {
        Decision d;
        if (val_loss < best - min_delta) {
            best = val_loss;
            bad_streak = 0;
            d.improved = true;
            return d;
        }
        ++bad_streak;
        if (bad_streak % patience == 0) d.decay = true;
        if (bad_streak >= stop_patience) d.stop = true;
        return d;
    }
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<LossRow> history;
    int best_round = 0;
    double best_val = std::numeric_limits<double>::infinity();
};

namespace detail {

template <typename T>
Tensor<T> batch_from_volumes(const std::vector<const Volume*>& vols) {
    Tensor<T> t(static_cast<int>(vols.size()), 1, vols[0]->shape);
    for (std::size_t s = 0; s < vols.size(); ++s) {
        T* dst = t.slice(static_cast<int>(s), 0);
        const auto& src = vols[s]->data;
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(src[i]);
    }
    return t;
}

}  // namespace detail

// Full training loop: clamp, target-map construction, per-round shuffling,
// random axis flips, Adam updates, plateau-driven lr decay and early
// stopping. Returns the checkpoint with the best validation loss.
template <typename T = float>
TrainResult train_network(const std::vector<Volume>& volumes,
                      const std::vector<AnnotationSet>& annotations, const ArchConfig& arch,
                      const TrainConfig& cfg,
                      const std::function<void(const LossRow&)>& on_round = {}) {
    arch.validate();
    cfg.validate();
    if (volumes.size() != annotations.size())
        throw std::invalid_argument("train: volume/annotation count mismatch");
    if (volumes.size() < 2)
        throw std::invalid_argument("train: need at least 2 volumes (1 training + 1 validation)");
    const Index3 shape = volumes[0].shape;
    for (const auto& v : volumes)
        if (v.shape != shape) throw std::invalid_argument("train: volumes must share one shape");

    // preprocessing + targets
    std::vector<Volume> inputs, targets;
    inputs.reserve(volumes.size());
    targets.reserve(volumes.size());
    for (std::size_t i = 0; i < volumes.size(); ++i) {
        inputs.push_back(clamp_values(volumes[i], cfg.clamp_lo, cfg.clamp_hi));
        targets.push_back(
            build_target_map(volumes[i], annotations[i], cfg.kernel, cfg.map_scale).grid);
    }

    // deterministic split: shuffled order, first k volumes validate
    Rng split_rng(cfg.rng_seed ^ 0x76616c73706c6974ULL);
    std::vector<std::size_t> order(volumes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    split_rng.shuffle(order);
    std::size_t n_val = static_cast<std::size_t>(
        std::lround(cfg.validation_fraction * static_cast<double>(volumes.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, volumes.size() - 1);
    const std::vector<std::size_t> val_idx(order.begin(),
                                           order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val),
                                       order.end());
    std::sort(train_idx.begin(), train_idx.end());

    RegressionNet<T> net(arch, cfg.rng_seed);
    auto params = net.params();
    Adam<T> adam;
    adam.beta1 = cfg.adam_beta1;
    adam.beta2 = cfg.adam_beta2;
    adam.eps = cfg.adam_eps;
    adam.init(params);

    Rng rng(cfg.rng_seed + 1);
    PlateauScheduler sched{cfg.lr_decay_factor, cfg.lr_patience, cfg.stop_patience, cfg.min_delta};
    double lr = cfg.learning_rate;

    TrainResult result;
    std::vector<std::vector<T>> best_values;
    std::vector<std::vector<T>> best_moments;
    long best_step = 0;

    for (int round = 1; round <= cfg.max_rounds; ++round) {
        rng.shuffle(train_idx);
        double train_loss_sum = 0.0;
        int batches = 0;
        for (std::size_t b = 0; b < train_idx.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t b_end =
                std::min(train_idx.size(), b + static_cast<std::size_t>(cfg.batch_size));
            std::vector<Volume> vols_f, maps_f;
            for (std::size_t s = b; s < b_end; ++s) {
                AxesMask mask{rng.below(2) == 1, rng.below(2) == 1, rng.below(2) == 1};
                auto [v, m] = flip_augment(inputs[train_idx[s]], targets[train_idx[s]], mask);
                vols_f.push_back(std::move(v));
                maps_f.push_back(std::move(m));
            }
            std::vector<const Volume*> vp, mp;
            for (const auto& v : vols_f) vp.push_back(&v);
            for (const auto& m : maps_f) mp.push_back(&m);
            const Tensor<T> x = detail::batch_from_volumes<T>(vp);
            const Tensor<T> t = detail::batch_from_volumes<T>(mp);

            Tensor<T> pred = net.forward(x, true);
            auto [loss, grad] = weighted_mse(pred, t, cfg.weight_floor);
            if (!std::isfinite(loss))
                throw std::runtime_error("train: loss diverged at round " + std::to_string(round));
            net.backward(grad);
            adam.step(params, lr);
            train_loss_sum += loss;
            ++batches;
        }

        double val_loss_sum = 0.0;
        for (std::size_t vi : val_idx) {
            const Tensor<T> x = detail::batch_from_volumes<T>({&inputs[vi]});
            const Tensor<T> t = detail::batch_from_volumes<T>({&targets[vi]});
            const Tensor<T> pred = net.forward(x, false);
            double loss = 0.0;
            for (std::size_t i = 0; i < pred.size(); ++i) {
                const double tv = t.data[i];
                const double d = tv - static_cast<double>(pred.data[i]);
                loss += (tv + cfg.weight_floor) * d * d;
            }
            val_loss_sum += loss / static_cast<double>(pred.size());
        }
        const double val_loss = val_loss_sum / static_cast<double>(val_idx.size());

        LossRow row{round, train_loss_sum / std::max(1, batches), val_loss, lr};
        result.history.push_back(row);
        if (on_round) on_round(row);

        const auto decision = sched.observe(val_loss);
        if (decision.improved) {
            result.best_round = round;
            result.best_val = val_loss;
            best_values.clear();
            for (const auto& p : params) best_values.push_back(*p.value);
            if (cfg.save_optimizer_state) {
                best_moments.clear();
                for (const auto& s : adam.slots) {
                    best_moments.push_back(s.m);
                    best_moments.push_back(s.v);
                }
                best_step = adam.step_count;
            }
        }
        if (decision.decay) lr *= cfg.lr_decay_factor;
        if (decision.stop) break;
    }

    // package the best snapshot
    Checkpoint& ck = result.checkpoint;
    ck.arch = arch;
    for (std::size_t i = 0; i < params.size(); ++i) {
        TensorBlob blob;
        blob.name = params[i].name;
        blob.shape = params[i].shape;
        const auto& src = best_values.empty() ? *params[i].value : best_values[i];
        blob.data.reserve(src.size());
        for (const T& v : src) blob.data.push_back(static_cast<float>(v));
        ck.tensors.push_back(std::move(blob));
    }
    if (cfg.save_optimizer_state && !best_moments.empty()) {
        OptimizerBlob opt;
        opt.step = best_step;
        std::size_t mi = 0;
        for (const auto& p : params) {
            if (!p.trainable) continue;
            for (const char* suffix : {".m", ".v"}) {
                TensorBlob blob;
                blob.name = p.name + suffix;
                blob.shape = p.shape;
                const auto& src = best_moments[mi++];
                blob.data.reserve(src.size());
                for (const T& v : src) blob.data.push_back(static_cast<float>(v));
                opt.moments.push_back(std::move(blob));
            }
        }
        ck.optimizer_state = std::move(opt);
    }
    ck.meta.rng_seed = cfg.rng_seed;
    ck.meta.map_scale = cfg.map_scale;
    ck.meta.kernel = cfg.kernel;
    ck.meta.clamp_lo = cfg.clamp_lo;
    ck.meta.clamp_hi = cfg.clamp_hi;
    ck.meta.input_shape = shape;
    ck.meta.loss_history = result.history;
    return result;
}

inline void write_loss_csv(const std::vector<LossRow>& history, const fs::path& path) {
    std::string csv = "round,train_loss,val_loss,lr\n";
    char line[160];
    for (const auto& r : history) {
        std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g\n", r.round, r.train_loss, r.val_loss,
                      r.lr);
        csv += line;
    }
    write_text_file(path, csv);
}

}  // namespace seedloc
