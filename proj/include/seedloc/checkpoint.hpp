#pragma once

#include <optional>
#include <string>
#include <vector>

#include "seedloc/adam.hpp"
#include "seedloc/io.hpp"
#include "seedloc/net.hpp"
#include "seedloc/targetmap.hpp"

namespace seedloc {

constexpr int kCheckpointFormatVersion = 1;

struct TensorBlob {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;

    std::size_t declared_size() const {
        std::size_t n = 1;
        for (int s : shape) n *= static_cast<std::size_t>(s);
        return n;
    }
};

struct OptimizerBlob {
    long step = 0;
    std::vector<TensorBlob> moments;  // <param>.m and <param>.v per trainable tensor
};

struct LossRow {
    int round = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
};

struct TrainingMeta {
    std::uint64_t rng_seed = 0;
    double map_scale = 1.0;
    KernelSpec kernel;
    double clamp_lo = -80.0, clamp_hi = 175.0;
    Index3 input_shape{0, 0, 0};  // informational; the net is fully convolutional
    std::vector<LossRow> loss_history;
};

struct Checkpoint {
    int format_version = kCheckpointFormatVersion;
    ArchConfig arch;
    std::vector<TensorBlob> tensors;
    std::optional<OptimizerBlob> optimizer_state;
    TrainingMeta meta;
};

namespace detail {

inline json blob_manifest(const std::vector<TensorBlob>& blobs, std::size_t& offset) {
    json arr = json::array();
    for (const auto& t : blobs) {
        json e;
        e["name"] = t.name;
        e["shape"] = t.shape;
        e["offset"] = offset;
        offset += t.data.size();
        arr.push_back(e);
    }
    return arr;
}

inline std::vector<TensorBlob> blobs_from_manifest(const json& arr, const std::vector<float>& bin,
                                                   const std::string& what) {
    std::vector<TensorBlob> blobs;
    for (const auto& e : arr) {
        TensorBlob t;
        t.name = e.at("name").get<std::string>();
        t.shape = e.at("shape").get<std::vector<int>>();
        const std::size_t offset = e.at("offset").get<std::size_t>();
        const std::size_t n = t.declared_size();
        if (offset + n > bin.size())
            throw std::runtime_error("checkpoint: " + what + " tensor '" + t.name +
                                     "' declares shape beyond blob end");
        t.data.assign(bin.begin() + static_cast<std::ptrdiff_t>(offset),
                      bin.begin() + static_cast<std::ptrdiff_t>(offset + n));
        for (std::size_t i = 0; i < t.data.size(); ++i)
            if (!std::isfinite(t.data[i]))
                throw std::runtime_error("checkpoint: non-finite value in tensor '" + t.name + "'");
        blobs.push_back(std::move(t));
    }
    return blobs;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& c, const fs::path& stem_in) {
    const fs::path stem =
        detail::strip_suffix(detail::strip_suffix(stem_in, ".ckpt.json"), ".ckpt");
    std::vector<float> bin;
    std::size_t total = 0;
    for (const auto& t : c.tensors) total += t.data.size();
    if (c.optimizer_state)
        for (const auto& t : c.optimizer_state->moments) total += t.data.size();
    bin.reserve(total);

    json j;
    j["format_version"] = c.format_version;
    json arch;
    arch["levels"] = c.arch.levels;
    arch["base_channels"] = c.arch.base_channels;
    arch["input_channels"] = c.arch.input_channels;
    arch["output_channels"] = c.arch.output_channels;
    arch["softplus_beta"] = c.arch.softplus_beta;
    arch["bn_eps"] = c.arch.bn_eps;
    arch["bn_momentum"] = c.arch.bn_momentum;
    j["arch"] = arch;

    std::size_t offset = 0;
    j["tensors"] = detail::blob_manifest(c.tensors, offset);
    for (const auto& t : c.tensors) {
        if (t.data.size() != t.declared_size())
            throw std::invalid_argument("checkpoint: tensor '" + t.name +
                                        "' data does not match declared shape");
        bin.insert(bin.end(), t.data.begin(), t.data.end());
    }
    if (c.optimizer_state) {
        json opt;
        opt["step"] = c.optimizer_state->step;
        opt["tensors"] = detail::blob_manifest(c.optimizer_state->moments, offset);
        for (const auto& t : c.optimizer_state->moments)
            bin.insert(bin.end(), t.data.begin(), t.data.end());
        j["optimizer_state"] = opt;
    } else {
        j["optimizer_state"] = nullptr;
    }

    json meta;
    meta["rng_seed"] = c.meta.rng_seed;
    meta["map_scale"] = c.meta.map_scale;
    meta["kernel_sigma_mm"] = {c.meta.kernel.sigma_mm[0], c.meta.kernel.sigma_mm[1],
                               c.meta.kernel.sigma_mm[2]};
    meta["kernel_truncation_sigmas"] = c.meta.kernel.truncation_radius_sigmas;
    meta["clamp_hu"] = {c.meta.clamp_lo, c.meta.clamp_hi};
    meta["input_shape"] = {c.meta.input_shape[0], c.meta.input_shape[1], c.meta.input_shape[2]};
    json hist = json::array();
    for (const auto& r : c.meta.loss_history)
        hist.push_back({r.round, r.train_loss, r.val_loss, r.lr});
    meta["loss_history"] = hist;
    j["training_meta"] = meta;

    write_text_file(fs::path(stem.string() + ".ckpt.json"), json_bytes(j));
    detail::write_f32_le(fs::path(stem.string() + ".ckpt.bin"), bin);
}

inline Checkpoint load_checkpoint(const fs::path& stem_in) {
    const fs::path stem =
        detail::strip_suffix(detail::strip_suffix(stem_in, ".ckpt.json"), ".ckpt");
    const json j = parse_json_file(fs::path(stem.string() + ".ckpt.json"));

    Checkpoint c;
    c.format_version = j.at("format_version").get<int>();
    if (c.format_version != kCheckpointFormatVersion)
        throw std::runtime_error("checkpoint: unsupported format_version " +
                                 std::to_string(c.format_version));

    const auto& arch = j.at("arch");
    c.arch.levels = arch.at("levels").get<int>();
    c.arch.base_channels = arch.at("base_channels").get<int>();
    c.arch.input_channels = arch.at("input_channels").get<int>();
    c.arch.output_channels = arch.at("output_channels").get<int>();
    c.arch.softplus_beta = arch.at("softplus_beta").get<double>();
    c.arch.bn_eps = arch.at("bn_eps").get<double>();
    c.arch.bn_momentum = arch.at("bn_momentum").get<double>();
    c.arch.validate();

    std::size_t declared = 0;
    for (const auto& e : j.at("tensors")) {
        std::size_t n = 1;
        for (int s : e.at("shape").get<std::vector<int>>()) n *= static_cast<std::size_t>(s);
        declared += n;
    }
    if (!j.at("optimizer_state").is_null())
        for (const auto& e : j.at("optimizer_state").at("tensors")) {
            std::size_t n = 1;
            for (int s : e.at("shape").get<std::vector<int>>()) n *= static_cast<std::size_t>(s);
            declared += n;
        }

    std::ifstream probe(fs::path(stem.string() + ".ckpt.bin"), std::ios::binary | std::ios::ate);
    if (!probe) throw std::runtime_error("checkpoint: missing " + stem.string() + ".ckpt.bin");
    const std::size_t nbytes = static_cast<std::size_t>(probe.tellg());
    probe.close();
    if (nbytes != declared * 4)
        throw std::runtime_error("checkpoint: manifest declares " + std::to_string(declared) +
                                 " floats but blob holds " + std::to_string(nbytes / 4));
    const std::vector<float> bin =
        detail::read_f32_le(fs::path(stem.string() + ".ckpt.bin"), declared);

    c.tensors = detail::blobs_from_manifest(j.at("tensors"), bin, "parameter");
    if (!j.at("optimizer_state").is_null()) {
        OptimizerBlob opt;
        opt.step = j.at("optimizer_state").at("step").get<long>();
        opt.moments =
            detail::blobs_from_manifest(j.at("optimizer_state").at("tensors"), bin, "optimizer");
        c.optimizer_state = std::move(opt);
    }

    const auto& meta = j.at("training_meta");
    c.meta.rng_seed = meta.at("rng_seed").get<std::uint64_t>();
    c.meta.map_scale = meta.at("map_scale").get<double>();
    c.meta.kernel.sigma_mm = detail::vec3_from(meta, "kernel_sigma_mm");
    c.meta.kernel.truncation_radius_sigmas = meta.at("kernel_truncation_sigmas").get<double>();
    c.meta.clamp_lo = meta.at("clamp_hu")[0].get<double>();
    c.meta.clamp_hi = meta.at("clamp_hu")[1].get<double>();
    c.meta.input_shape = detail::index3_from(meta, "input_shape");
    for (const auto& r : meta.at("loss_history")) {
        LossRow row;
        row.round = r[0].get<int>();
        row.train_loss = r[1].get<double>();
        row.val_loss = r[2].get<double>();
        row.lr = r[3].get<double>();
        c.meta.loss_history.push_back(row);
    }
    return c;
}

// Snapshot of the network's current parameters and buffers.
template <typename T>
std::vector<TensorBlob> export_tensors(RegressionNet<T>& net) {
    std::vector<TensorBlob> blobs;
    for (const auto& p : net.params()) {
        TensorBlob t;
        t.name = p.name;
        t.shape = p.shape;
        t.data.reserve(p.value->size());
        for (const T& v : *p.value) t.data.push_back(static_cast<float>(v));
        blobs.push_back(std::move(t));
    }
    return blobs;
}

template <typename T>
void import_tensors(RegressionNet<T>& net, const std::vector<TensorBlob>& blobs) {
    auto params = net.params();
    if (params.size() != blobs.size())
        throw std::runtime_error("checkpoint: tensor count does not match architecture");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].name != blobs[i].name)
            throw std::runtime_error("checkpoint: unexpected tensor '" + blobs[i].name +
                                     "', wanted '" + params[i].name + "'");
        if (params[i].value->size() != blobs[i].data.size())
            throw std::runtime_error("checkpoint: size mismatch for tensor '" + blobs[i].name + "'");
        for (std::size_t k = 0; k < blobs[i].data.size(); ++k)
            (*params[i].value)[k] = static_cast<T>(blobs[i].data[k]);
    }
}

template <typename T>
RegressionNet<T> net_from_checkpoint(const Checkpoint& c) {
    RegressionNet<T> net(c.arch, 0);
    import_tensors(net, c.tensors);
    return net;
}

}  // namespace seedloc
