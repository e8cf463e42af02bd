#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seedloc/types.hpp"

namespace seedloc {

namespace fs = std::filesystem;
using json = nlohmann::json;

// On-disk layout:
//   <stem>.vol.json + <stem>.vol.raw   volumes (f32-le blob, x-fastest)
//   <stem>.pts.json                    annotation points
//   <stem>.det.json                    detections
//   dataset.json                       manifest written by the phantom generator
// All JSON is emitted with sorted keys and 2-space indent, so identical
// inputs serialize to identical bytes.

inline std::string json_bytes(const json& j) { return j.dump(2) + "\n"; }

inline void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path.string());
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

inline std::string read_text_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path.string());
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return s;
}

inline json parse_json_file(const fs::path& path) {
    try {
        return json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed JSON in " + path.string() + ": " + e.what());
    }
}

namespace detail {

inline fs::path strip_suffix(fs::path p, const std::string& suffix) {
    std::string s = p.string();
    if (s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0)
        return fs::path(s.substr(0, s.size() - suffix.size()));
    return p;
}

inline void write_f32_le(const fs::path& path, const std::vector<float>& values) {
    std::vector<unsigned char> bytes(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint32_t u = std::bit_cast<std::uint32_t>(values[i]);
        if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
        std::memcpy(bytes.data() + 4 * i, &u, 4);
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

inline std::vector<float> read_f32_le(const fs::path& path, std::size_t expected_count) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw std::runtime_error("cannot open: " + path.string());
    const auto nbytes = static_cast<std::size_t>(f.tellg());
    if (nbytes != expected_count * 4)
        throw std::runtime_error("size mismatch in " + path.string() + ": expected " +
                                 std::to_string(expected_count * 4) + " bytes, found " +
                                 std::to_string(nbytes));
    f.seekg(0);
    std::vector<unsigned char> bytes(nbytes);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(nbytes));
    if (!f) throw std::runtime_error("read failed: " + path.string());
    std::vector<float> values(expected_count);
    for (std::size_t i = 0; i < expected_count; ++i) {
        std::uint32_t u;
        std::memcpy(&u, bytes.data() + 4 * i, 4);
        if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
        values[i] = std::bit_cast<float>(u);
    }
    return values;
}

inline Vec3 vec3_from(const json& j, const std::string& key) {
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 3)
        throw std::runtime_error("field '" + key + "' must be a 3-element array");
    return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

inline Index3 index3_from(const json& j, const std::string& key) {
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 3)
        throw std::runtime_error("field '" + key + "' must be a 3-element array");
    return {a[0].get<int>(), a[1].get<int>(), a[2].get<int>()};
}

inline json volume_header(const Volume& v) {
    json j;
    j["dtype"] = "f32-le";
    j["order"] = "x-fastest";
    j["shape"] = {v.shape[0], v.shape[1], v.shape[2]};
    j["spacing_mm"] = {v.spacing_mm[0], v.spacing_mm[1], v.spacing_mm[2]};
    j["origin_mm"] = {v.origin_mm[0], v.origin_mm[1], v.origin_mm[2]};
    return j;
}

inline Volume volume_from_header(const json& j, const fs::path& raw_path) {
    Volume v;
    if (j.at("dtype").get<std::string>() != "f32-le")
        throw std::runtime_error("unsupported dtype in " + raw_path.string());
    if (j.at("order").get<std::string>() != "x-fastest")
        throw std::runtime_error("unsupported order in " + raw_path.string());
    v.shape = index3_from(j, "shape");
    v.spacing_mm = vec3_from(j, "spacing_mm");
    v.origin_mm = vec3_from(j, "origin_mm");
    for (int a = 0; a < 3; ++a) {
        if (v.shape[a] <= 0) throw std::runtime_error("invalid shape in volume header");
        if (!(v.spacing_mm[a] > 0.0))
            throw std::invalid_argument("invalid spacing_mm in volume header");
    }
    v.data = read_f32_le(raw_path, v.voxel_count());
    for (std::size_t i = 0; i < v.data.size(); ++i)
        if (!std::isfinite(v.data[i]))
            throw std::runtime_error("non-finite value at voxel " + std::to_string(i) + " in " +
                                     raw_path.string());
    return v;
}

}  // namespace detail

// `stem` may be given with or without the ".vol.json" suffix.
inline void write_volume(const Volume& v, const fs::path& stem_in) {
    v.validate();
    const fs::path stem = detail::strip_suffix(detail::strip_suffix(stem_in, ".vol.json"), ".vol");
    write_text_file(fs::path(stem.string() + ".vol.json"), json_bytes(detail::volume_header(v)));
    detail::write_f32_le(fs::path(stem.string() + ".vol.raw"), v.data);
}

inline Volume read_volume(const fs::path& stem_in) {
    const fs::path stem = detail::strip_suffix(detail::strip_suffix(stem_in, ".vol.json"), ".vol");
    const json j = parse_json_file(fs::path(stem.string() + ".vol.json"));
    return detail::volume_from_header(j, fs::path(stem.string() + ".vol.raw"));
}

inline void write_probability_map(const ProbabilityMap& m, const fs::path& stem_in) {
    m.grid.validate();
    const fs::path stem = detail::strip_suffix(detail::strip_suffix(stem_in, ".vol.json"), ".vol");
    json j = detail::volume_header(m.grid);
    j["kind"] = "probability_map";
    j["scale"] = m.scale;
    write_text_file(fs::path(stem.string() + ".vol.json"), json_bytes(j));
    detail::write_f32_le(fs::path(stem.string() + ".vol.raw"), m.grid.data);
}

inline ProbabilityMap read_probability_map(const fs::path& stem_in) {
    const fs::path stem = detail::strip_suffix(detail::strip_suffix(stem_in, ".vol.json"), ".vol");
    const json j = parse_json_file(fs::path(stem.string() + ".vol.json"));
    if (!j.contains("kind") || j.at("kind").get<std::string>() != "probability_map")
        throw std::runtime_error(stem.string() + ".vol.json is not a probability map");
    ProbabilityMap m;
    m.grid = detail::volume_from_header(j, fs::path(stem.string() + ".vol.raw"));
    m.scale = j.at("scale").get<double>();
    if (!(m.scale > 0.0)) throw std::runtime_error("probability map scale must be positive");
    return m;
}

inline void write_annotations(const AnnotationSet& s, const fs::path& path) {
    s.validate();
    json pts = json::array();
    for (const auto& p : s.points_mm) pts.push_back({p[0], p[1], p[2]});
    json j;
    j["points_mm"] = pts;
    write_text_file(path, json_bytes(j));
}

inline AnnotationSet read_annotations(const fs::path& path) {
    const json j = parse_json_file(path);
    AnnotationSet s;
    for (const auto& a : j.at("points_mm")) {
        if (!a.is_array() || a.size() != 3)
            throw std::runtime_error("annotation entries must be 3-element arrays in " + path.string());
        Vec3 p{a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
        if (!finite(p)) throw std::runtime_error("non-finite coordinate in " + path.string());
        s.points_mm.push_back(p);
    }
    return s;
}

inline void write_detections(const DetectionSet& d, const fs::path& path) {
    json arr = json::array();
    for (const auto& det : d.detections) {
        json e;
        e["point_mm"] = {det.point_mm[0], det.point_mm[1], det.point_mm[2]};
        e["peak_value"] = det.peak_value;
        e["basin_mass"] = det.basin_mass;
        arr.push_back(e);
    }
    json j;
    j["detections"] = arr;
    write_text_file(path, json_bytes(j));
}

inline DetectionSet read_detections(const fs::path& path) {
    const json j = parse_json_file(path);
    DetectionSet d;
    for (const auto& e : j.at("detections")) {
        Detection det;
        const auto& p = e.at("point_mm");
        det.point_mm = {p[0].get<double>(), p[1].get<double>(), p[2].get<double>()};
        det.peak_value = e.at("peak_value").get<double>();
        det.basin_mass = e.at("basin_mass").get<double>();
        if (!finite(det.point_mm) || !std::isfinite(det.peak_value) || !std::isfinite(det.basin_mass))
            throw std::runtime_error("non-finite detection field in " + path.string());
        d.detections.push_back(det);
    }
    return d;
}

struct ManifestEntry {
    std::string volume_path;      // relative to the manifest file unless absolute
    std::string annotation_path;
    int seed_count = 0;
};

inline void write_manifest(const std::vector<ManifestEntry>& entries, const fs::path& path) {
    json arr = json::array();
    for (const auto& e : entries) {
        json row;
        row["volume_path"] = e.volume_path;
        row["annotation_path"] = e.annotation_path;
        row["seed_count"] = e.seed_count;
        arr.push_back(row);
    }
    write_text_file(path, json_bytes(arr));
}

inline std::vector<ManifestEntry> read_manifest(const fs::path& path) {
    const json j = parse_json_file(path);
    if (!j.is_array()) throw std::runtime_error("manifest must be a JSON array: " + path.string());
    std::vector<ManifestEntry> entries;
    for (const auto& row : j) {
        ManifestEntry e;
        e.volume_path = row.at("volume_path").get<std::string>();
        e.annotation_path = row.at("annotation_path").get<std::string>();
        e.seed_count = row.at("seed_count").get<int>();
        entries.push_back(e);
    }
    return entries;
}

// Resolves a manifest-relative path against the manifest's directory.
inline fs::path resolve_against(const fs::path& manifest_path, const std::string& entry_path) {
    fs::path p(entry_path);
    if (p.is_absolute()) return p;
    return manifest_path.parent_path() / p;
}

}  // namespace seedloc
