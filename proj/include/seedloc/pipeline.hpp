#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "seedloc/checkpoint.hpp"
#include "seedloc/eval.hpp"
#include "seedloc/io.hpp"
#include "seedloc/net.hpp"
#include "seedloc/phantom.hpp"
#include "seedloc/postprocess.hpp"
#include "seedloc/preprocess.hpp"
#include "seedloc/targetmap.hpp"
#include "seedloc/train.hpp"

namespace seedloc {

// End-to-end plumbing used by both the command-line tool and the
// integration tests, so they exercise identical code paths.

struct LoadedDataset {
    std::vector<Volume> volumes;
    std::vector<AnnotationSet> annotations;
    std::vector<std::string> names;  // volume stems, for output naming
};

inline LoadedDataset load_dataset(const fs::path& manifest_path) {
    LoadedDataset d;
    for (const auto& e : read_manifest(manifest_path)) {
        const fs::path vol = resolve_against(manifest_path, e.volume_path);
        d.volumes.push_back(read_volume(vol));
        d.annotations.push_back(read_annotations(resolve_against(manifest_path, e.annotation_path)));
        const std::string name =
            detail::strip_suffix(fs::path(vol.filename().string()), ".vol.json").string();
        d.names.push_back(name);
    }
    return d;
}

inline std::vector<fs::path> make_target_maps(const fs::path& manifest_path,
                                              const KernelSpec& kernel, double scale,
                                              const fs::path& out_dir) {
    fs::create_directories(out_dir);
    std::vector<fs::path> outputs;
    for (const auto& e : read_manifest(manifest_path)) {
        const fs::path vol_path = resolve_against(manifest_path, e.volume_path);
        const Volume vol = read_volume(vol_path);
        const AnnotationSet ann =
            read_annotations(resolve_against(manifest_path, e.annotation_path));
        const ProbabilityMap map = build_target_map(vol, ann, kernel, scale);
        std::string stem = vol_path.filename().string();
        stem = detail::strip_suffix(fs::path(stem), ".vol.json").string();
        const fs::path out = out_dir / (stem + ".target");
        write_probability_map(map, out);
        outputs.push_back(fs::path(out.string() + ".vol.json"));
    }
    return outputs;
}

struct TrainOutcome {
    fs::path checkpoint_path;
    fs::path loss_csv_path;
    TrainResult result;
};

inline TrainOutcome run_training(const fs::path& manifest_path, const ArchConfig& arch,
                                 const TrainConfig& cfg, const fs::path& out_dir,
                                 const std::function<void(const LossRow&)>& on_round = {}) {
    const LoadedDataset data = load_dataset(manifest_path);
    if (data.volumes.empty()) throw std::invalid_argument("train: manifest lists no volumes");
    fs::create_directories(out_dir);
    TrainOutcome out;
    out.result = train_network<float>(data.volumes, data.annotations, arch, cfg, on_round);
    out.checkpoint_path = out_dir / "model.ckpt.json";
    save_checkpoint(out.result.checkpoint, out_dir / "model");
    out.loss_csv_path = out_dir / "loss_history.csv";
    write_loss_csv(out.result.history, out.loss_csv_path);
    return out;
}

struct InferOptions {
    bool clamp_override = false;
    double clamp_lo = -80.0, clamp_hi = 175.0;
    double resample_iso_mm = 0.0;  // 0 keeps the input grid
    bool use_voi = false;
    VoiSpec voi;
    ExtractConfig extract;
    bool save_maps = false;
};

struct InferVolumeResult {
    std::string name;
    fs::path det_path;
    DetectionSet detections;
    double seconds = 0.0;
};

inline InferVolumeResult infer_volume(RegressionNet<float>& net, const Checkpoint& ck,
                                      const fs::path& volume_path, const InferOptions& opt,
                                      const fs::path& out_dir) {
    InferVolumeResult r;
    std::string stem = volume_path.filename().string();
    stem = detail::strip_suffix(detail::strip_suffix(fs::path(stem), ".vol.json"), ".vol").string();
    r.name = stem;

    Volume vol = read_volume(volume_path);
    const auto t0 = std::chrono::steady_clock::now();
    const double lo = opt.clamp_override ? opt.clamp_lo : ck.meta.clamp_lo;
    const double hi = opt.clamp_override ? opt.clamp_hi : ck.meta.clamp_hi;
    vol = clamp_values(vol, lo, hi);
    if (opt.resample_iso_mm > 0.0) vol = resample_trilinear(vol, opt.resample_iso_mm);
    if (opt.use_voi) vol = extract_voi(vol, opt.voi, static_cast<float>(lo));

    const Tensor<float> x = tensor_from_volume<float>(vol);
    const Tensor<float> pred = net.forward(x, false);
    ProbabilityMap map;
    map.grid = volume_from_tensor(pred, vol);
    map.scale = ck.meta.map_scale;
    r.detections = extract_detections(map, opt.extract);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    fs::create_directories(out_dir);
    r.det_path = out_dir / (stem + ".det.json");
    write_detections(r.detections, r.det_path);
    if (opt.save_maps) write_probability_map(map, out_dir / (stem + ".pred"));
    return r;
}

inline std::vector<InferVolumeResult> run_inference(const Checkpoint& ck,
                                                    const std::vector<fs::path>& volume_paths,
                                                    const InferOptions& opt,
                                                    const fs::path& out_dir) {
    RegressionNet<float> net = net_from_checkpoint<float>(ck);
    std::vector<InferVolumeResult> results;
    for (const auto& p : volume_paths) results.push_back(infer_volume(net, ck, p, opt, out_dir));
    return results;
}

struct EvaluateOutcome {
    EvalReport report;
    fs::path json_path;
    fs::path csv_path;
};

inline EvaluateOutcome run_evaluate(const fs::path& gt_path, const fs::path& det_path,
                                    double threshold_mm, const fs::path& out_stem) {
    const AnnotationSet gt = read_annotations(gt_path);
    const DetectionSet det = read_detections(det_path);
    std::vector<Vec3> det_points;
    for (const auto& d : det.detections) det_points.push_back(d.point_mm);
    EvaluateOutcome out;
    out.report = evaluate_detections(gt.points_mm, det_points, threshold_mm);
    out.json_path = fs::path(out_stem.string() + ".eval.json");
    out.csv_path = fs::path(out_stem.string() + ".pairs.csv");
    write_eval_report(out.report, out.json_path, out.csv_path);
    return out;
}

struct ReportSummary {
    int total_gt = 0;
    int total_detected = 0;
    double overall_rate = 0.0;
    double q25 = 0.0, median = 0.0, q75 = 0.0;
    fs::path csv_path;
    fs::path table_path;
};

// Aggregates per-volume evaluation reports into a CSV and a compact
// two-row text table (seed counts over per-volume detection rates).
inline ReportSummary run_report(const std::vector<fs::path>& eval_jsons, const fs::path& out_dir) {
    if (eval_jsons.empty()) throw std::invalid_argument("report: no evaluation files given");
    fs::create_directories(out_dir);
    ReportSummary s;
    std::string csv = "volume,gt_count,det_count,detected,rate_percent,median_mm\n";
    std::string row_seeds = "No. of seeds ", row_rate = "Detected (%) ";
    std::vector<double> pooled;
    char buf[160];
    for (const auto& path : eval_jsons) {
        const EvalReport r = eval_report_from_json(parse_json_file(path));
        std::string name = path.filename().string();
        name = detail::strip_suffix(fs::path(name), ".eval.json").string();
        std::snprintf(buf, sizeof(buf), "%s,%d,%d,%d,%s,%.4g\n", name.c_str(), r.gt_count,
                      r.det_count, r.detected_count, format_rate_percent(r.detection_rate).c_str(),
                      r.median);
        csv += buf;
        std::snprintf(buf, sizeof(buf), "| %5d ", r.gt_count);
        row_seeds += buf;
        std::snprintf(buf, sizeof(buf), "| %5s ", format_rate_percent(r.detection_rate).c_str());
        row_rate += buf;
        s.total_gt += r.gt_count;
        s.total_detected += r.detected_count;
        for (const auto& p : r.pairs) pooled.push_back(p.distance_mm);
    }
    s.overall_rate = s.total_gt > 0 ? static_cast<double>(s.total_detected) / s.total_gt : 0.0;
    if (!pooled.empty()) {
        s.q25 = quantile(pooled, 0.25);
        s.median = quantile(pooled, 0.50);
        s.q75 = quantile(pooled, 0.75);
    }
    std::string table = row_seeds + "|\n" + row_rate + "|\n";
    std::snprintf(buf, sizeof(buf),
                  "Overall: %d of %d (%s%%); pair distance median %.2f mm [25-75%%: %.2f-%.2f mm]\n",
                  s.total_detected, s.total_gt, format_rate_percent(s.overall_rate).c_str(),
                  s.median, s.q25, s.q75);
    table += buf;
    s.csv_path = out_dir / "summary.csv";
    s.table_path = out_dir / "summary.txt";
    write_text_file(s.csv_path, csv);
    write_text_file(s.table_path, table);
    return s;
}

}  // namespace seedloc
