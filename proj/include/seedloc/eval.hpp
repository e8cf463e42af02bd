#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "seedloc/io.hpp"
#include "seedloc/types.hpp"

namespace seedloc {

struct MatchedPair {
    int gt_index = -1;
    int det_index = -1;
    double distance_mm = 0.0;
};

struct EvalReport {
    std::vector<MatchedPair> pairs;       // in greedy selection order
    std::vector<int> unmatched_gt;
    std::vector<int> unmatched_det;
    int detected_count = 0;
    int gt_count = 0;
    int det_count = 0;
    double detection_rate = 0.0;
    double threshold_mm = 3.0;
    double q25 = 0.0, median = 0.0, q75 = 0.0;  // over all pair distances
};

// Greedy pairing: repeatedly take the globally closest (gt, det) pair among
// the unmatched points, ties broken by (gt_index, det_index). Every pair is
// recorded regardless of distance; the detection threshold applies later.
inline std::vector<MatchedPair> greedy_match(const std::vector<Vec3>& gt,
                                             const std::vector<Vec3>& det) {
    struct Cand {
        double d;
        int gi, di;
    };
    std::vector<Cand> cands;
    cands.reserve(gt.size() * det.size());
    for (int gi = 0; gi < static_cast<int>(gt.size()); ++gi)
        for (int di = 0; di < static_cast<int>(det.size()); ++di)
            cands.push_back({distance(gt[static_cast<std::size_t>(gi)],
                                      det[static_cast<std::size_t>(di)]),
                             gi, di});
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.d != b.d) return a.d < b.d;
        if (a.gi != b.gi) return a.gi < b.gi;
        return a.di < b.di;
    });
    std::vector<char> gt_used(gt.size(), 0), det_used(det.size(), 0);
    std::vector<MatchedPair> pairs;
    for (const auto& c : cands) {
        if (gt_used[static_cast<std::size_t>(c.gi)] || det_used[static_cast<std::size_t>(c.di)])
            continue;
        gt_used[static_cast<std::size_t>(c.gi)] = 1;
        det_used[static_cast<std::size_t>(c.di)] = 1;
        pairs.push_back({c.gi, c.di, c.d});
    }
    return pairs;
}

// Linear interpolation of order statistics.
inline double quantile(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("quantile: empty input");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

// A ground-truth point counts as detected when its pair distance is
// strictly below threshold_mm. With no ground truth at all, the rate is 1
// for an empty detection list and 0 otherwise.
inline EvalReport evaluate_detections(const std::vector<Vec3>& gt, const std::vector<Vec3>& det,
                                      double threshold_mm = 3.0) {
    if (!(threshold_mm > 0)) throw std::invalid_argument("evaluate: threshold must be positive");
    EvalReport r;
    r.threshold_mm = threshold_mm;
    r.gt_count = static_cast<int>(gt.size());
    r.det_count = static_cast<int>(det.size());
    r.pairs = greedy_match(gt, det);

    std::vector<char> gt_used(gt.size(), 0), det_used(det.size(), 0);
    for (const auto& p : r.pairs) {
        gt_used[static_cast<std::size_t>(p.gt_index)] = 1;
        det_used[static_cast<std::size_t>(p.det_index)] = 1;
        if (p.distance_mm < threshold_mm) ++r.detected_count;
    }
    for (int i = 0; i < r.gt_count; ++i)
        if (!gt_used[static_cast<std::size_t>(i)]) r.unmatched_gt.push_back(i);
    for (int i = 0; i < r.det_count; ++i)
        if (!det_used[static_cast<std::size_t>(i)]) r.unmatched_det.push_back(i);

    if (r.gt_count > 0)
        r.detection_rate = static_cast<double>(r.detected_count) / r.gt_count;
    else
        r.detection_rate = r.det_count == 0 ? 1.0 : 0.0;

    if (!r.pairs.empty()) {
        std::vector<double> d;
        d.reserve(r.pairs.size());
        for (const auto& p : r.pairs) d.push_back(p.distance_mm);
        r.q25 = quantile(d, 0.25);
        r.median = quantile(d, 0.50);
        r.q75 = quantile(d, 0.75);
    }
    return r;
}

inline std::string format_rate_percent(double rate) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * rate);
    return buf;
}

inline json eval_report_to_json(const EvalReport& r) {
    json j;
    json pairs = json::array();
    for (const auto& p : r.pairs) pairs.push_back({p.gt_index, p.det_index, p.distance_mm});
    j["pairs"] = pairs;
    j["unmatched_gt"] = r.unmatched_gt;
    j["unmatched_det"] = r.unmatched_det;
    j["detected_count"] = r.detected_count;
    j["gt_count"] = r.gt_count;
    j["det_count"] = r.det_count;
    j["detection_rate"] = r.detection_rate;
    j["threshold_mm"] = r.threshold_mm;
    j["distance_quantiles_mm"] = {{"q25", r.q25}, {"median", r.median}, {"q75", r.q75}};
    return j;
}

inline EvalReport eval_report_from_json(const json& j) {
    EvalReport r;
    for (const auto& p : j.at("pairs"))
        r.pairs.push_back({p[0].get<int>(), p[1].get<int>(), p[2].get<double>()});
    r.unmatched_gt = j.at("unmatched_gt").get<std::vector<int>>();
    r.unmatched_det = j.at("unmatched_det").get<std::vector<int>>();
    r.detected_count = j.at("detected_count").get<int>();
    r.gt_count = j.at("gt_count").get<int>();
    r.det_count = j.at("det_count").get<int>();
    r.detection_rate = j.at("detection_rate").get<double>();
    r.threshold_mm = j.at("threshold_mm").get<double>();
    r.q25 = j.at("distance_quantiles_mm").at("q25").get<double>();
    r.median = j.at("distance_quantiles_mm").at("median").get<double>();
    r.q75 = j.at("distance_quantiles_mm").at("q75").get<double>();
    return r;
}

inline void write_eval_report(const EvalReport& r, const fs::path& json_path,
                              const fs::path& pairs_csv_path) {
    write_text_file(json_path, json_bytes(eval_report_to_json(r)));
    std::string csv = "gt_index,det_index,distance_mm,detected\n";
    char line[96];
    for (const auto& p : r.pairs) {
        std::snprintf(line, sizeof(line), "%d,%d,%.9g,%d\n", p.gt_index, p.det_index, p.distance_mm,
                      p.distance_mm < r.threshold_mm ? 1 : 0);
        csv += line;
    }
    write_text_file(pairs_csv_path, csv);
}

}  // namespace seedloc
