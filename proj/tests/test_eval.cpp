#include <doctest.h>

#include "seedloc/eval.hpp"
#include "seedloc/rng.hpp"

using namespace seedloc;

namespace {

// literal simulation of the greedy rule: scan for the global minimum among
// unmatched pairs, record, repeat
std::vector<MatchedPair> greedy_oracle(const std::vector<Vec3>& gt, const std::vector<Vec3>& det) {
    std::vector<char> gu(gt.size(), 0), du(det.size(), 0);
    std::vector<MatchedPair> pairs;
    const std::size_t rounds = std::min(gt.size(), det.size());
    for (std::size_t k = 0; k < rounds; ++k) {
        double best = std::numeric_limits<double>::infinity();
        int bg = -1, bd = -1;
        for (int gi = 0; gi < static_cast<int>(gt.size()); ++gi) {
            if (gu[static_cast<std::size_t>(gi)]) continue;
            for (int di = 0; di < static_cast<int>(det.size()); ++di) {
                if (du[static_cast<std::size_t>(di)]) continue;
                const double d = distance(gt[static_cast<std::size_t>(gi)],
                                          det[static_cast<std::size_t>(di)]);
                // ascending scan order realizes the (gt_index, det_index) tie-break
                if (d < best) {
                    best = d;
                    bg = gi;
                    bd = di;
                }
            }
        }
        gu[static_cast<std::size_t>(bg)] = 1;
        du[static_cast<std::size_t>(bd)] = 1;
        pairs.push_back({bg, bd, best});
    }
    return pairs;
}

}  // namespace

TEST_CASE("identical point sets pair at distance zero") {
    const std::vector<Vec3> pts{{1, 2, 3}, {4, 5, 6}};
    const auto pairs = greedy_match(pts, pts);
    REQUIRE(pairs.size() == 2);
    for (const auto& p : pairs) {
        CHECK(p.distance_mm == 0.0);
        CHECK(p.gt_index == p.det_index);
    }
}

TEST_CASE("greedy pairing can lose to the optimal assignment") {
    const std::vector<Vec3> gt{{0, 0, 0}, {2.5, 0, 0}};
    const std::vector<Vec3> det{{1.4, 0, 0}, {5.4, 0, 0}};
    const auto pairs = greedy_match(gt, det);
    REQUIRE(pairs.size() == 2);
    // greedy grabs (g2, p1) at 1.1 first, forcing (g1, p2) at 5.4
    CHECK(pairs[0].gt_index == 1);
    CHECK(pairs[0].det_index == 0);
    CHECK(pairs[0].distance_mm == doctest::Approx(1.1).epsilon(1e-12));
    CHECK(pairs[1].gt_index == 0);
    CHECK(pairs[1].det_index == 1);
    CHECK(pairs[1].distance_mm == doctest::Approx(5.4).epsilon(1e-12));

    const EvalReport greedy_report = evaluate_detections(gt, det, 3.0);
    CHECK(greedy_report.detected_count == 1);

    // the optimal assignment would detect both
    int optimal = 0;
    const double a = distance(gt[0], det[0]);
    const double b = distance(gt[1], det[1]);
    const double c = distance(gt[0], det[1]);
    const double d = distance(gt[1], det[0]);
    const int straight = (a < 3.0) + (b < 3.0);
    const int crossed = (c < 3.0) + (d < 3.0);
    optimal = std::max(straight, crossed);
    CHECK(optimal == 2);
}

TEST_CASE("empty detection list leaves all ground truth unmatched") {
    const std::vector<Vec3> gt{{0, 0, 0}, {1, 1, 1}, {2, 2, 2}};
    const EvalReport r = evaluate_detections(gt, {}, 3.0);
    CHECK(r.pairs.empty());
    CHECK(r.unmatched_gt == std::vector<int>{0, 1, 2});
    CHECK(r.detected_count == 0);
    CHECK(r.detection_rate == 0.0);
}

TEST_CASE("a pair at exactly the threshold does not count as detected") {
    const std::vector<Vec3> gt{{0, 0, 0}};
    const std::vector<Vec3> det{{3.0, 0, 0}};
    const EvalReport r = evaluate_detections(gt, det, 3.0);
    REQUIRE(r.pairs.size() == 1);
    CHECK(r.pairs[0].distance_mm == 3.0);
    CHECK(r.detected_count == 0);
    const EvalReport r2 = evaluate_detections(gt, {{2.999, 0, 0}}, 3.0);
    CHECK(r2.detected_count == 1);
}

TEST_CASE("detection rate formats to one decimal") {
    CHECK(format_rate_percent(2150.0 / 2286.0) == "94.1");
    CHECK(format_rate_percent(1.0) == "100.0");
    CHECK(format_rate_percent(0.0) == "0.0");
}

TEST_CASE("empty ground truth defines the rate by the detection list") {
    CHECK(evaluate_detections({}, {}, 3.0).detection_rate == 1.0);
    CHECK(evaluate_detections({}, {{1, 1, 1}}, 3.0).detection_rate == 0.0);
}

TEST_CASE("quantiles by linear interpolation") {
    CHECK(quantile({0.36, 0.70, 1.28}, 0.5) == doctest::Approx(0.70).epsilon(1e-12));
    CHECK(quantile({2.0}, 0.25) == 2.0);
    CHECK(quantile({2.0}, 0.5) == 2.0);
    CHECK(quantile({2.0}, 0.75) == 2.0);
    CHECK(quantile({1, 2, 3, 4}, 0.5) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(quantile({1, 2, 3, 4}, 0.25) == doctest::Approx(1.75).epsilon(1e-12));
    CHECK_THROWS_AS(quantile({}, 0.5), std::invalid_argument);
}

TEST_CASE("greedy matcher equals the literal oracle on random instances") {
    Rng rng(71);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<Vec3> gt, det;
        const int ng = static_cast<int>(rng.below(8));
        const int nd = static_cast<int>(rng.below(8));
        for (int i = 0; i < ng; ++i)
            gt.push_back({rng.uniform(0, 20), rng.uniform(0, 20), rng.uniform(0, 20)});
        for (int i = 0; i < nd; ++i)
            det.push_back({rng.uniform(0, 20), rng.uniform(0, 20), rng.uniform(0, 20)});
        const auto a = greedy_match(gt, det);
        const auto b = greedy_oracle(gt, det);
        REQUIRE(a.size() == b.size());
        CHECK(a.size() == std::min(gt.size(), det.size()));
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].gt_index == b[i].gt_index);
            CHECK(a[i].det_index == b[i].det_index);
            CHECK(a[i].distance_mm == b[i].distance_mm);
        }
    }
}

TEST_CASE("input order only matters through the documented tie-break") {
    Rng rng(73);
    std::vector<Vec3> gt, det;
    for (int i = 0; i < 5; ++i) {
        gt.push_back({rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(0, 10)});
        det.push_back({rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(0, 10)});
    }
    const auto base = greedy_match(gt, det);
    // permute detections; with distinct distances the matched PAIRS agree
    std::vector<Vec3> det2{det[3], det[0], det[4], det[1], det[2]};
    const std::vector<int> back{3, 0, 4, 1, 2};  // det2[i] == det[back[i]]
    const auto perm = greedy_match(gt, det2);
    REQUIRE(base.size() == perm.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK(base[i].gt_index == perm[i].gt_index);
        CHECK(base[i].det_index == back[static_cast<std::size_t>(perm[i].det_index)]);
        CHECK(base[i].distance_mm == doctest::Approx(perm[i].distance_mm).epsilon(1e-12));
    }
}

TEST_CASE("report fields are internally consistent") {
    Rng rng(79);
    std::vector<Vec3> gt, det;
    for (int i = 0; i < 6; ++i)
        gt.push_back({rng.uniform(0, 30), rng.uniform(0, 30), rng.uniform(0, 30)});
    for (int i = 0; i < 4; ++i)
        det.push_back({rng.uniform(0, 30), rng.uniform(0, 30), rng.uniform(0, 30)});
    const EvalReport r = evaluate_detections(gt, det, 3.0);
    CHECK(r.pairs.size() == 4);
    CHECK(r.unmatched_gt.size() == 2);
    CHECK(r.unmatched_det.empty());
    CHECK(r.detection_rate >= 0.0);
    CHECK(r.detection_rate <= 1.0);
    int strict = 0;
    for (const auto& p : r.pairs)
        if (p.distance_mm < 3.0) ++strict;
    CHECK(strict == r.detected_count);
}

TEST_CASE("eval report serializes to json and csv") {
    const std::vector<Vec3> gt{{0, 0, 0}, {5, 0, 0}};
    const std::vector<Vec3> det{{0.5, 0, 0}, {5.2, 0, 0}};
    const EvalReport r = evaluate_detections(gt, det, 3.0);
    const json j = eval_report_to_json(r);
    const EvalReport back = eval_report_from_json(j);
    CHECK(back.detected_count == r.detected_count);
    CHECK(back.detection_rate == r.detection_rate);
    CHECK(back.median == r.median);
    CHECK(back.pairs.size() == r.pairs.size());
}
