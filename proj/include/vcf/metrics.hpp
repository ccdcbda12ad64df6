#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "vcf/annotation.hpp"
#include "vcf/bitmap.hpp"
#include "vcf/decode.hpp"
#include "vcf/error.hpp"
#include "vcf/skeleton.hpp"

namespace vcf {

// Object keypoint similarity between a decoded keypoint list and a labeled
// person, normalized by object area and per-keypoint falloff. Only labeled
// ground-truth slots count; a slot the detection is missing contributes 0.
inline double oks(const std::vector<DecodedKeypoint>& det, const PersonAnnotation& gt,
                  double area, const SkeletonSpec& skeleton) {
    if (!(area > 0.0)) throw domain_error("oks: area must be positive");
    double sum = 0.0;
    int labeled = 0;
    for (int i = 0; i < skeleton.size(); ++i) {
        const Keypoint& g = gt.keypoints[std::size_t(i)];
        if (!g.labeled()) continue;
        ++labeled;
        if (std::size_t(i) >= det.size() || !det[std::size_t(i)].present) continue;
        const double dx = det[std::size_t(i)].x - g.x;
        const double dy = det[std::size_t(i)].y - g.y;
        const double k = skeleton.oks_falloff[std::size_t(i)];
        sum += std::exp(-(dx * dx + dy * dy) / (2.0 * area * k * k));
    }
    return labeled > 0 ? sum / labeled : 0.0;
}

// Intersection over union of two masks on the same canvas; 0 when both empty.
inline double mask_iou(const Bitmap& a, const Bitmap& b) {
    if (!a.same_canvas(b)) throw schema_error("mask_iou: canvas mismatch");
    const std::size_t inter = intersection_count(a, b);
    const std::size_t uni = a.count() + b.count() - inter;
    return uni == 0 ? 0.0 : double(inter) / double(uni);
}

enum class Similarity { kOks, kMaskIou };

struct MatchRecord {
    int image = 0;
    int detection = 0; // index within the image's detection list
    int gt = 0;        // index within the image's person list
    double similarity = 0.0;
};

struct PrPoint {
    double recall = 0.0;
    double precision = 0.0;
};

// Average precision for one similarity kind.
struct ApResult {
    std::map<double, double> ap_by_threshold;
    double mean_ap = 0.0;
    // Matches and the precision-recall trace at the lowest threshold.
    std::vector<MatchRecord> matches;
    std::map<double, std::vector<PrPoint>> pr_by_threshold;
};

inline std::vector<double> default_ap_thresholds() {
    std::vector<double> t;
    for (int i = 0; i < 10; ++i) t.push_back(0.50 + 0.05 * i);
    return t;
}

namespace detail {

// 101-point interpolated area under the precision-recall curve.
inline double interpolated_ap(const std::vector<PrPoint>& pr) {
    double total = 0.0;
    for (int i = 0; i <= 100; ++i) {
        const double r = i / 100.0;
        double best = 0.0;
        for (const auto& p : pr)
            if (p.recall >= r && p.precision > best) best = p.precision;
        total += best;
    }
    return total / 101.0;
}

} // namespace detail

// COCO-style evaluation: per threshold, detections are visited in descending
// score order and greedily matched to the unmatched ground truth with the
// highest similarity >= threshold (ties: lower gt index). AP is the
// 101-point interpolated area under the pooled precision-recall curve and
// mean AP averages the thresholds.
inline ApResult average_precision(const std::vector<std::vector<DecodedInstance>>& detections,
                                  const std::vector<SceneAnnotation>& scenes,
                                  const SkeletonSpec& skeleton, Similarity kind,
                                  std::vector<double> thresholds = default_ap_thresholds()) {
    if (detections.size() != scenes.size())
        throw schema_error("average_precision: detection/scene image count mismatch");
    if (thresholds.empty()) throw domain_error("average_precision: no thresholds");
    std::sort(thresholds.begin(), thresholds.end());

    const int images = int(scenes.size());
    std::size_t total_gt = 0;
    for (const auto& s : scenes) total_gt += s.persons.size();

    // Similarity tables and per-image detection order are threshold-independent.
    std::vector<std::vector<std::vector<double>>> sim(static_cast<std::size_t>(images));
    std::vector<std::vector<int>> det_order(static_cast<std::size_t>(images));
    for (int im = 0; im < images; ++im) {
        const auto& dets = detections[std::size_t(im)];
        const auto& gts = scenes[std::size_t(im)].persons;
        sim[std::size_t(im)].assign(dets.size(), std::vector<double>(gts.size(), 0.0));
        for (std::size_t d = 0; d < dets.size(); ++d)
            for (std::size_t g = 0; g < gts.size(); ++g) {
                if (kind == Similarity::kOks) {
                    const double area = double(gts[g].mask.count());
                    sim[std::size_t(im)][d][g] =
                        area > 0.0 ? oks(dets[d].keypoints, gts[g], area, skeleton) : 0.0;
                } else {
                    sim[std::size_t(im)][d][g] = mask_iou(dets[d].mask, gts[g].mask);
                }
            }
        auto& order = det_order[std::size_t(im)];
        order.resize(dets.size());
        for (std::size_t d = 0; d < dets.size(); ++d) order[d] = int(d);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return dets[std::size_t(a)].score > dets[std::size_t(b)].score;
        });
    }

    ApResult result;
    for (const double t : thresholds) {
        struct Scored {
            double score;
            int image, det;
            bool tp;
        };
        std::vector<Scored> pooled;
        std::vector<MatchRecord> matches;
        for (int im = 0; im < images; ++im) {
            const auto& dets = detections[std::size_t(im)];
            const auto& gts = scenes[std::size_t(im)].persons;
            std::vector<std::uint8_t> gt_taken(gts.size(), 0);
            for (int d : det_order[std::size_t(im)]) {
                int best_gt = -1;
                double best_sim = 0.0;
                for (std::size_t g = 0; g < gts.size(); ++g) {
                    if (gt_taken[g]) continue;
                    const double s = sim[std::size_t(im)][std::size_t(d)][g];
                    if (s >= t && s > best_sim) {
                        best_sim = s;
                        best_gt = int(g);
                    }
                }
                const bool tp = best_gt >= 0;
                if (tp) {
                    gt_taken[std::size_t(best_gt)] = 1;
                    matches.push_back({im, d, best_gt, best_sim});
                }
                pooled.push_back({dets[std::size_t(d)].score, im, d, tp});
            }
        }
        std::stable_sort(pooled.begin(), pooled.end(), [](const Scored& a, const Scored& b) {
            if (a.score != b.score) return a.score > b.score;
            if (a.image != b.image) return a.image < b.image;
            return a.det < b.det;
        });

        std::vector<PrPoint> pr;
        std::size_t tp_count = 0, fp_count = 0;
        for (const auto& s : pooled) {
            s.tp ? ++tp_count : ++fp_count;
            if (total_gt > 0)
                pr.push_back({double(tp_count) / double(total_gt),
                              double(tp_count) / double(tp_count + fp_count)});
        }
        const double ap = total_gt == 0 ? 0.0 : detail::interpolated_ap(pr);
        result.ap_by_threshold[t] = ap;
        result.pr_by_threshold[t] = std::move(pr);
        if (t == thresholds.front()) result.matches = std::move(matches);
    }

    double sum = 0.0;
    for (const auto& [t, ap] : result.ap_by_threshold) sum += ap;
    result.mean_ap = sum / double(result.ap_by_threshold.size());
    return result;
}

// Both similarity families over the same detections.
struct EvalResult {
    ApResult keypoint;
    ApResult mask;
};

inline EvalResult evaluate(const std::vector<std::vector<DecodedInstance>>& detections,
                           const std::vector<SceneAnnotation>& scenes,
                           const SkeletonSpec& skeleton,
                           std::vector<double> thresholds = default_ap_thresholds()) {
    return {average_precision(detections, scenes, skeleton, Similarity::kOks, thresholds),
            average_precision(detections, scenes, skeleton, Similarity::kMaskIou, thresholds)};
}

} // namespace vcf
