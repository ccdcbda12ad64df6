#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "vcf/annotation.hpp"
#include "vcf/bitmap.hpp"
#include "vcf/config.hpp"
#include "vcf/field_grid.hpp"
#include "vcf/geometry.hpp"
#include "vcf/skeleton.hpp"

namespace vcf {

struct KeypointCandidate {
    int slot = 0;
    Vec2 position;
    double score = 0.0; // accumulated vote mass squashed to [0,1]
};

struct Anchor {
    Vec2 position;
    double score = 0.0;
};

struct Cluster {
    Bitmap mask;
    Anchor anchor;
    double mean_phi = 0.0;
};

struct DecodedKeypoint {
    double x = 0.0;
    double y = 0.0;
    double score = 0.0;
    bool present = false;

    bool operator==(const DecodedKeypoint&) const = default;
};

// One recovered person.
struct DecodedInstance {
    std::vector<DecodedKeypoint> keypoints; // one slot per skeleton keypoint
    Bitmap mask;
    Vec2 anchor;        // the dynamic centroid that claimed the pixels
    double score = 0.0; // mean of present-keypoint scores, 0 for mask-only

    bool operator==(const DecodedInstance&) const = default;
};

// Gaussian margin: affinity of embedding e to centroid c at width sigma.
inline double phi(Vec2 e, Vec2 centroid, double sigma) {
    if (!(sigma > 0.0)) throw domain_error("phi: sigma must be positive");
    return std::exp(-(e - centroid).norm2() / (2.0 * sigma * sigma));
}

// Each pixel above the heatmap threshold casts a vote of its own probability
// at pixel + offset (offsets un-normalized back to pixels when the encoder
// divided by disk_radius). Votes are bilinearly split over the four
// neighboring cells; targets outside the canvas are clamped to the border,
// so no mass is lost. With use_offset_voting off every pixel votes at its
// own position, which degenerates to plain heatmap peak picking.
inline FieldGrid vote_keypoints(const FieldGrid& heatmaps, const FieldGrid& keycentroid,
                                const DecodeConfig& cfg) {
    cfg.validate();
    if (heatmaps.height() != keycentroid.height() || heatmaps.width() != keycentroid.width())
        throw schema_error("vote_keypoints: heatmap/offset canvas mismatch");
    if (keycentroid.channel_count() != 2 * heatmaps.channel_count())
        throw schema_error("vote_keypoints: offset grid must have two channels per heatmap channel");

    const int h = heatmaps.height(), w = heatmaps.width();
    const double scale = cfg.normalize_offsets ? cfg.disk_radius : 1.0;

    std::vector<std::string> names;
    names.reserve(std::size_t(heatmaps.channel_count()));
    for (const auto& n : heatmaps.channel_names()) names.push_back("votes/" + n);
    FieldGrid votes(h, w, std::move(names));

    std::vector<double> acc(votes.plane_size());
    for (int j = 0; j < heatmaps.channel_count(); ++j) {
        std::fill(acc.begin(), acc.end(), 0.0);
        auto hm = heatmaps.plane(j);
        auto dx = keycentroid.plane(2 * j);
        auto dy = keycentroid.plane(2 * j + 1);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t idx = std::size_t(y) * w + x;
                const double prob = hm[idx];
                if (!(prob >= cfg.heatmap_threshold)) continue;
                double tx = x, ty = y;
                if (cfg.use_offset_voting) {
                    tx += scale * dx[idx];
                    ty += scale * dy[idx];
                    if (!std::isfinite(tx) || !std::isfinite(ty)) continue;
                    tx = std::clamp(tx, 0.0, double(w - 1));
                    ty = std::clamp(ty, 0.0, double(h - 1));
                }
                const int x0 = int(tx), y0 = int(ty); // tx, ty >= 0
                const double fx = tx - x0, fy = ty - y0;
                acc[std::size_t(y0) * w + x0] += prob * (1 - fx) * (1 - fy);
                if (x0 + 1 < w) acc[std::size_t(y0) * w + x0 + 1] += prob * fx * (1 - fy);
                if (y0 + 1 < h) acc[std::size_t(y0 + 1) * w + x0] += prob * (1 - fx) * fy;
                if (x0 + 1 < w && y0 + 1 < h)
                    acc[std::size_t(y0 + 1) * w + x0 + 1] += prob * fx * fy;
            }
        }
        auto out = votes.plane(j);
        for (std::size_t i = 0; i < acc.size(); ++i) out[i] = float(acc[i]);
    }
    return votes;
}

// Greedy per-slot peak extraction. Cells are visited by descending mass
// (ties: smaller y, then smaller x); a selected peak suppresses every cell
// within nms_radius. Subpixel position is the mass-weighted mean of the 3x3
// neighborhood and the score squashes that neighborhood mass to [0,1).
inline std::vector<KeypointCandidate> nms_peaks(const FieldGrid& votes, const DecodeConfig& cfg) {
    cfg.validate();
    const int h = votes.height(), w = votes.width();
    const double r2 = cfg.nms_radius * cfg.nms_radius;
    const int r_cells = int(std::floor(cfg.nms_radius));

    std::vector<KeypointCandidate> out;
    struct Cell {
        float mass;
        int y, x;
    };
    std::vector<Cell> cells;
    std::vector<std::uint8_t> suppressed(votes.plane_size());

    for (int j = 0; j < votes.channel_count(); ++j) {
        auto pl = votes.plane(j);
        cells.clear();
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const float m = pl[std::size_t(y) * w + x];
                if (m > 0.0f) cells.push_back({m, y, x});
            }
        std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
            if (a.mass != b.mass) return a.mass > b.mass;
            if (a.y != b.y) return a.y < b.y;
            return a.x < b.x;
        });
        std::fill(suppressed.begin(), suppressed.end(), 0);

        for (const Cell& c : cells) {
            if (suppressed[std::size_t(c.y) * w + c.x]) continue;

            double mass = 0.0, mx = 0.0, my = 0.0;
            for (int yy = std::max(0, c.y - 1); yy <= std::min(h - 1, c.y + 1); ++yy)
                for (int xx = std::max(0, c.x - 1); xx <= std::min(w - 1, c.x + 1); ++xx) {
                    const double m = pl[std::size_t(yy) * w + xx];
                    mass += m;
                    mx += m * xx;
                    my += m * yy;
                }
            const double score = std::clamp(mass / (1.0 + mass), 0.0, 1.0);
            if (score >= cfg.candidate_score_threshold)
                out.push_back({j, {mx / mass, my / mass}, score});

            for (int yy = std::max(0, c.y - r_cells); yy <= std::min(h - 1, c.y + r_cells); ++yy)
                for (int xx = std::max(0, c.x - r_cells); xx <= std::min(w - 1, c.x + r_cells); ++xx) {
                    const double ddy = yy - c.y, ddx = xx - c.x;
                    if (ddx * ddx + ddy * ddy <= r2)
                        suppressed[std::size_t(yy) * w + xx] = 1;
                }
        }
    }
    return out;
}

namespace detail {

struct ForegroundPixel {
    int x, y;
    Vec2 embedding;
    float sigma;
};

inline std::vector<ForegroundPixel> collect_foreground(const FieldGrid& maskcentroid) {
    const int off_x = maskcentroid.require_channel("mc/off_x");
    const int off_y = maskcentroid.require_channel("mc/off_y");
    const int sigma_c = maskcentroid.require_channel("mc/sigma");
    auto vx = maskcentroid.plane(off_x);
    auto vy = maskcentroid.plane(off_y);
    auto sg = maskcentroid.plane(sigma_c);
    const int h = maskcentroid.height(), w = maskcentroid.width();
    std::vector<ForegroundPixel> fg;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t idx = std::size_t(y) * w + x;
            if (vx[idx] != 0.0f || vy[idx] != 0.0f || sg[idx] > 0.0f)
                fg.push_back({x, y, {x + double(vx[idx]), y + double(vy[idx])}, sg[idx]});
        }
    return fg;
}

} // namespace detail

// Sequential greedy clustering: anchors (pre-sorted by descending score)
// claim unassigned foreground pixels whose embedding margin exceeds
// phi_threshold. Undersized claims are released for later anchors. Pixels
// with no usable sigma never cluster.
inline std::vector<Cluster> cluster_instances(const FieldGrid& maskcentroid,
                                              const std::vector<Anchor>& anchors,
                                              const DecodeConfig& cfg) {
    cfg.validate();
    const int h = maskcentroid.height(), w = maskcentroid.width();
    const int sigma_c = maskcentroid.require_channel("mc/sigma");
    auto sigma_plane = maskcentroid.plane(sigma_c);

    auto fg = detail::collect_foreground(maskcentroid);
    std::vector<std::uint8_t> assigned(fg.size(), 0);
    std::vector<std::size_t> claim;
    std::vector<Cluster> out;

    for (const Anchor& anchor : anchors) {
        if (int(out.size()) >= cfg.max_instances) break;

        double anchor_sigma = 0.0;
        if (cfg.sigma_mode == SigmaMode::kInstance) {
            const int ax = std::clamp(int(std::lround(anchor.position.x)), 0, w - 1);
            const int ay = std::clamp(int(std::lround(anchor.position.y)), 0, h - 1);
            anchor_sigma = sigma_plane[std::size_t(ay) * w + ax];
        }

        claim.clear();
        double phi_sum = 0.0;
        for (std::size_t i = 0; i < fg.size(); ++i) {
            if (assigned[i]) continue;
            const double s = cfg.sigma_mode == SigmaMode::kInstance ? anchor_sigma : fg[i].sigma;
            if (!(s > 0.0)) continue;
            const double affinity = phi(fg[i].embedding, anchor.position, s);
            if (affinity > cfg.phi_threshold) {
                claim.push_back(i);
                phi_sum += affinity;
            }
        }
        if (claim.size() < std::size_t(cfg.min_instance_pixels)) continue;

        Cluster cluster;
        cluster.mask = Bitmap(h, w);
        for (std::size_t i : claim) {
            assigned[i] = 1;
            cluster.mask.set(fg[i].y, fg[i].x);
        }
        cluster.anchor = anchor;
        cluster.mean_phi = phi_sum / double(claim.size());
        out.push_back(std::move(cluster));
    }
    return out;
}

// Groups keypoint candidates into instances by mask membership. Cluster
// masks are dilated by disk_radius/4 to tolerate boundary error; candidates
// inside no dilated mask are dropped; per (instance, slot) the best-scoring
// candidate wins. Clusters with no keypoints stay as mask-only instances.
inline std::vector<DecodedInstance> assemble_instances(
    const std::vector<KeypointCandidate>& candidates, const std::vector<Cluster>& clusters,
    const SkeletonSpec& skeleton, const DecodeConfig& cfg) {
    cfg.validate();
    std::vector<Bitmap> dilated;
    dilated.reserve(clusters.size());
    for (const auto& c : clusters) dilated.push_back(dilate(c.mask, cfg.disk_radius / 4.0));

    std::vector<DecodedInstance> out(clusters.size());
    for (std::size_t ci = 0; ci < clusters.size(); ++ci) {
        out[ci].keypoints.assign(std::size_t(skeleton.size()), {});
        out[ci].mask = clusters[ci].mask;
        out[ci].anchor = clusters[ci].anchor.position;
    }

    for (const auto& cand : candidates) {
        if (cand.slot < 0 || cand.slot >= skeleton.size()) continue;
        const int px = int(std::lround(cand.position.x));
        const int py = int(std::lround(cand.position.y));
        int target = -1;
        for (std::size_t ci = 0; ci < clusters.size(); ++ci)
            if (clusters[ci].mask.contains(py, px)) {
                target = int(ci);
                break;
            }
        if (target < 0)
            for (std::size_t ci = 0; ci < clusters.size(); ++ci)
                if (dilated[ci].contains(py, px)) {
                    target = int(ci);
                    break;
                }
        if (target < 0) continue;

        DecodedKeypoint& slot = out[std::size_t(target)].keypoints[std::size_t(cand.slot)];
        const bool better =
            !slot.present || cand.score > slot.score ||
            (cand.score == slot.score &&
             (cand.position.y < slot.y || (cand.position.y == slot.y && cand.position.x < slot.x)));
        if (better)
            slot = {cand.position.x, cand.position.y, cand.score, true};
    }

    for (auto& inst : out) {
        double sum = 0.0;
        int n = 0;
        for (const auto& kp : inst.keypoints)
            if (kp.present) {
                sum += kp.score;
                ++n;
            }
        inst.score = n > 0 ? sum / n : 0.0;
    }
    return out;
}

// Clustering anchors: candidates of the anchor-priority slots, descending
// score (ties: smaller y, then x), deduplicated within nms_radius.
inline std::vector<Anchor> derive_anchors(const std::vector<KeypointCandidate>& candidates,
                                          const SkeletonSpec& skeleton, const DecodeConfig& cfg) {
    std::vector<std::uint8_t> is_anchor_slot(std::size_t(skeleton.size()), 0);
    for (int slot : skeleton.anchor_priority) is_anchor_slot[std::size_t(slot)] = 1;

    std::vector<Anchor> anchors;
    for (const auto& c : candidates)
        if (c.slot >= 0 && c.slot < skeleton.size() && is_anchor_slot[std::size_t(c.slot)])
            anchors.push_back({c.position, c.score});
    std::sort(anchors.begin(), anchors.end(), [](const Anchor& a, const Anchor& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.position.y != b.position.y) return a.position.y < b.position.y;
        return a.position.x < b.position.x;
    });
    std::vector<Anchor> deduped;
    for (const auto& a : anchors) {
        bool clash = false;
        for (const auto& kept : deduped)
            if (distance(a.position, kept.position) <= cfg.nms_radius) {
                clash = true;
                break;
            }
        if (!clash) deduped.push_back(a);
    }
    return deduped;
}

// Full inverse pipeline: vote, extract peaks, derive clustering anchors,
// cluster pixels, then group keypoints by mask membership.
inline std::vector<DecodedInstance> decode(const FieldGrid& heatmaps, const FieldGrid& keycentroid,
                                           const FieldGrid& maskcentroid,
                                           const SkeletonSpec& skeleton, const DecodeConfig& cfg) {
    cfg.validate();
    if (heatmaps.channel_count() != skeleton.size())
        throw schema_error("decode: heatmap channel count != skeleton size");
    if (maskcentroid.height() != heatmaps.height() || maskcentroid.width() != heatmaps.width())
        throw schema_error("decode: clustering grid canvas mismatch");

    const FieldGrid votes = vote_keypoints(heatmaps, keycentroid, cfg);
    const std::vector<KeypointCandidate> candidates = nms_peaks(votes, cfg);
    const std::vector<Anchor> anchors = derive_anchors(candidates, skeleton, cfg);
    const std::vector<Cluster> clusters = cluster_instances(maskcentroid, anchors, cfg);
    std::vector<DecodedInstance> instances =
        assemble_instances(candidates, clusters, skeleton, cfg);

#ifndef NDEBUG
    // Output masks are pairwise disjoint by construction.
    Bitmap seen(heatmaps.height(), heatmaps.width());
    for (const auto& inst : instances) {
        assert(intersection_count(seen, inst.mask) == 0);
        seen.unite(inst.mask);
    }
#endif
    return instances;
}

// Detections JSON. Absent keypoint slots are written with score 0 (real
// candidates always score above the decode threshold, which is positive).
inline std::string write_detections(const std::vector<DecodedInstance>& instances, int height,
                                    int width) {
    nlohmann::ordered_json doc;
    doc["width"] = width;
    doc["height"] = height;
    doc["instances"] = nlohmann::ordered_json::array();
    for (const auto& inst : instances) {
        nlohmann::ordered_json j;
        j["score"] = inst.score;
        j["anchor"] = {inst.anchor.x, inst.anchor.y};
        j["keypoints"] = nlohmann::ordered_json::array();
        for (const auto& kp : inst.keypoints)
            j["keypoints"].push_back({kp.present ? kp.x : 0.0, kp.present ? kp.y : 0.0,
                                      kp.present ? kp.score : 0.0});
        j["mask_rle"] = inst.mask.to_rle();
        doc["instances"].push_back(std::move(j));
    }
    return doc.dump();
}

struct Detections {
    int width = 0;
    int height = 0;
    std::vector<DecodedInstance> instances;
};

inline Detections read_detections(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("read_detections: ") + e.what());
    }
    try {
        Detections det;
        det.width = doc.at("width").get<int>();
        det.height = doc.at("height").get<int>();
        for (const auto& j : doc.at("instances")) {
            DecodedInstance inst;
            inst.score = j.at("score").get<double>();
            inst.anchor = {j.at("anchor")[0].get<double>(), j.at("anchor")[1].get<double>()};
            for (const auto& t : j.at("keypoints")) {
                DecodedKeypoint kp;
                kp.x = t[0].get<double>();
                kp.y = t[1].get<double>();
                kp.score = t[2].get<double>();
                kp.present = kp.score > 0.0;
                inst.keypoints.push_back(kp);
            }
            inst.mask = Bitmap::from_rle(det.height, det.width,
                                         j.at("mask_rle").get<std::vector<std::int64_t>>());
            det.instances.push_back(std::move(inst));
        }
        return det;
    } catch (const nlohmann::json::exception& e) {
        throw schema_error(std::string("read_detections: ") + e.what());
    }
}

} // namespace vcf
