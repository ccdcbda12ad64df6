#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vcf/annotation.hpp"
#include "vcf/bitmap.hpp"
#include "vcf/config.hpp"
#include "vcf/encode.hpp"
#include "vcf/error.hpp"
#include "vcf/geometry.hpp"
#include "vcf/rng.hpp"
#include "vcf/skeleton.hpp"

namespace vcf {

// Scene generator tunables. The separation margins keep generated scenes
// decodable: keypoints of different persons must stay outside each other's
// suppression radius and clustering anchors outside each other's margin
// reach, otherwise exact round-trip recovery is not well defined.
struct SynthConfig {
    int canvas_width = 401;
    int canvas_height = 401;
    int person_count_min = 1;
    int person_count_max = 5;
    double overlap_target = 0.3; // max pairwise IoU of full (pre-occlusion) masks
    double limb_width_min = 7.0;
    double limb_width_max = 12.0;
    double scale_min = 110.0;
    double scale_max = 170.0;
    std::uint64_t rng_seed = 0;

    double keypoint_separation = 24.0; // cross-person, any slot pair
    double anchor_separation = 56.0;   // cross-person clustering anchors
    double anchor_guard = 20.0;        // anchor vs. same person's other keypoints
    int min_visible_pixels = 400;
    int max_attempts = 1000;
    bool require_visible_keypoints = true;
    bool bent_pose = false; // crescent posture that displaces the mask centroid

    void validate() const {
        if (canvas_width < 64 || canvas_height < 64)
            throw domain_error("SynthConfig: canvas must be at least 64x64");
        if (person_count_min < 1 || person_count_max < person_count_min)
            throw domain_error("SynthConfig: bad person count range");
        if (!(overlap_target >= 0.0 && overlap_target < 1.0))
            throw domain_error("SynthConfig: overlap_target must be in [0,1)");
        if (!(limb_width_min > 0.0 && limb_width_max >= limb_width_min))
            throw domain_error("SynthConfig: bad limb width range");
        if (!(scale_min > 0.0 && scale_max >= scale_min))
            throw domain_error("SynthConfig: bad scale range");
        if (max_attempts < 1) throw domain_error("SynthConfig: max_attempts must be >= 1");
    }
};

namespace detail {

using Pose = std::array<Vec2, 17>;

// Upright body template in unit coordinates, y pointing down, hips at the
// origin. Wrists sit well clear of the hips so the clustering anchor keeps
// its guard distance in most sampled poses.
inline const Pose& body_template() {
    static const Pose t = {{
        {0.000, -0.600},  // nose
        {0.045, -0.645},  // left_eye
        {-0.045, -0.645}, // right_eye
        {0.095, -0.615},  // left_ear
        {-0.095, -0.615}, // right_ear
        {0.160, -0.440},  // left_shoulder
        {-0.160, -0.440}, // right_shoulder
        {0.330, -0.270},  // left_elbow
        {-0.330, -0.270}, // right_elbow
        {0.430, -0.030},  // left_wrist
        {-0.430, -0.030}, // right_wrist
        {0.100, 0.000},   // left_hip
        {-0.100, 0.000},  // right_hip
        {0.145, 0.310},   // left_knee
        {-0.145, 0.310},  // right_knee
        {0.165, 0.620},   // left_ankle
        {-0.165, 0.620},  // right_ankle
    }};
    return t;
}

inline void rotate_about(Pose& pose, std::initializer_list<int> joints, Vec2 pivot,
                         double angle) {
    for (int j : joints) pose[std::size_t(j)] = pivot + rotate(pose[std::size_t(j)] - pivot, angle);
}

// One articulated figure: template + limb swings (+ crescent bend), then a
// global rotation, scale and translation.
inline Pose sample_pose(Rng& rng, Vec2 center, double scale, bool bent) {
    Pose pose = body_template();

    const double arm_l = rng.uniform(-0.30, 0.30);
    const double arm_r = rng.uniform(-0.30, 0.30);
    rotate_about(pose, {kLeftElbow, kLeftWrist}, pose[kLeftShoulder], arm_l);
    rotate_about(pose, {kRightElbow, kRightWrist}, pose[kRightShoulder], arm_r);
    rotate_about(pose, {kLeftWrist}, pose[kLeftElbow], rng.uniform(-0.35, 0.35));
    rotate_about(pose, {kRightWrist}, pose[kRightElbow], rng.uniform(-0.35, 0.35));

    rotate_about(pose, {kLeftKnee, kLeftAnkle}, pose[kLeftHip], rng.uniform(-0.20, 0.20));
    rotate_about(pose, {kRightKnee, kRightAnkle}, pose[kRightHip], rng.uniform(-0.20, 0.20));
    rotate_about(pose, {kLeftAnkle}, pose[kLeftKnee], rng.uniform(-0.25, 0.25));
    rotate_about(pose, {kRightAnkle}, pose[kRightKnee], rng.uniform(-0.25, 0.25));

    const Vec2 hip_center = (pose[kLeftHip] + pose[kRightHip]) / 2.0;
    if (bent) {
        // Fold the upper body one way and the legs the other: the figure
        // becomes a crescent whose pixel centroid falls in the concavity.
        const double side = rng.uniform() < 0.5 ? 1.0 : -1.0;
        const double bend = side * rng.uniform(0.85, 1.15);
        rotate_about(pose,
                     {kNose, kLeftEye, kRightEye, kLeftEar, kRightEar, kLeftShoulder,
                      kRightShoulder, kLeftElbow, kRightElbow, kLeftWrist, kRightWrist},
                     hip_center, bend);
        rotate_about(pose, {kLeftKnee, kRightKnee, kLeftAnkle, kRightAnkle}, hip_center,
                     -bend * 0.75);
    }

    const double global = rng.uniform(-0.30, 0.30);
    for (auto& p : pose) p = center + rotate(p - hip_center, global) * scale;
    return pose;
}

struct Figure {
    Pose pose;
    double limb_width = 0.0;
    double head_radius = 0.0;
    Bitmap mask; // full (pre-occlusion) mask, clipped to the canvas
};

inline void raster_capsule(Bitmap& mask, Vec2 a, Vec2 b, double radius) {
    const int w = mask.width(), h = mask.height();
    const int x0 = std::max(0, int(std::floor(std::min(a.x, b.x) - radius)));
    const int x1 = std::min(w - 1, int(std::ceil(std::max(a.x, b.x) + radius)));
    const int y0 = std::max(0, int(std::floor(std::min(a.y, b.y) - radius)));
    const int y1 = std::min(h - 1, int(std::ceil(std::max(a.y, b.y) + radius)));
    const double r2 = radius * radius;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
            if (segment_distance2({double(x), double(y)}, a, b) <= r2) mask.set(y, x);
}

inline void raster_triangle(Bitmap& mask, Vec2 a, Vec2 b, Vec2 c) {
    const int w = mask.width(), h = mask.height();
    const int x0 = std::max(0, int(std::floor(std::min({a.x, b.x, c.x}))));
    const int x1 = std::min(w - 1, int(std::ceil(std::max({a.x, b.x, c.x}))));
    const int y0 = std::max(0, int(std::floor(std::min({a.y, b.y, c.y}))));
    const int y1 = std::min(h - 1, int(std::ceil(std::max({a.y, b.y, c.y}))));
    auto edge = [](Vec2 p, Vec2 q, Vec2 r) {
        return (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
    };
    const double area = edge(a, b, c);
    if (area == 0.0) return;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const Vec2 p{double(x), double(y)};
            const double e0 = edge(a, b, p) / area;
            const double e1 = edge(b, c, p) / area;
            const double e2 = edge(c, a, p) / area;
            if (e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0) mask.set(y, x);
        }
}

inline Bitmap raster_figure(const Pose& pose, double limb_width, double head_radius, int height,
                            int width) {
    Bitmap mask(height, width);
    const Vec2 ls = pose[kLeftShoulder], rs = pose[kRightShoulder];
    const Vec2 lh = pose[kLeftHip], rh = pose[kRightHip];
    raster_triangle(mask, ls, rs, rh);
    raster_triangle(mask, ls, rh, lh);
    for (auto [a, b] : {std::pair<Vec2, Vec2>{ls, rs}, {rs, rh}, {rh, lh}, {lh, ls}})
        raster_capsule(mask, a, b, limb_width);

    raster_capsule(mask, pose[kLeftShoulder], pose[kLeftElbow], limb_width);
    raster_capsule(mask, pose[kLeftElbow], pose[kLeftWrist], limb_width);
    raster_capsule(mask, pose[kRightShoulder], pose[kRightElbow], limb_width);
    raster_capsule(mask, pose[kRightElbow], pose[kRightWrist], limb_width);
    raster_capsule(mask, pose[kLeftHip], pose[kLeftKnee], limb_width);
    raster_capsule(mask, pose[kLeftKnee], pose[kLeftAnkle], limb_width);
    raster_capsule(mask, pose[kRightHip], pose[kRightKnee], limb_width);
    raster_capsule(mask, pose[kRightKnee], pose[kRightAnkle], limb_width);

    const Vec2 head = (pose[kNose] + pose[kLeftEye] + pose[kRightEye] + pose[kLeftEar] +
                       pose[kRightEar]) /
                      5.0;
    raster_capsule(mask, head, head, head_radius);
    raster_capsule(mask, (ls + rs) / 2.0, head, limb_width); // neck
    return mask;
}

inline double full_mask_iou(const Bitmap& a, const Bitmap& b) {
    const std::size_t inter = intersection_count(a, b);
    const std::size_t uni = a.count() + b.count() - inter;
    return uni == 0 ? 0.0 : double(inter) / double(uni);
}

} // namespace detail

// Deterministic articulated stick-figure scene. Later persons occlude
// earlier ones; occluded keypoints get visibility 1 and off-canvas ones 0
// (the default margins keep every keypoint visible instead). Throws
// generation_error when the attempt budget runs out.
inline SceneAnnotation generate_scene(const SynthConfig& cfg) {
    cfg.validate();
    const SkeletonSpec& skeleton = coco17();
    Rng top(cfg.rng_seed);
    const int person_count = cfg.person_count_min == cfg.person_count_max
                                 ? cfg.person_count_min
                                 : top.uniform_int(cfg.person_count_min, cfg.person_count_max);

    std::vector<detail::Figure> figures;
    for (int pi = 0; pi < person_count; ++pi) {
        Rng person_stream = Rng(cfg.rng_seed).split(std::uint64_t(pi) + 1);
        bool placed = false;
        for (int attempt = 0; attempt < cfg.max_attempts && !placed; ++attempt) {
            Rng rng = person_stream.split(std::uint64_t(attempt));
            const double scale = rng.uniform(cfg.scale_min, cfg.scale_max);
            const double limb_width = rng.uniform(cfg.limb_width_min, cfg.limb_width_max);
            const double head_radius = std::max(0.115 * scale, limb_width);
            // Typical half-extent; the explicit keypoint-in-canvas check below
            // rejects the poses that still stick out.
            const double reach = 0.50 * scale;
            const double margin_x = std::min(reach, (cfg.canvas_width - 1) / 2.0 - 1.0);
            const double margin_y = std::min(reach, (cfg.canvas_height - 1) / 2.0 - 1.0);
            const Vec2 center{rng.uniform(margin_x, cfg.canvas_width - 1 - margin_x),
                              rng.uniform(margin_y, cfg.canvas_height - 1 - margin_y)};
            const detail::Pose pose = detail::sample_pose(rng, center, scale, cfg.bent_pose);

            bool ok = true;
            for (const auto& p : pose)
                if (p.x < 2.0 || p.x > cfg.canvas_width - 3.0 || p.y < 2.0 ||
                    p.y > cfg.canvas_height - 3.0) {
                    ok = false;
                    break;
                }
            if (!ok) continue;

            const Vec2 anchor = pose[std::size_t(skeleton.anchor_priority.front())];
            for (int j = 0; ok && j < 17; ++j)
                if (j != skeleton.anchor_priority.front() &&
                    distance(anchor, pose[std::size_t(j)]) < cfg.anchor_guard)
                    ok = false;
            for (const auto& other : figures) {
                if (!ok) break;
                const Vec2 other_anchor =
                    other.pose[std::size_t(skeleton.anchor_priority.front())];
                if (distance(anchor, other_anchor) < cfg.anchor_separation) ok = false;
                for (int a = 0; ok && a < 17; ++a)
                    for (int b = 0; ok && b < 17; ++b)
                        if (distance(pose[std::size_t(a)], other.pose[std::size_t(b)]) <
                            cfg.keypoint_separation)
                            ok = false;
            }
            if (!ok) continue;

            Bitmap mask =
                detail::raster_figure(pose, limb_width, head_radius, cfg.canvas_height,
                                      cfg.canvas_width);
            for (const auto& other : figures)
                if (detail::full_mask_iou(mask, other.mask) > cfg.overlap_target) {
                    ok = false;
                    break;
                }
            if (ok && cfg.require_visible_keypoints) {
                // The new person is in front: it must not cover anyone's joints.
                for (const auto& other : figures) {
                    for (const auto& p : other.pose)
                        if (mask.contains(int(std::lround(p.y)), int(std::lround(p.x)))) {
                            ok = false;
                            break;
                        }
                    if (!ok) break;
                }
            }
            if (!ok) continue;

            figures.push_back({pose, limb_width, head_radius, std::move(mask)});
            placed = true;
        }
        if (!placed)
            throw generation_error(
                "generate_scene: placement budget exhausted for person " + std::to_string(pi + 1) +
                "; use a larger canvas or looser separation constraints");
    }

    SceneAnnotation scene;
    scene.width = cfg.canvas_width;
    scene.height = cfg.canvas_height;
    for (int pi = 0; pi < person_count; ++pi) {
        Bitmap visible = figures[std::size_t(pi)].mask;
        for (int front = pi + 1; front < person_count; ++front)
            visible.subtract(figures[std::size_t(front)].mask);
        if (visible.count() < std::size_t(cfg.min_visible_pixels))
            throw generation_error("generate_scene: person " + std::to_string(pi + 1) +
                                   " is almost fully occluded; lower overlap_target");

        PersonAnnotation person;
        person.instance_id = pi + 1;
        for (const auto& p : figures[std::size_t(pi)].pose) {
            int v = kAbsent;
            if (p.x >= 0 && p.x <= cfg.canvas_width - 1 && p.y >= 0 &&
                p.y <= cfg.canvas_height - 1)
                v = visible.contains(int(std::lround(p.y)), int(std::lround(p.x))) ? kVisible
                                                                                   : kOccluded;
            person.keypoints.push_back({p.x, p.y, v});
        }
        person.mask = std::move(visible);
        scene.persons.push_back(std::move(person));
    }
    scene.validate(skeleton);
    return scene;
}

// Seed ladder shared by the corpus builders: scene i of a suite uses an
// independent stream derived from (seed, i).
inline std::uint64_t suite_seed(std::uint64_t base, int index) {
    return mix64(base + 0x51ce5eedULL) ^ mix64(std::uint64_t(index) + 1);
}

inline std::vector<SceneAnnotation> make_scene_suite(SynthConfig cfg, int count) {
    if (count < 1) throw domain_error("make_scene_suite: count must be >= 1");
    std::vector<SceneAnnotation> scenes;
    scenes.reserve(std::size_t(count));
    const std::uint64_t base = cfg.rng_seed;
    for (int i = 0; i < count; ++i) {
        cfg.rng_seed = suite_seed(base, i);
        scenes.push_back(generate_scene(cfg));
    }
    return scenes;
}

namespace detail {

// True when the geometric centroid of the person's visible mask lies
// outside that mask or inside some other person's mask.
inline bool centroid_displaced(const SceneAnnotation& scene, std::size_t person_index) {
    const PersonAnnotation& person = scene.persons[person_index];
    double sx = 0.0, sy = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < scene.height; ++y)
        for (int x = 0; x < scene.width; ++x)
            if (person.mask.at(y, x)) {
                sx += x;
                sy += y;
                ++n;
            }
    if (n == 0) return false;
    const int cx = int(std::lround(sx / double(n)));
    const int cy = int(std::lround(sy / double(n)));
    if (!person.mask.contains(cy, cx)) return true;
    for (std::size_t o = 0; o < scene.persons.size(); ++o)
        if (o != person_index && scene.persons[o].mask.contains(cy, cx)) return true;
    return false;
}

} // namespace detail

inline double displaced_centroid_fraction(const SceneAnnotation& scene) {
    if (scene.persons.empty()) return 0.0;
    std::size_t displaced = 0;
    for (std::size_t i = 0; i < scene.persons.size(); ++i)
        if (detail::centroid_displaced(scene, i)) ++displaced;
    return double(displaced) / double(scene.persons.size());
}

// Entanglement stress corpus: crescent-posed figures whose visible-mask
// centroid leaves their own mask for at least 80% of persons per scene,
// while every anchor-priority keypoint stays visible.
inline std::vector<SceneAnnotation> make_occlusion_suite(SynthConfig cfg, int count) {
    if (count < 1) throw domain_error("make_occlusion_suite: count must be >= 1");
    cfg.bent_pose = true;
    std::vector<SceneAnnotation> scenes;
    scenes.reserve(std::size_t(count));
    const std::uint64_t base = cfg.rng_seed;
    for (int i = 0; i < count; ++i) {
        bool emitted = false;
        for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
            cfg.rng_seed = suite_seed(base ^ 0xbe0dc0de5eedULL, i * 1009 + attempt);
            SceneAnnotation scene = generate_scene(cfg);
            if (displaced_centroid_fraction(scene) >= 0.8) {
                scenes.push_back(std::move(scene));
                emitted = true;
                break;
            }
        }
        if (!emitted)
            throw generation_error("make_occlusion_suite: could not reach the 80% displaced-"
                                   "centroid requirement for scene " + std::to_string(i));
    }
    return scenes;
}

// Stands in for network prediction error: i.i.d. Gaussian noise on the
// heatmap (then clamped back to [0,1]) and on the offset channels. The
// noise magnitude is expressed in normalized offset units, so channels that
// store raw pixel offsets receive noise_sigma * disk_radius. Seed, sigma
// and instance-id channels are left untouched.
inline EncodedFields perturb_fields(const EncodedFields& fields, double noise_sigma,
                                    std::uint64_t rng_seed, const EncodeConfig& cfg = {}) {
    if (noise_sigma < 0.0) throw domain_error("perturb_fields: noise_sigma must be >= 0");
    EncodedFields out = fields;
    if (noise_sigma == 0.0) return out;

    Rng base(rng_seed);
    std::uint64_t stream = 1;
    for (int c = 0; c < out.heatmaps.channel_count(); ++c) {
        Rng rng = base.split(stream++);
        for (auto& v : out.heatmaps.plane(c))
            v = std::clamp(float(v + noise_sigma * rng.gaussian()), 0.0f, 1.0f);
    }
    const double kc_sigma = cfg.normalize_offsets ? noise_sigma : noise_sigma * cfg.disk_radius;
    for (int c = 0; c < out.keycentroid.channel_count(); ++c) {
        Rng rng = base.split(stream++);
        for (auto& v : out.keycentroid.plane(c)) v = float(v + kc_sigma * rng.gaussian());
    }
    const double mc_sigma = noise_sigma * cfg.disk_radius; // raw pixel units
    for (const char* name : {"mc/off_x", "mc/off_y"}) {
        Rng rng = base.split(stream++);
        for (auto& v : out.maskcentroid.plane(out.maskcentroid.require_channel(name)))
            v = float(v + mc_sigma * rng.gaussian());
    }
    return out;
}

} // namespace vcf
