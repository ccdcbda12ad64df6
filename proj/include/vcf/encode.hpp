#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "vcf/annotation.hpp"
#include "vcf/config.hpp"
#include "vcf/field_grid.hpp"
#include "vcf/geometry.hpp"
#include "vcf/skeleton.hpp"

namespace vcf {

// The three ground-truth field families a network is trained to predict.
struct EncodedFields {
    FieldGrid heatmaps;     // one channel per keypoint, binary disk targets
    FieldGrid keycentroid;  // two channels per keypoint: dx then dy
    FieldGrid maskcentroid; // off_x, off_y, seed, sigma, iid
};

namespace channel {

inline std::vector<std::string> heatmap(const SkeletonSpec& sk) {
    std::vector<std::string> names;
    names.reserve(std::size_t(sk.size()));
    for (const auto& n : sk.keypoint_names) names.push_back("hm/" + n);
    return names;
}

inline std::vector<std::string> keycentroid(const SkeletonSpec& sk) {
    std::vector<std::string> names;
    names.reserve(std::size_t(sk.size()) * 2);
    for (const auto& n : sk.keypoint_names) {
        names.push_back("kc/" + n + "/dx");
        names.push_back("kc/" + n + "/dy");
    }
    return names;
}

inline std::vector<std::string> maskcentroid() {
    return {"mc/off_x", "mc/off_y", "mc/seed", "mc/sigma", "mc/iid"};
}

inline std::vector<std::string> response_weight(const SkeletonSpec& sk) {
    std::vector<std::string> names;
    names.reserve(std::size_t(sk.size()));
    for (const auto& n : sk.keypoint_names) names.push_back("w/" + n);
    return names;
}

} // namespace channel

// Binary disk targets: channel j is 1 exactly where some labeled keypoint j
// lies within disk_radius (boundary inclusive), 0 elsewhere.
inline FieldGrid encode_heatmaps(const SceneAnnotation& scene, const SkeletonSpec& skeleton,
                                 const EncodeConfig& cfg) {
    cfg.validate();
    scene.validate(skeleton);
    FieldGrid grid(scene.height, scene.width, channel::heatmap(skeleton));
    const double r = cfg.disk_radius;
    const double r2 = r * r;
    for (const auto& person : scene.persons) {
        for (int j = 0; j < skeleton.size(); ++j) {
            const Keypoint& kp = person.keypoints[std::size_t(j)];
            if (!kp.labeled()) continue;
            auto pl = grid.plane(j);
            const int y0 = std::max(0, int(std::ceil(kp.y - r)));
            const int y1 = std::min(scene.height - 1, int(std::floor(kp.y + r)));
            const int x0 = std::max(0, int(std::ceil(kp.x - r)));
            const int x1 = std::min(scene.width - 1, int(std::floor(kp.x + r)));
            for (int y = y0; y <= y1; ++y) {
                const double dy = y - kp.y;
                for (int x = x0; x <= x1; ++x) {
                    const double dx = x - kp.x;
                    if (dx * dx + dy * dy <= r2)
                        pl[std::size_t(y) * scene.width + x] = 1.0f;
                }
            }
        }
    }
    return grid;
}

// Displacement field inside each keypoint disk: channels (2j, 2j+1) carry the
// vector from the pixel to its keypoint (x then y), divided by disk_radius
// when normalize_offsets is on. Where disks of two persons overlap for the
// same slot the nearer keypoint wins; ties go to the lower instance id.
inline FieldGrid encode_keycentroid(const SceneAnnotation& scene, const SkeletonSpec& skeleton,
                                    const EncodeConfig& cfg) {
    cfg.validate();
    scene.validate(skeleton);
    FieldGrid grid(scene.height, scene.width, channel::keycentroid(skeleton));
    const double r = cfg.disk_radius;
    const double r2 = r * r;
    const double scale = cfg.normalize_offsets ? 1.0 / r : 1.0;

    // Ascending instance id so that equal-distance ties resolve to the lower id.
    std::vector<std::size_t> order(scene.persons.size());
    std::iota(order.begin(), order.end(), std::size_t(0));
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scene.persons[a].instance_id < scene.persons[b].instance_id;
    });

    std::vector<double> best(grid.plane_size());
    for (int j = 0; j < skeleton.size(); ++j) {
        std::fill(best.begin(), best.end(), std::numeric_limits<double>::infinity());
        auto dx_plane = grid.plane(2 * j);
        auto dy_plane = grid.plane(2 * j + 1);
        for (std::size_t pi : order) {
            const Keypoint& kp = scene.persons[pi].keypoints[std::size_t(j)];
            if (!kp.labeled()) continue;
            const int y0 = std::max(0, int(std::ceil(kp.y - r)));
            const int y1 = std::min(scene.height - 1, int(std::floor(kp.y + r)));
            const int x0 = std::max(0, int(std::ceil(kp.x - r)));
            const int x1 = std::min(scene.width - 1, int(std::floor(kp.x + r)));
            for (int y = y0; y <= y1; ++y) {
                const double dy = kp.y - y;
                for (int x = x0; x <= x1; ++x) {
                    const double dx = kp.x - x;
                    const double d2 = dx * dx + dy * dy;
                    const std::size_t idx = std::size_t(y) * scene.width + x;
                    if (d2 <= r2 && d2 < best[idx]) {
                        best[idx] = d2;
                        dx_plane[idx] = float(dx * scale);
                        dy_plane[idx] = float(dy * scale);
                    }
                }
            }
        }
    }
    return grid;
}

// Radial regression response around one keypoint:
//   exp(-((x - x_j)^2 + (y - y_j)^2) / d)
// with d = disk_radius^2 in the default mode (the response decays to e^-1
// exactly at the disk boundary) or d = disk_radius in raw mode.
inline FieldGrid gaussian_response(Vec2 keypoint, int height, int width,
                                   const EncodeConfig& cfg) {
    cfg.validate();
    if (keypoint.x < 0 || keypoint.x > width - 1 || keypoint.y < 0 || keypoint.y > height - 1)
        throw domain_error("gaussian_response: keypoint outside canvas");
    const double denom = cfg.gaussian_denominator == GaussianDenominator::kRadiusSquared
                             ? cfg.disk_radius * cfg.disk_radius
                             : cfg.disk_radius;
    FieldGrid grid(height, width, {"response"});
    auto pl = grid.plane(0);
    for (int y = 0; y < height; ++y) {
        const double dy2 = (y - keypoint.y) * (y - keypoint.y);
        for (int x = 0; x < width; ++x) {
            const double dx2 = (x - keypoint.x) * (x - keypoint.x);
            pl[std::size_t(y) * width + x] = float(std::exp(-(dx2 + dy2) / denom));
        }
    }
    return grid;
}

// Per-keypoint loss weighting map: channel j holds the strongest radial
// response among that slot's labeled keypoints across all persons.
inline FieldGrid encode_response_weights(const SceneAnnotation& scene,
                                         const SkeletonSpec& skeleton,
                                         const EncodeConfig& cfg) {
    cfg.validate();
    scene.validate(skeleton);
    const double denom = cfg.gaussian_denominator == GaussianDenominator::kRadiusSquared
                             ? cfg.disk_radius * cfg.disk_radius
                             : cfg.disk_radius;
    FieldGrid grid(scene.height, scene.width, channel::response_weight(skeleton));
    for (int j = 0; j < skeleton.size(); ++j) {
        auto pl = grid.plane(j);
        for (const auto& person : scene.persons) {
            const Keypoint& kp = person.keypoints[std::size_t(j)];
            if (!kp.labeled()) continue;
            for (int y = 0; y < scene.height; ++y) {
                const double dy2 = (y - kp.y) * (y - kp.y);
                for (int x = 0; x < scene.width; ++x) {
                    const double dx2 = (x - kp.x) * (x - kp.x);
                    const float v = float(std::exp(-(dx2 + dy2) / denom));
                    auto& cell = pl[std::size_t(y) * scene.width + x];
                    if (v > cell) cell = v;
                }
            }
        }
    }
    return grid;
}

// First anchor-priority slot with a visible keypoint; occluded slots are the
// fallback; nullopt when the person has no labeled keypoint at all.
inline std::optional<int> select_anchor_keypoint(const PersonAnnotation& person,
                                                 const SkeletonSpec& skeleton) {
    for (int want : {kVisible, kOccluded}) {
        for (int slot : skeleton.anchor_priority) {
            if (slot < int(person.keypoints.size()) &&
                person.keypoints[std::size_t(slot)].visibility == want)
                return slot;
        }
    }
    return std::nullopt;
}

// One instance after overlap resolution: the pixels it owns, its clustering
// target, and its margin width.
struct InstanceGeometry {
    std::size_t person_index = 0;
    int instance_id = 0;
    Bitmap pixels;             // claimed pixels (disjoint across instances)
    std::size_t pixel_count = 0;
    Vec2 mask_centroid;        // geometric centroid of the claimed pixels
    Vec2 target;               // clustering target per centroid mode
    double sigma = 0.0;
    int anchor_slot = -1;      // -1 when static mode or dynamic fallback
    bool dynamic_fallback = false;
};

// Resolves overlapping ground-truth masks (lowest instance id claims a
// contested pixel) and derives per-instance clustering targets and sigmas.
// Instances whose masks resolve empty are dropped.
inline std::vector<InstanceGeometry> resolve_instances(const SceneAnnotation& scene,
                                                       const SkeletonSpec& skeleton,
                                                       const EncodeConfig& cfg) {
    std::vector<std::size_t> order(scene.persons.size());
    std::iota(order.begin(), order.end(), std::size_t(0));
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scene.persons[a].instance_id < scene.persons[b].instance_id;
    });

    Bitmap claimed(scene.height, scene.width);
    std::vector<InstanceGeometry> out;
    for (std::size_t pi : order) {
        const PersonAnnotation& person = scene.persons[pi];
        InstanceGeometry inst;
        inst.person_index = pi;
        inst.instance_id = person.instance_id;
        inst.pixels = Bitmap(scene.height, scene.width);
        double sum_x = 0.0, sum_y = 0.0;
        for (int y = 0; y < scene.height; ++y) {
            for (int x = 0; x < scene.width; ++x) {
                if (!person.mask.at(y, x) || claimed.at(y, x)) continue;
                inst.pixels.set(y, x);
                claimed.set(y, x);
                sum_x += x;
                sum_y += y;
                ++inst.pixel_count;
            }
        }
        if (inst.pixel_count == 0) continue;

        const double n = double(inst.pixel_count);
        inst.mask_centroid = {sum_x / n, sum_y / n};
        // Half the equivalent-circle radius, floored at disk_radius / 2, so
        // the half-maximum margin contour falls near the instance boundary.
        inst.sigma = std::max(cfg.disk_radius / 2.0, 0.5 * std::sqrt(n / 3.14159265358979323846));

        inst.target = inst.mask_centroid;
        if (cfg.centroid_mode == CentroidMode::kDynamic) {
            if (auto slot = select_anchor_keypoint(person, skeleton)) {
                inst.anchor_slot = *slot;
                inst.target = person.keypoints[std::size_t(*slot)].pos();
            } else {
                inst.dynamic_fallback = true;
            }
        }
        out.push_back(std::move(inst));
    }
    return out;
}

// Clustering ground truth: per instance pixel the offset to its clustering
// target (so pixel + offset lands on the target, in raw pixel units), a seed
// mark at the target's lattice pixel, the instance sigma, and the instance
// id (background stays 0 everywhere). Dynamic instances with no labeled
// keypoint fall back to the geometric centroid and are reported in
// `warnings` when provided.
inline FieldGrid encode_maskcentroid(const SceneAnnotation& scene, const SkeletonSpec& skeleton,
                                     const EncodeConfig& cfg,
                                     std::vector<std::string>* warnings = nullptr) {
    cfg.validate();
    scene.validate(skeleton);
    FieldGrid grid(scene.height, scene.width, channel::maskcentroid());
    auto off_x = grid.plane(0);
    auto off_y = grid.plane(1);
    auto seed = grid.plane(2);
    auto sigma = grid.plane(3);
    auto iid = grid.plane(4);

    for (const auto& inst : resolve_instances(scene, skeleton, cfg)) {
        if (inst.dynamic_fallback && warnings)
            warnings->push_back("instance " + std::to_string(inst.instance_id) +
                                ": no labeled keypoint, fell back to static centroid");
        for (int y = 0; y < scene.height; ++y) {
            for (int x = 0; x < scene.width; ++x) {
                if (!inst.pixels.at(y, x)) continue;
                const std::size_t idx = std::size_t(y) * scene.width + x;
                off_x[idx] = float(inst.target.x - x);
                off_y[idx] = float(inst.target.y - y);
                sigma[idx] = float(inst.sigma);
                iid[idx] = float(inst.instance_id);
            }
        }
        const int sx = std::clamp(int(std::lround(inst.target.x)), 0, scene.width - 1);
        const int sy = std::clamp(int(std::lround(inst.target.y)), 0, scene.height - 1);
        seed[std::size_t(sy) * scene.width + sx] = 1.0f;
    }
    return grid;
}

inline EncodedFields encode_fields(const SceneAnnotation& scene, const SkeletonSpec& skeleton,
                                   const EncodeConfig& cfg,
                                   std::vector<std::string>* warnings = nullptr) {
    return {encode_heatmaps(scene, skeleton, cfg), encode_keycentroid(scene, skeleton, cfg),
            encode_maskcentroid(scene, skeleton, cfg, warnings)};
}

} // namespace vcf
