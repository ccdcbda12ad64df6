#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vcf/annotation.hpp"
#include "vcf/config.hpp"
#include "vcf/encode.hpp"
#include "vcf/error.hpp"
#include "vcf/field_grid.hpp"
#include "vcf/skeleton.hpp"

namespace vcf {

// Probability clamp for every log in this module: keeps losses finite
// without visibly biasing them at float32 precision.
inline constexpr double kLossEpsilon = 1e-7;

struct LossWeights {
    double heatmap = 4.0;
    double keycentroid = 1.0;
    double maskcentroid = 1.0;
};

struct LossReport {
    double value = 0.0;
    double heatmap_term = 0.0;
    double keycentroid_term = 0.0;
    double maskcentroid_term = 0.0;
    LossWeights weights;
};

inline nlohmann::ordered_json to_json(const LossReport& r) {
    return {{"value", r.value},
            {"terms",
             {{"heatmap", r.heatmap_term},
              {"keycentroid", r.keycentroid_term},
              {"maskcentroid", r.maskcentroid_term}}},
            {"weights",
             {{"heatmap", r.weights.heatmap},
              {"keycentroid", r.weights.keycentroid},
              {"maskcentroid", r.weights.maskcentroid}}}};
}

// Mean binary cross-entropy between predicted probabilities and binary
// targets over every pixel and channel. Reduction order is fixed
// (channel-major, row-major) so values are bit-reproducible.
inline double heatmap_loss(const FieldGrid& pred, const FieldGrid& target) {
    if (pred.height() != target.height() || pred.width() != target.width() ||
        pred.channel_count() != target.channel_count())
        throw schema_error("heatmap_loss: shape mismatch");
    const auto p = pred.data();
    const auto t = target.data();
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double q = std::clamp(double(p[i]), kLossEpsilon, 1.0 - kLossEpsilon);
        const double y = t[i];
        sum += y * std::log(q) + (1.0 - y) * std::log(1.0 - q);
    }
    return -sum / double(p.size());
}

// d(heatmap_loss)/d(pred), zero where the clamp is active.
inline FieldGrid heatmap_loss_gradient(const FieldGrid& pred, const FieldGrid& target) {
    if (pred.height() != target.height() || pred.width() != target.width() ||
        pred.channel_count() != target.channel_count())
        throw schema_error("heatmap_loss_gradient: shape mismatch");
    FieldGrid grad(pred.height(), pred.width(), pred.channel_names());
    const auto p = pred.data();
    const auto t = target.data();
    auto g = grad.data();
    const double inv_n = 1.0 / double(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double q = p[i];
        if (q <= kLossEpsilon || q >= 1.0 - kLossEpsilon) continue;
        g[i] = float(-inv_n * (t[i] / q - (1.0 - t[i]) / (1.0 - q)));
    }
    return grad;
}

namespace detail {

// A pixel participates in the offset regression when its response weight is
// meaningful and the target offset pair is active (nonzero).
inline bool keycentroid_active(float w, float tdx, float tdy) {
    return w > 1e-6f && (tdx != 0.0f || tdy != 0.0f);
}

} // namespace detail

// Response-weighted L2 offset regression, restricted to pixels inside
// keypoint disks: sum w * |pred - target|^2 / sum w.
inline double keycentroid_loss(const FieldGrid& pred, const FieldGrid& target,
                               const FieldGrid& weight) {
    if (!target.same_shape(pred) || pred.height() != weight.height() ||
        pred.width() != weight.width())
        throw schema_error("keycentroid_loss: shape mismatch");
    if (pred.channel_count() != 2 * weight.channel_count())
        throw schema_error("keycentroid_loss: offsets must have two channels per weight channel");

    double num = 0.0, den = 0.0;
    for (int j = 0; j < weight.channel_count(); ++j) {
        auto w = weight.plane(j);
        auto pdx = pred.plane(2 * j), pdy = pred.plane(2 * j + 1);
        auto tdx = target.plane(2 * j), tdy = target.plane(2 * j + 1);
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (!detail::keycentroid_active(w[i], tdx[i], tdy[i])) continue;
            const double ex = double(pdx[i]) - double(tdx[i]);
            const double ey = double(pdy[i]) - double(tdy[i]);
            num += double(w[i]) * (ex * ex + ey * ey);
            den += double(w[i]);
        }
    }
    if (den <= 0.0) throw domain_error("keycentroid_loss: no active pixels (all-zero weight)");
    return num / den;
}

inline FieldGrid keycentroid_loss_gradient(const FieldGrid& pred, const FieldGrid& target,
                                           const FieldGrid& weight) {
    if (!target.same_shape(pred) || pred.channel_count() != 2 * weight.channel_count())
        throw schema_error("keycentroid_loss_gradient: shape mismatch");
    double den = 0.0;
    for (int j = 0; j < weight.channel_count(); ++j) {
        auto w = weight.plane(j);
        auto tdx = target.plane(2 * j), tdy = target.plane(2 * j + 1);
        for (std::size_t i = 0; i < w.size(); ++i)
            if (detail::keycentroid_active(w[i], tdx[i], tdy[i])) den += double(w[i]);
    }
    if (den <= 0.0) throw domain_error("keycentroid_loss_gradient: no active pixels");

    FieldGrid grad(pred.height(), pred.width(), pred.channel_names());
    for (int j = 0; j < weight.channel_count(); ++j) {
        auto w = weight.plane(j);
        auto pdx = pred.plane(2 * j), pdy = pred.plane(2 * j + 1);
        auto tdx = target.plane(2 * j), tdy = target.plane(2 * j + 1);
        auto gdx = grad.plane(2 * j), gdy = grad.plane(2 * j + 1);
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (!detail::keycentroid_active(w[i], tdx[i], tdy[i])) continue;
            gdx[i] = float(2.0 * double(w[i]) * (double(pdx[i]) - double(tdx[i])) / den);
            gdy[i] = float(2.0 * double(w[i]) * (double(pdy[i]) - double(tdy[i])) / den);
        }
    }
    return grad;
}

namespace detail {

struct MarginSample {
    int x, y;
    bool positive; // member of the instance
};

// Instance pixels plus an equal-size, deterministically subsampled ring of
// background pixels within 2 * disk_radius of the instance.
inline std::vector<MarginSample> margin_samples(const InstanceGeometry& inst,
                                                const Bitmap& any_instance, double disk_radius) {
    std::vector<MarginSample> samples;
    const int h = inst.pixels.height(), w = inst.pixels.width();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (inst.pixels.at(y, x)) samples.push_back({x, y, true});

    const auto dist2 = squared_distance_transform(inst.pixels);
    const double reach2 = 4.0 * disk_radius * disk_radius;
    std::vector<MarginSample> ring;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double d2 = dist2[std::size_t(y) * w + x];
            if (d2 > 0.0 && d2 <= reach2 && !any_instance.at(y, x))
                ring.push_back({x, y, false});
        }
    const std::size_t want = std::min(samples.size(), ring.size());
    for (std::size_t i = 0; i < want; ++i)
        samples.push_back(ring[i * ring.size() / want]);
    return samples;
}

} // namespace detail

// Margin-classification loss for the clustering fields: per instance,
// binary cross-entropy between the Gaussian margin of each predicted
// embedding (pixel + predicted offset, with the instance's mean predicted
// sigma) and the membership indicator, evaluated over the instance pixels
// plus a bounded background ring; averaged over instances.
inline double maskcentroid_loss(const FieldGrid& pred_offsets, const FieldGrid& pred_sigma,
                                const SceneAnnotation& scene, const SkeletonSpec& skeleton,
                                const EncodeConfig& cfg) {
    cfg.validate();
    if (pred_offsets.channel_count() != 2 || pred_sigma.channel_count() != 1 ||
        pred_offsets.height() != pred_sigma.height() || pred_offsets.width() != pred_sigma.width() ||
        pred_offsets.height() != scene.height || pred_offsets.width() != scene.width)
        throw schema_error("maskcentroid_loss: shape mismatch");

    const auto instances = resolve_instances(scene, skeleton, cfg);
    if (instances.empty()) throw domain_error("maskcentroid_loss: no instances in scene");

    Bitmap any_instance(scene.height, scene.width);
    for (const auto& inst : instances) any_instance.unite(inst.pixels);

    auto vx = pred_offsets.plane(0);
    auto vy = pred_offsets.plane(1);
    auto sg = pred_sigma.plane(0);
    const int w = scene.width;

    double total = 0.0;
    for (const auto& inst : instances) {
        double sigma_sum = 0.0;
        for (int y = 0; y < scene.height; ++y)
            for (int x = 0; x < w; ++x)
                if (inst.pixels.at(y, x)) sigma_sum += sg[std::size_t(y) * w + x];
        const double sigma_mean = sigma_sum / double(inst.pixel_count);
        if (!(sigma_mean > 0.0))
            throw domain_error("maskcentroid_loss: non-positive mean sigma for instance " +
                               std::to_string(inst.instance_id));

        const auto samples = detail::margin_samples(inst, any_instance, cfg.disk_radius);
        double bce = 0.0;
        for (const auto& s : samples) {
            const std::size_t idx = std::size_t(s.y) * w + s.x;
            const double ex = s.x + double(vx[idx]) - inst.target.x;
            const double ey = s.y + double(vy[idx]) - inst.target.y;
            const double margin =
                std::clamp(std::exp(-(ex * ex + ey * ey) / (2.0 * sigma_mean * sigma_mean)),
                           kLossEpsilon, 1.0 - kLossEpsilon);
            bce -= s.positive ? std::log(margin) : std::log(1.0 - margin);
        }
        total += bce / double(samples.size());
    }
    return total / double(instances.size());
}

struct MaskCentroidGradient {
    FieldGrid offsets; // d loss / d pred_offsets
    FieldGrid sigma;   // d loss / d pred_sigma
};

inline MaskCentroidGradient maskcentroid_loss_gradient(const FieldGrid& pred_offsets,
                                                       const FieldGrid& pred_sigma,
                                                       const SceneAnnotation& scene,
                                                       const SkeletonSpec& skeleton,
                                                       const EncodeConfig& cfg) {
    cfg.validate();
    const auto instances = resolve_instances(scene, skeleton, cfg);
    if (instances.empty()) throw domain_error("maskcentroid_loss_gradient: no instances in scene");

    Bitmap any_instance(scene.height, scene.width);
    for (const auto& inst : instances) any_instance.unite(inst.pixels);

    MaskCentroidGradient grad{FieldGrid(pred_offsets.height(), pred_offsets.width(),
                                        pred_offsets.channel_names()),
                              FieldGrid(pred_sigma.height(), pred_sigma.width(),
                                        pred_sigma.channel_names())};
    auto vx = pred_offsets.plane(0);
    auto vy = pred_offsets.plane(1);
    auto sg = pred_sigma.plane(0);
    auto gx = grad.offsets.plane(0);
    auto gy = grad.offsets.plane(1);
    auto gs = grad.sigma.plane(0);
    const int w = scene.width;
    const double inv_instances = 1.0 / double(instances.size());

    for (const auto& inst : instances) {
        double sigma_sum = 0.0;
        for (int y = 0; y < scene.height; ++y)
            for (int x = 0; x < w; ++x)
                if (inst.pixels.at(y, x)) sigma_sum += sg[std::size_t(y) * w + x];
        const double sigma_mean = sigma_sum / double(inst.pixel_count);
        if (!(sigma_mean > 0.0))
            throw domain_error("maskcentroid_loss_gradient: non-positive mean sigma");

        const auto samples = detail::margin_samples(inst, any_instance, cfg.disk_radius);
        const double pixel_weight = inv_instances / double(samples.size());
        double sigma_mean_grad = 0.0;
        for (const auto& s : samples) {
            const std::size_t idx = std::size_t(s.y) * w + s.x;
            const double ex = s.x + double(vx[idx]) - inst.target.x;
            const double ey = s.y + double(vy[idx]) - inst.target.y;
            const double d2 = ex * ex + ey * ey;
            const double margin = std::exp(-d2 / (2.0 * sigma_mean * sigma_mean));
            if (margin <= kLossEpsilon || margin >= 1.0 - kLossEpsilon) continue;
            // d(BCE)/d(margin), then chain into offsets and mean sigma.
            const double dl_dmargin =
                s.positive ? -1.0 / margin : 1.0 / (1.0 - margin);
            const double dmargin_scale = -margin / (sigma_mean * sigma_mean);
            gx[idx] += float(pixel_weight * dl_dmargin * dmargin_scale * ex);
            gy[idx] += float(pixel_weight * dl_dmargin * dmargin_scale * ey);
            sigma_mean_grad +=
                pixel_weight * dl_dmargin * margin * d2 / (sigma_mean * sigma_mean * sigma_mean);
        }
        // Mean-sigma gradient spreads uniformly over the instance pixels.
        const float spread = float(sigma_mean_grad / double(inst.pixel_count));
        for (int y = 0; y < scene.height; ++y)
            for (int x = 0; x < w; ++x)
                if (inst.pixels.at(y, x)) gs[std::size_t(y) * w + x] += spread;
    }
    return grad;
}

// Weighted sum of the three terms; targets are encoded from the scene.
inline LossReport combined_loss(const EncodedFields& pred, const SceneAnnotation& scene,
                                const SkeletonSpec& skeleton, const EncodeConfig& cfg,
                                const LossWeights& weights = {}) {
    if (weights.heatmap < 0 || weights.keycentroid < 0 || weights.maskcentroid < 0 ||
        (weights.heatmap == 0 && weights.keycentroid == 0 && weights.maskcentroid == 0))
        throw domain_error("combined_loss: weights must be nonnegative and not all zero");

    const FieldGrid target_hm = encode_heatmaps(scene, skeleton, cfg);
    const FieldGrid target_kc = encode_keycentroid(scene, skeleton, cfg);
    const FieldGrid weight = encode_response_weights(scene, skeleton, cfg);

    FieldGrid offsets(pred.maskcentroid.height(), pred.maskcentroid.width(),
                      {"mc/off_x", "mc/off_y"});
    FieldGrid sigma(pred.maskcentroid.height(), pred.maskcentroid.width(), {"mc/sigma"});
    {
        auto src_x = pred.maskcentroid.plane(pred.maskcentroid.require_channel("mc/off_x"));
        auto src_y = pred.maskcentroid.plane(pred.maskcentroid.require_channel("mc/off_y"));
        auto src_s = pred.maskcentroid.plane(pred.maskcentroid.require_channel("mc/sigma"));
        std::copy(src_x.begin(), src_x.end(), offsets.plane(0).begin());
        std::copy(src_y.begin(), src_y.end(), offsets.plane(1).begin());
        std::copy(src_s.begin(), src_s.end(), sigma.plane(0).begin());
    }

    LossReport report;
    report.weights = weights;
    report.heatmap_term = heatmap_loss(pred.heatmaps, target_hm);
    report.keycentroid_term = keycentroid_loss(pred.keycentroid, target_kc, weight);
    report.maskcentroid_term = maskcentroid_loss(offsets, sigma, scene, skeleton, cfg);
    report.value = weights.heatmap * report.heatmap_term +
                   weights.keycentroid * report.keycentroid_term +
                   weights.maskcentroid * report.maskcentroid_term;
    return report;
}

// Central-difference gradient of an arbitrary scalar function of one grid.
// The verification harness for the analytic gradients above. Divides by the
// realized float32 interval, not the requested step: the perturbed values
// round to the storage precision and the nominal 2h would mis-scale the
// quotient by the rounding error.
inline FieldGrid numeric_gradient(const std::function<double(const FieldGrid&)>& fn,
                                  const FieldGrid& grid, double step) {
    if (!(step > 0.0)) throw domain_error("numeric_gradient: step must be positive");
    FieldGrid probe = grid;
    FieldGrid grad(grid.height(), grid.width(), grid.channel_names());
    auto p = probe.data();
    auto g = grad.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const float saved = p[i];
        const float plus = float(double(saved) + step);
        const float minus = float(double(saved) - step);
        p[i] = plus;
        const double up = fn(probe);
        p[i] = minus;
        const double down = fn(probe);
        p[i] = saved;
        const double realized = double(plus) - double(minus);
        g[i] = realized != 0.0 ? float((up - down) / realized) : 0.0f;
    }
    return grad;
}

} // namespace vcf
