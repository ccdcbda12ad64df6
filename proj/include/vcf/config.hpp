#pragma once

#include <string>

#include <json.hpp>

#include "vcf/error.hpp"

namespace vcf {

enum class GaussianDenominator {
    kRadiusSquared, // exp(-d^2 / R^2): unit response decays to e^-1 at the disk edge
    kRadiusRaw      // exp(-d^2 / R)
};

enum class CentroidMode {
    kStatic, // geometric centroid of the instance pixels
    kDynamic // highest-priority visible keypoint
};

// Ground-truth encoding tunables.
struct EncodeConfig {
    double disk_radius = 32.0;
    GaussianDenominator gaussian_denominator = GaussianDenominator::kRadiusSquared;
    bool normalize_offsets = true; // divide keypoint offsets by disk_radius
    CentroidMode centroid_mode = CentroidMode::kDynamic;

    void validate() const {
        if (!(disk_radius > 0.0)) throw domain_error("EncodeConfig: disk_radius must be > 0");
    }
};

enum class SigmaMode {
    kPerPixel, // each pixel scored with its own sigma-channel value
    kInstance  // every pixel scored with sigma at the anchor's pixel
};

// Decoding tunables. disk_radius and normalize_offsets must match the
// encoder (or upstream network head) that produced the fields.
struct DecodeConfig {
    double heatmap_threshold = 0.01;
    double nms_radius = 16.0; // disk_radius / 2
    double phi_threshold = 0.5;
    int min_instance_pixels = 64;
    int max_instances = 30;
    double candidate_score_threshold = 0.1;
    double disk_radius = 32.0;
    bool normalize_offsets = true;
    SigmaMode sigma_mode = SigmaMode::kPerPixel;
    // When false, pixels vote at their own position: plain heatmap peaks
    // with no offset aggregation (the degraded mode the ablation compares).
    bool use_offset_voting = true;

    void validate() const {
        if (!(nms_radius > 0.0)) throw domain_error("DecodeConfig: nms_radius must be > 0");
        if (!(disk_radius > 0.0)) throw domain_error("DecodeConfig: disk_radius must be > 0");
        if (!(heatmap_threshold > 0.0 && heatmap_threshold < 1.0))
            throw domain_error("DecodeConfig: heatmap_threshold must be in (0,1)");
        if (!(phi_threshold > 0.0 && phi_threshold < 1.0))
            throw domain_error("DecodeConfig: phi_threshold must be in (0,1)");
        if (!(candidate_score_threshold > 0.0 && candidate_score_threshold < 1.0))
            throw domain_error("DecodeConfig: candidate_score_threshold must be in (0,1)");
        if (min_instance_pixels < 1) throw domain_error("DecodeConfig: min_instance_pixels must be >= 1");
        if (max_instances < 1) throw domain_error("DecodeConfig: max_instances must be >= 1");
    }
};

inline std::string to_string(GaussianDenominator m) {
    return m == GaussianDenominator::kRadiusSquared ? "r_squared" : "r_raw";
}

inline std::string to_string(CentroidMode m) {
    return m == CentroidMode::kStatic ? "static" : "dynamic";
}

inline std::string to_string(SigmaMode m) {
    return m == SigmaMode::kPerPixel ? "per_pixel" : "instance";
}

inline GaussianDenominator gaussian_denominator_from_string(const std::string& s) {
    if (s == "r_squared") return GaussianDenominator::kRadiusSquared;
    if (s == "r_raw") return GaussianDenominator::kRadiusRaw;
    throw domain_error("unknown gaussian denominator mode '" + s + "'");
}

inline CentroidMode centroid_mode_from_string(const std::string& s) {
    if (s == "static") return CentroidMode::kStatic;
    if (s == "dynamic") return CentroidMode::kDynamic;
    throw domain_error("unknown centroid mode '" + s + "'");
}

inline SigmaMode sigma_mode_from_string(const std::string& s) {
    if (s == "per_pixel") return SigmaMode::kPerPixel;
    if (s == "instance") return SigmaMode::kInstance;
    throw domain_error("unknown sigma mode '" + s + "'");
}

inline nlohmann::ordered_json to_json(const EncodeConfig& c) {
    return {{"disk_radius", c.disk_radius},
            {"gaussian_denominator", to_string(c.gaussian_denominator)},
            {"normalize_offsets", c.normalize_offsets},
            {"centroid_mode", to_string(c.centroid_mode)}};
}

inline nlohmann::ordered_json to_json(const DecodeConfig& c) {
    return {{"heatmap_threshold", c.heatmap_threshold},
            {"nms_radius", c.nms_radius},
            {"phi_threshold", c.phi_threshold},
            {"min_instance_pixels", c.min_instance_pixels},
            {"max_instances", c.max_instances},
            {"candidate_score_threshold", c.candidate_score_threshold},
            {"disk_radius", c.disk_radius},
            {"normalize_offsets", c.normalize_offsets},
            {"sigma_mode", to_string(c.sigma_mode)},
            {"use_offset_voting", c.use_offset_voting}};
}

inline EncodeConfig encode_config_from_json(const nlohmann::json& j) {
    EncodeConfig c;
    c.disk_radius = j.at("disk_radius").get<double>();
    c.gaussian_denominator =
        gaussian_denominator_from_string(j.at("gaussian_denominator").get<std::string>());
    c.normalize_offsets = j.at("normalize_offsets").get<bool>();
    c.centroid_mode = centroid_mode_from_string(j.at("centroid_mode").get<std::string>());
    c.validate();
    return c;
}

inline DecodeConfig decode_config_from_json(const nlohmann::json& j) {
    DecodeConfig c;
    c.heatmap_threshold = j.at("heatmap_threshold").get<double>();
    c.nms_radius = j.at("nms_radius").get<double>();
    c.phi_threshold = j.at("phi_threshold").get<double>();
    c.min_instance_pixels = j.at("min_instance_pixels").get<int>();
    c.max_instances = j.at("max_instances").get<int>();
    c.candidate_score_threshold = j.at("candidate_score_threshold").get<double>();
    c.disk_radius = j.at("disk_radius").get<double>();
    c.normalize_offsets = j.at("normalize_offsets").get<bool>();
    c.sigma_mode = sigma_mode_from_string(j.at("sigma_mode").get<std::string>());
    c.use_offset_voting = j.at("use_offset_voting").get<bool>();
    c.validate();
    return c;
}

} // namespace vcf
