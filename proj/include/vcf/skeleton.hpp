#pragma once

#include <array>
#include <string>
#include <vector>

#include "vcf/error.hpp"

namespace vcf {

// Keypoint layout shared by encoder, decoder and evaluation.
struct SkeletonSpec {
    std::vector<std::string> keypoint_names;
    // Per-keypoint falloff constant k_i of the keypoint-similarity kernel
    // exp(-d^2 / (2 * area * k_i^2)). COCO publishes k_i = 2 * sigma_i.
    std::vector<double> oks_falloff;
    // Slot indices in the order they are tried when picking an instance's
    // clustering anchor. Torso joints first: they stay put under limb motion.
    std::vector<int> anchor_priority;
    // Joint index pairs used for rendering and figure synthesis.
    std::vector<std::pair<int, int>> bones;

    int size() const { return int(keypoint_names.size()); }

    int index_of(const std::string& name) const {
        for (int i = 0; i < size(); ++i)
            if (keypoint_names[i] == name) return i;
        throw schema_error("SkeletonSpec: unknown keypoint '" + name + "'");
    }

    void validate() const {
        if (keypoint_names.empty())
            throw schema_error("SkeletonSpec: no keypoints");
        if (oks_falloff.size() != keypoint_names.size())
            throw schema_error("SkeletonSpec: falloff count != keypoint count");
        std::vector<bool> seen(keypoint_names.size(), false);
        for (int idx : anchor_priority) {
            if (idx < 0 || idx >= size())
                throw schema_error("SkeletonSpec: anchor priority index out of range");
            if (seen[std::size_t(idx)])
                throw schema_error("SkeletonSpec: anchor priority repeats an index");
            seen[std::size_t(idx)] = true;
        }
        for (auto [a, b] : bones)
            if (a < 0 || a >= size() || b < 0 || b >= size())
                throw schema_error("SkeletonSpec: bone index out of range");
    }
};

// COCO keypoint slots.
enum CocoKeypoint : int {
    kNose = 0,
    kLeftEye = 1,
    kRightEye = 2,
    kLeftEar = 3,
    kRightEar = 4,
    kLeftShoulder = 5,
    kRightShoulder = 6,
    kLeftElbow = 7,
    kRightElbow = 8,
    kLeftWrist = 9,
    kRightWrist = 10,
    kLeftHip = 11,
    kRightHip = 12,
    kLeftKnee = 13,
    kRightKnee = 14,
    kLeftAnkle = 15,
    kRightAnkle = 16
};

// The standard 17-keypoint person skeleton with COCO falloff constants.
inline const SkeletonSpec& coco17() {
    static const SkeletonSpec spec = [] {
        SkeletonSpec s;
        s.keypoint_names = {
            "nose",          "left_eye",      "right_eye",  "left_ear",    "right_ear",
            "left_shoulder", "right_shoulder", "left_elbow", "right_elbow", "left_wrist",
            "right_wrist",   "left_hip",      "right_hip",  "left_knee",   "right_knee",
            "left_ankle",    "right_ankle"};
        // k_i = 2 * sigma_i with the published COCO sigmas.
        s.oks_falloff = {0.052, 0.050, 0.050, 0.070, 0.070, 0.158, 0.158, 0.144, 0.144,
                         0.124, 0.124, 0.214, 0.214, 0.174, 0.174, 0.178, 0.178};
        s.anchor_priority = {kLeftHip,  kRightHip, kLeftShoulder, kRightShoulder, kNose,
                             kLeftEye,  kRightEye, kLeftEar,      kRightEar,      kLeftElbow,
                             kRightElbow, kLeftWrist, kRightWrist, kLeftKnee,     kRightKnee,
                             kLeftAnkle, kRightAnkle};
        s.bones = {{kLeftAnkle, kLeftKnee},     {kLeftKnee, kLeftHip},
                   {kRightAnkle, kRightKnee},   {kRightKnee, kRightHip},
                   {kLeftHip, kRightHip},       {kLeftShoulder, kLeftHip},
                   {kRightShoulder, kRightHip}, {kLeftShoulder, kRightShoulder},
                   {kLeftShoulder, kLeftElbow}, {kRightShoulder, kRightElbow},
                   {kLeftElbow, kLeftWrist},    {kRightElbow, kRightWrist},
                   {kLeftEye, kRightEye},       {kNose, kLeftEye},
                   {kNose, kRightEye},          {kLeftEye, kLeftEar},
                   {kRightEye, kRightEar},      {kLeftEar, kLeftShoulder},
                   {kRightEar, kRightShoulder}};
        s.validate();
        return s;
    }();
    return spec;
}

} // namespace vcf
