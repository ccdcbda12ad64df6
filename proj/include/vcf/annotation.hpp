#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "vcf/bitmap.hpp"
#include "vcf/error.hpp"
#include "vcf/geometry.hpp"
#include "vcf/skeleton.hpp"

namespace vcf {

enum Visibility : int {
    kAbsent = 0,   // not annotated / off canvas
    kOccluded = 1, // labeled but covered
    kVisible = 2
};

struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    int visibility = kAbsent;

    Vec2 pos() const { return {x, y}; }
    bool labeled() const { return visibility > kAbsent; }
    bool operator==(const Keypoint&) const = default;
};

struct PersonAnnotation {
    int instance_id = 0;
    std::vector<Keypoint> keypoints; // one slot per skeleton keypoint
    Bitmap mask;                     // visible instance pixels

    bool operator==(const PersonAnnotation&) const = default;
};

// Ground-truth scene: canvas plus per-person keypoints and instance masks.
struct SceneAnnotation {
    int width = 0;
    int height = 0;
    std::vector<PersonAnnotation> persons;

    bool operator==(const SceneAnnotation&) const = default;

    void validate(const SkeletonSpec& skeleton = coco17()) const {
        if (width <= 0 || height <= 0)
            throw schema_error("SceneAnnotation: canvas must be positive");
        for (const auto& person : persons) {
            if (int(person.keypoints.size()) != skeleton.size())
                throw schema_error("SceneAnnotation: person has " +
                                   std::to_string(person.keypoints.size()) +
                                   " keypoint slots, skeleton has " +
                                   std::to_string(skeleton.size()));
            bool any_labeled = false;
            for (const auto& kp : person.keypoints) {
                if (kp.visibility < kAbsent || kp.visibility > kVisible)
                    throw schema_error("SceneAnnotation: visibility out of range");
                if (kp.labeled()) {
                    any_labeled = true;
                    if (kp.x < 0 || kp.x > width - 1 || kp.y < 0 || kp.y > height - 1)
                        throw schema_error("SceneAnnotation: labeled keypoint outside canvas");
                }
            }
            if (person.mask.height() != height || person.mask.width() != width)
                throw schema_error("SceneAnnotation: mask canvas mismatch");
            if (any_labeled && person.mask.empty())
                throw schema_error("SceneAnnotation: labeled person with empty mask");
        }
    }
};

// Parses the annotation JSON schema:
// {"width":int,"height":int,"persons":[{"instance_id":int,
//   "keypoints":[[x,y,v],...],"mask_rle":[int,...]}]}
// mask_rle alternates zero-run/one-run counts starting with zeros, row-major.
inline SceneAnnotation read_annotations(const std::string& text,
                                        const SkeletonSpec& skeleton = coco17()) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("read_annotations: ") + e.what());
    }
    try {
        SceneAnnotation scene;
        scene.width = doc.at("width").get<int>();
        scene.height = doc.at("height").get<int>();
        for (const auto& p : doc.at("persons")) {
            PersonAnnotation person;
            person.instance_id = p.at("instance_id").get<int>();
            const auto& kps = p.at("keypoints");
            if (int(kps.size()) != skeleton.size())
                throw schema_error("read_annotations: expected " +
                                   std::to_string(skeleton.size()) + " keypoints, got " +
                                   std::to_string(kps.size()));
            for (const auto& t : kps) {
                if (!t.is_array() || t.size() != 3)
                    throw schema_error("read_annotations: keypoint must be [x, y, v]");
                person.keypoints.push_back(
                    {t[0].get<double>(), t[1].get<double>(), t[2].get<int>()});
            }
            person.mask = Bitmap::from_rle(scene.height, scene.width,
                                           p.at("mask_rle").get<std::vector<std::int64_t>>());
            scene.persons.push_back(std::move(person));
        }
        scene.validate(skeleton);
        return scene;
    } catch (const nlohmann::json::exception& e) {
        throw schema_error(std::string("read_annotations: ") + e.what());
    }
}

inline std::string write_annotations(const SceneAnnotation& scene) {
    nlohmann::ordered_json doc;
    doc["width"] = scene.width;
    doc["height"] = scene.height;
    doc["persons"] = nlohmann::ordered_json::array();
    for (const auto& person : scene.persons) {
        nlohmann::ordered_json p;
        p["instance_id"] = person.instance_id;
        p["keypoints"] = nlohmann::ordered_json::array();
        for (const auto& kp : person.keypoints)
            p["keypoints"].push_back({kp.x, kp.y, kp.visibility});
        p["mask_rle"] = person.mask.to_rle();
        doc["persons"].push_back(std::move(p));
    }
    return doc.dump();
}

} // namespace vcf
