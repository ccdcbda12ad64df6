#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "vcf/decode.hpp"
#include "vcf/encode.hpp"
#include "vcf/metrics.hpp"
#include "vcf/rng.hpp"
#include "vcf/synth.hpp"

using namespace vcf;

namespace {

FieldGrid zero_heatmaps(int h, int w) { return FieldGrid(h, w, channel::heatmap(coco17())); }
FieldGrid zero_offsets(int h, int w) { return FieldGrid(h, w, channel::keycentroid(coco17())); }

double plane_sum(const FieldGrid& g, int c) {
    double s = 0.0;
    for (float v : g.plane(c)) s += v;
    return s;
}

} // namespace

TEST_CASE("a single voter concentrates its mass at the target") {
    FieldGrid hm = zero_heatmaps(64, 64);
    FieldGrid kc = zero_offsets(64, 64);
    hm.at(kNose, 20, 20) = 1.0f;
    // offset (10.5, 4.25) in normalized units
    kc.at(0, 20, 20) = 10.5f / 32.0f;
    kc.at(1, 20, 20) = 4.25f / 32.0f;
    const FieldGrid votes = vote_keypoints(hm, kc, {});
    CHECK(plane_sum(votes, kNose) == Catch::Approx(1.0).margin(1e-9));
    // bilinear split of (30.5, 24.25)
    CHECK(votes.at(kNose, 24, 30) == Catch::Approx(0.5 * 0.75));
    CHECK(votes.at(kNose, 24, 31) == Catch::Approx(0.5 * 0.75));
    CHECK(votes.at(kNose, 25, 30) == Catch::Approx(0.5 * 0.25));
    CHECK(votes.at(kNose, 25, 31) == Catch::Approx(0.5 * 0.25));
}

TEST_CASE("all-zero heatmap produces an all-zero vote map") {
    const FieldGrid votes = vote_keypoints(zero_heatmaps(32, 32), zero_offsets(32, 32), {});
    for (float v : votes.data()) CHECK(v == 0.0f);
}

TEST_CASE("two half votes to the same cell accumulate to one") {
    FieldGrid hm = zero_heatmaps(64, 64);
    FieldGrid kc = zero_offsets(64, 64);
    hm.at(kNose, 10, 10) = 0.5f;
    hm.at(kNose, 10, 14) = 0.5f;
    kc.at(0, 10, 10) = 2.0f / 32.0f;  // both vote at (12, 10)
    kc.at(0, 10, 14) = -2.0f / 32.0f;
    const FieldGrid votes = vote_keypoints(hm, kc, {});
    CHECK(votes.at(kNose, 10, 12) == 1.0f);
    CHECK(plane_sum(votes, kNose) == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("vote mass is conserved under thresholding and border clamping") {
    Rng rng(99);
    FieldGrid hm = zero_heatmaps(48, 40);
    FieldGrid kc = zero_offsets(48, 40);
    for (auto& v : hm.data()) v = float(rng.uniform());
    for (auto& v : kc.data()) v = float(rng.uniform(-2.0, 2.0)); // many targets off canvas
    DecodeConfig cfg;
    const FieldGrid votes = vote_keypoints(hm, kc, cfg);
    for (int j = 0; j < 17; ++j) {
        double expected = 0.0;
        for (float v : hm.plane(j))
            if (v >= cfg.heatmap_threshold) expected += v;
        CHECK(plane_sum(votes, j) == Catch::Approx(expected).epsilon(1e-5));
        // no slot accumulates more than its own heatmap mass
        double full = 0.0;
        for (float v : hm.plane(j)) full += v;
        CHECK(plane_sum(votes, j) <= full + 1e-6);
    }
}

TEST_CASE("vote shape validation") {
    CHECK_THROWS_AS(vote_keypoints(zero_heatmaps(32, 32), zero_offsets(16, 32), {}),
                    schema_error);
    FieldGrid bad_kc(32, 32, {"kc/nose/dx"});
    CHECK_THROWS_AS(vote_keypoints(zero_heatmaps(32, 32), bad_kc, {}), schema_error);
}

TEST_CASE("peak extraction and suppression") {
    DecodeConfig cfg;
    FieldGrid votes(64, 64, {"votes/nose"});

    SECTION("single isolated peak") {
        votes.at(0, 20, 30) = 2.0f;
        const auto peaks = nms_peaks(votes, cfg);
        REQUIRE(peaks.size() == 1);
        CHECK(peaks[0].slot == 0);
        CHECK(peaks[0].position.x == 30.0);
        CHECK(peaks[0].position.y == 20.0);
        CHECK(peaks[0].score == Catch::Approx(2.0 / 3.0));
    }
    SECTION("two peaks five pixels apart: one survives") {
        votes.at(0, 20, 30) = 2.0f;
        votes.at(0, 20, 35) = 1.5f;
        const auto peaks = nms_peaks(votes, cfg);
        REQUIRE(peaks.size() == 1);
        CHECK(peaks[0].position.x == Catch::Approx(30.0));
    }
    SECTION("equal masses tie-break to smaller y then x") {
        votes.at(0, 20, 30) = 2.0f;
        votes.at(0, 18, 32) = 2.0f;
        const auto peaks = nms_peaks(votes, cfg);
        REQUIRE(peaks.size() == 1);
        CHECK(peaks[0].position.y == Catch::Approx(18.0));
        CHECK(peaks[0].position.x == Catch::Approx(32.0));
    }
    SECTION("two peaks forty pixels apart both survive") {
        votes.at(0, 20, 10) = 2.0f;
        votes.at(0, 20, 50) = 1.5f;
        const auto peaks = nms_peaks(votes, cfg);
        REQUIRE(peaks.size() == 2);
        CHECK(peaks[0].position.x == Catch::Approx(10.0));
        CHECK(peaks[1].position.x == Catch::Approx(50.0));
        CHECK(peaks[0].score > peaks[1].score);
    }
    SECTION("sub-threshold neighborhoods are dropped") {
        votes.at(0, 20, 30) = 0.05f; // score 0.0476 < 0.1
        CHECK(nms_peaks(votes, cfg).empty());
    }
    SECTION("subpixel refinement recovers a bilinear-split target") {
        // mass 1 split for target (30.25, 20.75)
        votes.at(0, 20, 30) = 0.75f * 0.25f;
        votes.at(0, 20, 31) = 0.25f * 0.25f;
        votes.at(0, 21, 30) = 0.75f * 0.75f;
        votes.at(0, 21, 31) = 0.25f * 0.75f;
        const auto peaks = nms_peaks(votes, cfg);
        REQUIRE(peaks.size() == 1);
        CHECK(peaks[0].position.x == Catch::Approx(30.25).margin(1e-6));
        CHECK(peaks[0].position.y == Catch::Approx(20.75).margin(1e-6));
    }
}

TEST_CASE("margin function values") {
    CHECK(phi({10, 20}, {10, 20}, 5.0) == 1.0);
    const double sigma = 3.7;
    const double d = sigma * std::sqrt(2.0 * std::log(2.0));
    CHECK(phi({d, 0}, {0, 0}, sigma) == Catch::Approx(0.5).margin(1e-9));
    CHECK(phi({10.0 * sigma, 0}, {0, 0}, sigma) < 1e-21);
    CHECK_THROWS_AS(phi({0, 0}, {1, 1}, 0.0), domain_error);
    CHECK_THROWS_AS(phi({0, 0}, {1, 1}, -2.0), domain_error);
}

TEST_CASE("margin monotonicity over random pairs") {
    // Ranges chosen so the margin stays above the double underflow floor.
    Rng rng(1234);
    for (int i = 0; i < 1000; ++i) {
        const double sigma = rng.uniform(0.5, 50.0);
        const double d = sigma * rng.uniform(0.01, 8.0);
        const double step = sigma * rng.uniform(1e-4, 0.5);
        // strictly decreasing in distance at fixed sigma
        CHECK(phi({d + step, 0}, {0, 0}, sigma) < phi({d, 0}, {0, 0}, sigma));
        // strictly increasing in sigma at fixed positive distance
        CHECK(phi({d, 0}, {0, 0}, sigma + step) > phi({d, 0}, {0, 0}, sigma));
    }
}

namespace {

SceneAnnotation one_box_scene(int h, int w, int y0, int x0, int y1, int x1) {
    SceneAnnotation scene;
    scene.width = w;
    scene.height = h;
    PersonAnnotation person;
    person.instance_id = 1;
    person.keypoints.assign(17, {});
    person.keypoints[kLeftHip] = {double(x0 + x1) / 2.0, double(y0 + y1) / 2.0, kVisible};
    person.mask = Bitmap(h, w);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) person.mask.set(y, x);
    scene.persons.push_back(std::move(person));
    scene.validate();
    return scene;
}

} // namespace

TEST_CASE("clustering recovers an encoded instance exactly") {
    const auto scene = one_box_scene(96, 96, 20, 20, 50, 44);
    const FieldGrid mc = encode_maskcentroid(scene, coco17(), {});
    const Vec2 anchor = scene.persons[0].keypoints[kLeftHip].pos();

    SECTION("own anchor claims every pixel") {
        const auto clusters = cluster_instances(mc, {{anchor, 1.0}}, {});
        REQUIRE(clusters.size() == 1);
        CHECK(clusters[0].mask == scene.persons[0].mask);
        CHECK(clusters[0].mean_phi == Catch::Approx(1.0).margin(1e-6));
    }
    SECTION("anchor far from all embeddings claims nothing") {
        const auto clusters = cluster_instances(mc, {{{2.0, 2.0}, 1.0}}, {});
        CHECK(clusters.empty());
    }
    SECTION("empty anchor list is not an error") {
        CHECK(cluster_instances(mc, {}, {}).empty());
    }
    SECTION("undersized claims are released") {
        DecodeConfig cfg;
        cfg.min_instance_pixels = int(scene.persons[0].mask.count()) + 1;
        CHECK(cluster_instances(mc, {{anchor, 1.0}}, cfg).empty());
    }
}

TEST_CASE("two disjoint instances cluster without overlap") {
    SceneAnnotation scene = one_box_scene(128, 128, 10, 10, 40, 34);
    {
        PersonAnnotation second;
        second.instance_id = 2;
        second.keypoints.assign(17, {});
        second.keypoints[kLeftHip] = {100.0, 100.0, kVisible};
        second.mask = Bitmap(128, 128);
        for (int y = 85; y <= 115; ++y)
            for (int x = 88; x <= 112; ++x) second.mask.set(y, x);
        scene.persons.push_back(std::move(second));
        scene.validate();
    }
    const FieldGrid mc = encode_maskcentroid(scene, coco17(), {});
    const auto clusters = cluster_instances(
        mc,
        {{scene.persons[0].keypoints[kLeftHip].pos(), 0.9},
         {scene.persons[1].keypoints[kLeftHip].pos(), 0.8}},
        {});
    REQUIRE(clusters.size() == 2);
    CHECK(clusters[0].mask == scene.persons[0].mask);
    CHECK(clusters[1].mask == scene.persons[1].mask);
    CHECK(intersection_count(clusters[0].mask, clusters[1].mask) == 0);
}

TEST_CASE("assembly groups candidates by mask membership") {
    DecodeConfig cfg;
    Cluster a;
    a.mask = Bitmap(64, 64);
    for (int y = 10; y <= 30; ++y)
        for (int x = 10; x <= 30; ++x) a.mask.set(y, x);
    a.anchor = {{20.0, 20.0}, 1.0};
    Cluster b;
    b.mask = Bitmap(64, 64);
    for (int y = 40; y <= 60; ++y)
        for (int x = 40; x <= 60; ++x) b.mask.set(y, x);
    b.anchor = {{50.0, 50.0}, 0.9};
    const std::vector<Cluster> clusters = {a, b};

    SECTION("candidate inside exactly one mask is assigned there") {
        const auto out = assemble_instances({{kNose, {15.0, 12.0}, 0.7}}, clusters, coco17(), cfg);
        REQUIRE(out.size() == 2);
        CHECK(out[0].keypoints[kNose].present);
        CHECK(out[0].keypoints[kNose].x == 15.0);
        CHECK_FALSE(out[1].keypoints[kNose].present);
        CHECK(out[0].score == Catch::Approx(0.7));
        CHECK(out[1].score == 0.0); // mask-only instance is kept
    }
    SECTION("per slot the best-scoring candidate wins") {
        const auto out = assemble_instances(
            {{kNose, {15.0, 12.0}, 0.4}, {kNose, {16.0, 13.0}, 0.9}}, clusters, coco17(), cfg);
        CHECK(out[0].keypoints[kNose].score == 0.9);
        CHECK(out[0].keypoints[kNose].x == 16.0);
    }
    SECTION("candidate within the dilation ring is still assigned") {
        // 6 px outside mask a; dilation radius is disk_radius/4 = 8
        const auto out = assemble_instances({{kNose, {36.0, 20.0}, 0.7}}, clusters, coco17(), cfg);
        CHECK(out[0].keypoints[kNose].present);
    }
    SECTION("candidate outside every dilated mask is dropped") {
        const auto out = assemble_instances({{kNose, {5.0, 62.0}, 0.7}}, clusters, coco17(), cfg);
        CHECK_FALSE(out[0].keypoints[kNose].present);
        CHECK_FALSE(out[1].keypoints[kNose].present);
    }
}

namespace {

struct RoundTrip {
    SceneAnnotation scene;
    std::vector<DecodedInstance> instances;
};

RoundTrip run_round_trip(SynthConfig scfg) {
    const SceneAnnotation scene = generate_scene(scfg);
    const EncodedFields fields = encode_fields(scene, coco17(), {});
    DecodeConfig dcfg;
    return {scene,
            decode(fields.heatmaps, fields.keycentroid, fields.maskcentroid, coco17(), dcfg)};
}

// Worst keypoint position error over all persons, pairing each ground-truth
// person with the decoded instance of best mask IoU.
void check_round_trip(const RoundTrip& rt, double max_px, double min_iou) {
    REQUIRE(rt.instances.size() == rt.scene.persons.size());
    std::vector<int> used(rt.instances.size(), 0);
    for (const auto& person : rt.scene.persons) {
        int best = -1;
        double best_iou = -1.0;
        for (std::size_t i = 0; i < rt.instances.size(); ++i) {
            const double iou = mask_iou(rt.instances[i].mask, person.mask);
            if (iou > best_iou) {
                best_iou = iou;
                best = int(i);
            }
        }
        REQUIRE(best >= 0);
        CHECK_FALSE(used[std::size_t(best)]);
        used[std::size_t(best)] = 1;
        CHECK(best_iou >= min_iou);
        const auto& inst = rt.instances[std::size_t(best)];
        for (int j = 0; j < 17; ++j) {
            const auto& kp = person.keypoints[std::size_t(j)];
            if (!kp.labeled()) continue;
            REQUIRE(inst.keypoints[std::size_t(j)].present);
            const double err = std::hypot(inst.keypoints[std::size_t(j)].x - kp.x,
                                          inst.keypoints[std::size_t(j)].y - kp.y);
            CHECK(err <= max_px);
        }
    }
}

} // namespace

TEST_CASE("round trip: two-person non-overlapping scene") {
    SynthConfig scfg;
    scfg.person_count_min = scfg.person_count_max = 2;
    scfg.overlap_target = 0.0;
    scfg.rng_seed = 21;
    check_round_trip(run_round_trip(scfg), 1.0, 0.99);
}

TEST_CASE("round trip: three persons with overlap allowed") {
    SynthConfig scfg;
    scfg.person_count_min = scfg.person_count_max = 3;
    scfg.overlap_target = 0.3;
    scfg.rng_seed = 33;
    check_round_trip(run_round_trip(scfg), 1.0, 0.99);
}

TEST_CASE("all-zero field stack decodes to no instances") {
    FieldGrid mc(64, 64, channel::maskcentroid());
    const auto out = decode(zero_heatmaps(64, 64), zero_offsets(64, 64), mc, coco17(), {});
    CHECK(out.empty());
}

TEST_CASE("decode is deterministic and masks stay disjoint") {
    SynthConfig scfg;
    scfg.person_count_min = scfg.person_count_max = 3;
    scfg.rng_seed = 5;
    const SceneAnnotation scene = generate_scene(scfg);
    const EncodedFields fields = encode_fields(scene, coco17(), {});
    const auto a = decode(fields.heatmaps, fields.keycentroid, fields.maskcentroid, coco17(), {});
    const auto b = decode(fields.heatmaps, fields.keycentroid, fields.maskcentroid, coco17(), {});
    CHECK(a == b);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = i + 1; j < a.size(); ++j)
            CHECK(intersection_count(a[i].mask, a[j].mask) == 0);
    // anchor sits inside the mask bounding box dilated by disk_radius
    for (const auto& inst : a) {
        int x0 = 1 << 30, y0 = 1 << 30, x1 = -1, y1 = -1;
        for (int y = 0; y < inst.mask.height(); ++y)
            for (int x = 0; x < inst.mask.width(); ++x)
                if (inst.mask.at(y, x)) {
                    x0 = std::min(x0, x);
                    y0 = std::min(y0, y);
                    x1 = std::max(x1, x);
                    y1 = std::max(y1, y);
                }
        CHECK(inst.anchor.x >= x0 - 32.0);
        CHECK(inst.anchor.x <= x1 + 32.0);
        CHECK(inst.anchor.y >= y0 - 32.0);
        CHECK(inst.anchor.y <= y1 + 32.0);
    }
}

TEST_CASE("uniform heatmap scaling preserves candidate ranking") {
    // Isolated voters with well-separated probabilities per slot: the
    // ranking must survive any uniform scale factor in (0, 1].
    FieldGrid hm = zero_heatmaps(256, 256);
    FieldGrid kc = zero_offsets(256, 256);
    for (int slot = 0; slot < 17; ++slot) {
        for (int k = 0; k < 4; ++k) {
            const int x = 24 + 56 * k + slot;
            const int y = 24 + 13 * slot / 2;
            // a column of nine voters aimed at a shared target: enough mass
            // to stay above the candidate score threshold at every scale
            for (int dy = -4; dy <= 4; ++dy) {
                hm.at(slot, y + dy, x) = float(0.95 - 0.17 * k);
                kc.at(2 * slot + 1, y + dy, x) = float(-dy / 32.0);
            }
        }
    }
    DecodeConfig cfg;
    auto ranking = [&](const FieldGrid& heat) {
        std::vector<std::vector<std::pair<double, double>>> per_slot(17);
        auto peaks = nms_peaks(vote_keypoints(heat, kc, cfg), cfg);
        std::stable_sort(peaks.begin(), peaks.end(), [](const auto& a, const auto& b) {
            if (a.slot != b.slot) return a.slot < b.slot;
            return a.score > b.score;
        });
        for (const auto& p : peaks)
            per_slot[std::size_t(p.slot)].push_back({p.position.x, p.position.y});
        return per_slot;
    };

    const auto base = ranking(hm);
    for (int slot = 0; slot < 17; ++slot) REQUIRE(base[std::size_t(slot)].size() == 4);
    for (double c : {0.05, 0.3, 0.7, 1.0}) {
        FieldGrid scaled = hm;
        for (auto& v : scaled.data()) v = float(v * c);
        CHECK(ranking(scaled) == base);
    }
}

TEST_CASE("detections serialize and parse back") {
    SynthConfig scfg;
    scfg.person_count_min = scfg.person_count_max = 2;
    scfg.rng_seed = 13;
    const SceneAnnotation scene = generate_scene(scfg);
    const EncodedFields fields = encode_fields(scene, coco17(), {});
    const auto instances =
        decode(fields.heatmaps, fields.keycentroid, fields.maskcentroid, coco17(), {});
    const std::string text = write_detections(instances, scene.height, scene.width);
    const Detections parsed = read_detections(text);
    CHECK(parsed.width == scene.width);
    REQUIRE(parsed.instances.size() == instances.size());
    for (std::size_t i = 0; i < instances.size(); ++i) {
        CHECK(parsed.instances[i].mask == instances[i].mask);
        CHECK(parsed.instances[i].score == Catch::Approx(instances[i].score));
        for (int j = 0; j < 17; ++j) {
            CHECK(parsed.instances[i].keypoints[std::size_t(j)].present ==
                  instances[i].keypoints[std::size_t(j)].present);
            if (instances[i].keypoints[std::size_t(j)].present)
                CHECK(parsed.instances[i].keypoints[std::size_t(j)].x ==
                      Catch::Approx(instances[i].keypoints[std::size_t(j)].x));
        }
    }
}
