#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

#include <json.hpp>

#include "vcf/config.hpp"
#include "vcf/decode.hpp"
#include "vcf/encode.hpp"
#include "vcf/error.hpp"
#include "vcf/synth.hpp"

namespace vcf {

struct StageStats {
    double median_ms = 0.0;
    double p95_ms = 0.0;
};

struct BenchReport {
    int canvas_width = 0;
    int canvas_height = 0;
    int instance_count = 0;
    int runs = 0;
    int threads = 1;
    StageStats vote, nms, cluster, assemble, end_to_end;
    double fps = 0.0;
    bool outputs_stable = false; // every timed run matched the reference decode
};

inline nlohmann::ordered_json to_json(const BenchReport& r) {
    auto stage = [](const StageStats& s) {
        return nlohmann::ordered_json{{"median_ms", s.median_ms}, {"p95_ms", s.p95_ms}};
    };
    return {{"canvas", {r.canvas_width, r.canvas_height}},
            {"instances", r.instance_count},
            {"runs", r.runs},
            {"threads", r.threads},
            {"stages",
             {{"vote", stage(r.vote)},
              {"nms", stage(r.nms)},
              {"cluster", stage(r.cluster)},
              {"assemble", stage(r.assemble)}}},
            {"end_to_end", stage(r.end_to_end)},
            {"fps", r.fps},
            {"outputs_stable", r.outputs_stable}};
}

namespace detail {

inline StageStats stage_stats(std::vector<double> samples) {
    std::sort(samples.begin(), samples.end());
    StageStats s;
    const std::size_t n = samples.size();
    if (n == 0) return s;
    s.median_ms = n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
    s.p95_ms = samples[std::min(n - 1, std::size_t(std::ceil(0.95 * double(n))) - 1)];
    return s;
}

} // namespace detail

// Times the decode pipeline on one synthetic encoded scene: 5 warmup
// iterations, then `runs` timed iterations with per-stage wall clocks.
// Timings are machine-dependent; the decoded outputs are not, and every
// timed run is compared against an untimed reference.
inline BenchReport bench_decode(const SynthConfig& scene_cfg, const DecodeConfig& decode_cfg,
                                int runs) {
    if (runs < 10) throw domain_error("bench_decode: need at least 10 runs");
    decode_cfg.validate();

    const SceneAnnotation scene = generate_scene(scene_cfg);
    const SkeletonSpec& skeleton = coco17();
    const EncodeConfig enc_cfg{.disk_radius = decode_cfg.disk_radius,
                               .normalize_offsets = decode_cfg.normalize_offsets};
    const EncodedFields fields = encode_fields(scene, skeleton, enc_cfg);

    const auto reference = decode(fields.heatmaps, fields.keycentroid, fields.maskcentroid,
                                  skeleton, decode_cfg);
    for (int i = 0; i < 5; ++i)
        (void)decode(fields.heatmaps, fields.keycentroid, fields.maskcentroid, skeleton,
                     decode_cfg);

    using clock = std::chrono::steady_clock;
    auto ms_since = [](clock::time_point t0) {
        return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    };

    std::vector<double> vote_ms, nms_ms, cluster_ms, assemble_ms, total_ms;
    bool stable = true;
    for (int run = 0; run < runs; ++run) {
        const auto t_all = clock::now();

        auto t = clock::now();
        const FieldGrid votes = vote_keypoints(fields.heatmaps, fields.keycentroid, decode_cfg);
        vote_ms.push_back(ms_since(t));

        t = clock::now();
        const auto candidates = nms_peaks(votes, decode_cfg);
        nms_ms.push_back(ms_since(t));

        t = clock::now();
        const auto anchors = derive_anchors(candidates, skeleton, decode_cfg);
        const auto clusters = cluster_instances(fields.maskcentroid, anchors, decode_cfg);
        cluster_ms.push_back(ms_since(t));

        t = clock::now();
        const auto instances = assemble_instances(candidates, clusters, skeleton, decode_cfg);
        assemble_ms.push_back(ms_since(t));

        total_ms.push_back(ms_since(t_all));
        if (!(instances == reference)) stable = false;
    }

    BenchReport report;
    report.canvas_width = scene.width;
    report.canvas_height = scene.height;
    report.instance_count = int(scene.persons.size());
    report.runs = runs;
    report.threads = 1;
    report.vote = detail::stage_stats(vote_ms);
    report.nms = detail::stage_stats(nms_ms);
    report.cluster = detail::stage_stats(cluster_ms);
    report.assemble = detail::stage_stats(assemble_ms);
    report.end_to_end = detail::stage_stats(total_ms);
    report.fps = report.end_to_end.median_ms > 0.0 ? 1000.0 / report.end_to_end.median_ms : 0.0;
    report.outputs_stable = stable;
    return report;
}

} // namespace vcf
