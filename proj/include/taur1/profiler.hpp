#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace taur1::profiler {

/// Wall-clock stage breakdown for one inference call, in milliseconds.
/// total_ms may exceed the stage sum (backends may include unattributed
/// overhead) but never falls below the largest single stage.
struct StageTimings {
    double prompt_construction_ms = 0.0;
    double visual_input_processing_ms = 0.0;
    double input_encoding_ms = 0.0;
    double model_generation_ms = 0.0;
    double output_decoding_ms = 0.0;
    double total_ms = 0.0;
};

inline void validate_timings(const StageTimings& t) {
    const double stages[] = {t.prompt_construction_ms, t.visual_input_processing_ms,
                             t.input_encoding_ms, t.model_generation_ms, t.output_decoding_ms};
    double max_stage = 0.0;
    for (double s : stages) {
        if (s < 0.0) throw std::invalid_argument("StageTimings: negative stage time");
        max_stage = std::max(max_stage, s);
    }
    if (t.total_ms < 0.0) throw std::invalid_argument("StageTimings: negative total");
    if (t.total_ms < max_stage)
        throw std::invalid_argument("StageTimings: total below largest stage");
}

struct RunProfile {
    std::vector<StageTimings> per_clip;
    StageTimings stage_totals;        // per-stage sums over clips
    std::size_t clip_count = 0;
    double total_runtime_s = 0.0;     // sum of per-clip totals
    double total_video_duration_s = 0.0;

    double avg_latency_s() const {
        return clip_count > 0 ? total_runtime_s / static_cast<double>(clip_count) : 0.0;
    }

    /// Table-only profile when per-clip stage data is unavailable.
    static RunProfile from_totals(double total_runtime_s, std::size_t clip_count,
                                  double total_video_duration_s) {
        RunProfile p;
        p.clip_count = clip_count;
        p.total_runtime_s = total_runtime_s;
        p.total_video_duration_s = total_video_duration_s;
        p.stage_totals.total_ms = total_runtime_s * 1000.0;
        return p;
    }
};

/// Pure fold over per-clip timings; order-insensitive.
inline RunProfile aggregate(const std::vector<StageTimings>& profiles,
                            const std::vector<double>& video_durations_s) {
    if (profiles.size() != video_durations_s.size())
        throw std::invalid_argument("aggregate: timing/duration length mismatch");
    if (profiles.empty()) throw std::invalid_argument("aggregate: empty profile list");
    RunProfile p;
    p.per_clip = profiles;
    p.clip_count = profiles.size();
    for (const auto& t : profiles) {
        validate_timings(t);
        p.stage_totals.prompt_construction_ms += t.prompt_construction_ms;
        p.stage_totals.visual_input_processing_ms += t.visual_input_processing_ms;
        p.stage_totals.input_encoding_ms += t.input_encoding_ms;
        p.stage_totals.model_generation_ms += t.model_generation_ms;
        p.stage_totals.output_decoding_ms += t.output_decoding_ms;
        p.stage_totals.total_ms += t.total_ms;
    }
    p.total_runtime_s = p.stage_totals.total_ms / 1000.0;
    for (double d : video_durations_s) {
        if (d < 0.0) throw std::invalid_argument("aggregate: negative video duration");
        p.total_video_duration_s += d;
    }
    return p;
}

/// runtime / video time; < 1 means faster than real time.
inline double real_time_factor(double total_runtime_s, double total_video_s) {
    if (!(total_video_s > 0.0))
        throw std::invalid_argument("real_time_factor: video duration must be positive");
    return total_runtime_s / total_video_s;
}

namespace detail {
inline std::string fixed2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}
}  // namespace detail

/// Three-column deployment-efficiency table. End-to-end runtime is the sum
/// of the two layers; the end-to-end per-clip average and RTF divide by the
/// classifier clip count and classifier video time, since the classifier
/// sees every clip.
inline std::string render_efficiency_table(const RunProfile& classifier,
                                           const RunProfile& summarizer) {
    const double e2e_runtime = classifier.total_runtime_s + summarizer.total_runtime_s;
    const std::size_t e2e_clips = classifier.clip_count;
    const double e2e_video = classifier.total_video_duration_s;

    auto row = [](const std::string& label, const std::string& a, const std::string& b,
                  const std::string& c) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%-40s %11s %11s %11s\n", label.c_str(), a.c_str(),
                      b.c_str(), c.c_str());
        return std::string(buf);
    };

    // a layer that saw no clips renders as zeros instead of dividing by zero
    auto display_rtf = [](double runtime_s, double video_s) {
        return video_s > 0.0 ? real_time_factor(runtime_s, video_s) : 0.0;
    };

    std::string out;
    out += row("Metric", "Classifier", "Summarizer", "End-to-End");
    out += row("Total runtime (sec)", detail::fixed2(classifier.total_runtime_s),
               detail::fixed2(summarizer.total_runtime_s), detail::fixed2(e2e_runtime));
    out += row("Avg latency per clip (sec/clip)", detail::fixed2(classifier.avg_latency_s()),
               detail::fixed2(summarizer.avg_latency_s()),
               detail::fixed2(e2e_clips > 0 ? e2e_runtime / static_cast<double>(e2e_clips) : 0.0));
    out += row("Real-Time Factor (runtime/video_time)",
               detail::fixed2(display_rtf(classifier.total_runtime_s,
                                          classifier.total_video_duration_s)),
               detail::fixed2(display_rtf(summarizer.total_runtime_s,
                                          summarizer.total_video_duration_s)),
               detail::fixed2(display_rtf(e2e_runtime, e2e_video)));
    return out;
}

inline nlohmann::json timings_to_json(const StageTimings& t) {
    return {{"prompt_construction_ms", t.prompt_construction_ms},
            {"visual_input_processing_ms", t.visual_input_processing_ms},
            {"input_encoding_ms", t.input_encoding_ms},
            {"model_generation_ms", t.model_generation_ms},
            {"output_decoding_ms", t.output_decoding_ms},
            {"total_ms", t.total_ms}};
}

inline StageTimings timings_from_json(const nlohmann::json& j) {
    StageTimings t;
    t.prompt_construction_ms = j.value("prompt_construction_ms", 0.0);
    t.visual_input_processing_ms = j.value("visual_input_processing_ms", 0.0);
    t.input_encoding_ms = j.value("input_encoding_ms", 0.0);
    t.model_generation_ms = j.value("model_generation_ms", 0.0);
    t.output_decoding_ms = j.value("output_decoding_ms", 0.0);
    t.total_ms = j.value("total_ms", 0.0);
    return t;
}

/// Full-precision JSON twin of the rendered table.
inline nlohmann::json efficiency_to_json(const RunProfile& classifier,
                                         const RunProfile& summarizer) {
    const double e2e_runtime = classifier.total_runtime_s + summarizer.total_runtime_s;
    auto safe_rtf = [](double runtime_s, double video_s) {
        return video_s > 0.0 ? real_time_factor(runtime_s, video_s) : 0.0;
    };
    auto layer = [&](const RunProfile& p) {
        return nlohmann::json{{"total_runtime_s", p.total_runtime_s},
                              {"clips", p.clip_count},
                              {"avg_latency_s", p.avg_latency_s()},
                              {"total_video_s", p.total_video_duration_s},
                              {"rtf", safe_rtf(p.total_runtime_s, p.total_video_duration_s)},
                              {"stage_totals_ms", timings_to_json(p.stage_totals)}};
    };
    return {{"classifier", layer(classifier)},
            {"summarizer", layer(summarizer)},
            {"end_to_end",
             {{"total_runtime_s", e2e_runtime},
              {"clips", classifier.clip_count},
              {"avg_latency_s", classifier.clip_count > 0
                                    ? e2e_runtime / static_cast<double>(classifier.clip_count)
                                    : 0.0},
              {"total_video_s", classifier.total_video_duration_s},
              {"rtf", safe_rtf(e2e_runtime, classifier.total_video_duration_s)}}}};
}

}  // namespace taur1::profiler
