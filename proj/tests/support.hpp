#pragma once

// Shared fixtures for the test suites: synthetic manifests shaped like the
// 342-clip / 28-site / 2064-QA corpus and the 42-clip evaluation subset.

#include <string>
#include <vector>

#include "taur1/core.hpp"

namespace taur1_test {

using namespace taur1;

inline std::string padded(int n, int width = 3) {
    std::string s = std::to_string(n);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

inline DecomposedAnnotation simple_annotation(const std::string& clip_id, bool abnormal) {
    DecomposedAnnotation ann;
    ann.env.time_of_day = "daytime";
    ann.env.weather = "clear";
    ann.env.road = "two-lane roundabout";
    ann.identity.vehicle_type = "sedan";
    ann.identity.color = "white";
    ann.location.frame_position = std::vector<std::string>{"center"};
    ann.location.environment_position = std::vector<std::string>{"inner circulating lane"};
    ann.description = "A white sedan cuts across the inner lane near clip " + clip_id + ".";
    ann.reasoning = "The driver failed to yield to circulating traffic.";
    if (abnormal) ann.summary = ann.description + " " + ann.reasoning;
    return ann;
}

/// 342 clips over 28 sites with class counts A=66, B=120, C=100, D=56 and
/// 2064 QA pairs. The per-class abnormal counts are a fixed choice
/// consistent with the published 276/66 abnormal/normal totals.
inline DatasetManifest make_corpus_manifest() {
    DatasetManifest m;
    const int counts[4] = {66, 120, 100, 56};
    int serial = 0;
    for (int k = 0; k < 4; ++k) {
        for (int i = 0; i < counts[k]; ++i) {
            ++serial;
            VideoClip clip;
            clip.clip_id = "clip_" + padded(serial);
            clip.site_id = "site_" + padded(1 + (serial % 28), 2);
            clip.duration_s = 10.0 + static_cast<double>((serial * 7) % 100);
            clip.label = static_cast<AnomalyClass>(k);
            clip.media_ref = "videos/" + clip.clip_id + ".mp4";
            m.annotations.emplace(clip.clip_id, simple_annotation(clip.clip_id, k != 0));
            m.clips.push_back(std::move(clip));
        }
    }
    // 2064 QA pairs: six per clip (2052) plus twelve extras on the first clips
    int qa_serial = 0;
    auto add_qa = [&](const std::string& clip_id) {
        QAPair qa;
        qa.clip_id = clip_id;
        qa.category = kAllQACategories[static_cast<std::size_t>(qa_serial % 7)];
        qa.question = "What happens in " + clip_id + " (q" + std::to_string(qa_serial) + ")?";
        qa.answer = "Answer " + std::to_string(qa_serial) + ".";
        ++qa_serial;
        m.qa_pairs.push_back(std::move(qa));
    };
    for (const auto& clip : m.clips)
        for (int q = 0; q < 6; ++q) add_qa(clip.clip_id);
    for (int q = 0; q < 12; ++q) add_qa(m.clips[static_cast<std::size_t>(q)].clip_id);
    return m;
}

/// 42 clips: 34 abnormal (15 B / 12 C / 7 D) and 8 normal.
inline DatasetManifest make_eval42_manifest() {
    DatasetManifest m;
    const int counts[4] = {8, 15, 12, 7};
    int serial = 0;
    for (int k = 0; k < 4; ++k) {
        for (int i = 0; i < counts[k]; ++i) {
            ++serial;
            VideoClip clip;
            clip.clip_id = "eval_" + padded(serial, 2);
            clip.site_id = "site_" + padded(1 + (serial % 7), 2);
            clip.duration_s = 20.0 + 3.0 * serial;
            clip.label = static_cast<AnomalyClass>(k);
            clip.media_ref = "videos/" + clip.clip_id + ".mp4";
            m.annotations.emplace(clip.clip_id, simple_annotation(clip.clip_id, k != 0));
            m.clips.push_back(std::move(clip));
        }
    }
    return m;
}

}  // namespace taur1_test
