#pragma once

#include <array>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "taur1/core.hpp"

namespace taur1::prompts {

/// Per-class definitions embedded in classifier and summarizer prompts.
/// Config-file assets may replace these; prompt-stability tests pin the
/// defaults.
struct ClassGlosses {
    std::array<std::string, 4> text{
        "no anomaly (normal traffic flow)",
        "direction or manoeuvre violation (wrong-way driving, illegal or unsafe "
        "turns, illegal or unsafe lane changes)",
        "near-collision or collision event (cut-offs forcing hard braking or "
        "evasive action, near-misses, crashes)",
        "abnormal road use (stopping in an active lane or mid-road, driving or "
        "parking in non-vehicle areas)",
    };

    const std::string& gloss(AnomalyClass c) const {
        return text[static_cast<std::size_t>(class_index(c))];
    }
};

/// Loads glosses from a JSON object {"A": "...", "B": "...", "C": "...",
/// "D": "..."}; missing letters keep their defaults.
inline ClassGlosses load_class_glosses(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open gloss file: " + path);
    const auto j = nlohmann::json::parse(f);
    ClassGlosses g;
    for (AnomalyClass c : kAllClasses) {
        const std::string key(1, to_letter(c));
        if (j.contains(key)) g.text[static_cast<std::size_t>(class_index(c))] = j.at(key).get<std::string>();
    }
    return g;
}

/// Reads a prompt text asset verbatim.
inline std::string load_prompt_asset(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open prompt asset: " + path);
    std::string content((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return content;
}

struct PromptPair {
    std::string system;
    std::string user;
};

/// First-layer classification prompt: the four options with their glosses and
/// a single-letter answer contract. Pure function of (clip, glosses).
inline PromptPair build_classifier_prompt(const VideoClip& clip, const ClassGlosses& glosses) {
    PromptPair p;
    p.system =
        "You are a roadside traffic surveillance analyst. Watch the video clip and "
        "classify the traffic event. Answer with exactly one letter.";
    p.user = "Classify the traffic event in this video clip into one of the following "
             "categories:\n";
    for (AnomalyClass c : kAllClasses) {
        p.user += "(";
        p.user += to_letter(c);
        p.user += ") ";
        p.user += glosses.gloss(c);
        p.user += "\n";
    }
    p.user += "Clip: " + clip.clip_id + "\n";
    p.user += "Answer with a single letter: A, B, C, or D.";
    return p;
}

inline constexpr const char* kUnspecifiedAnomalyGloss = "an unspecified anomaly";

/// The prior-label sentence injected into the summarizer prompt. An Invalid
/// prior maps to the unspecified-anomaly phrasing.
inline std::string prior_label_sentence(const ParsedLabel& prior, const ClassGlosses& glosses) {
    std::string gloss = prior.is_valid() ? glosses.gloss(prior.value())
                                         : std::string(kUnspecifiedAnomalyGloss);
    return "A first-stage classifier labeled this clip as " + gloss + ".";
}

/// Second-layer summarization prompt. When a prior label is supplied its
/// sentence is prepended to the request; the remainder of the prompt is
/// byte-identical with and without it.
inline PromptPair build_summarizer_prompt(const VideoClip& clip,
                                          const std::optional<ParsedLabel>& prior,
                                          const ClassGlosses& glosses) {
    PromptPair p;
    p.system =
        "You are a roadside traffic surveillance analyst. Watch the video clip and "
        "summarize the anomalous traffic event in a few sentences.";
    std::string body;
    body += "Clip: " + clip.clip_id + "\n";
    body += "Provide one comprehensive summary of the anomalous event covering:\n";
    body += "(1) environment: time of day, weather, road surface condition, road layout;\n";
    body += "(2) object grounding: vehicle type, color, position in the frame and in the scene "
            "of the main anomalous objects;\n";
    body += "(3) event description: the main movements and interactions of the anomalous "
            "objects;\n";
    body += "(4) event analysis: the underlying reason behind the anomaly.";
    if (prior) {
        p.user = prior_label_sentence(*prior, glosses) + "\n" + body;
    } else {
        p.user = body;
    }
    return p;
}

}  // namespace taur1::prompts
