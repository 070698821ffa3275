#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "taur1/core.hpp"

namespace taur1::rewards {

// ---------------------------------------------------------------------------
// Judge verdicts
// ---------------------------------------------------------------------------

/// Six bounded component scores produced by a judge. env in [0,1],
/// grounding in [0,2], description in [0,5], reasoning in [0,2],
/// hallucination in [0,3], verbosity in [0,1].
struct JudgeVerdict {
    double env = 0.0;
    double grounding = 0.0;
    double description = 0.0;
    double reasoning = 0.0;
    double hallucination = 0.0;
    double verbosity = 0.0;
};

inline constexpr double kEnvMax = 1.0;
inline constexpr double kGroundingMax = 2.0;
inline constexpr double kDescriptionMax = 5.0;
inline constexpr double kReasoningMax = 2.0;
inline constexpr double kHallucinationMax = 3.0;
inline constexpr double kVerbosityMax = 1.0;

/// Clamps every component to its interval. Remote judges occasionally emit
/// slightly out-of-range numbers; clamping keeps training loops alive. Sets
/// *clamped when any component moved and warns on stderr unless suppressed.
inline JudgeVerdict make_verdict(double env, double grounding, double description,
                                 double reasoning, double hallucination, double verbosity,
                                 bool* clamped = nullptr, bool quiet = false) {
    auto clip = [](double v, double hi) { return std::clamp(v, 0.0, hi); };
    JudgeVerdict v{clip(env, kEnvMax),           clip(grounding, kGroundingMax),
                   clip(description, kDescriptionMax), clip(reasoning, kReasoningMax),
                   clip(hallucination, kHallucinationMax), clip(verbosity, kVerbosityMax)};
    const bool moved = v.env != env || v.grounding != grounding || v.description != description ||
                       v.reasoning != reasoning || v.hallucination != hallucination ||
                       v.verbosity != verbosity;
    if (clamped) *clamped = moved;
    if (moved && !quiet)
        std::cerr << "warning: judge verdict component out of range, clamped\n";
    return v;
}

/// Per-field match flags, aligned with the specified fields of a ground-truth
/// annotation. A flag may be set only where the corresponding field is
/// specified; the scoring functions reject anything else.
struct MatchVector {
    // environment factors (c_f)
    bool time_of_day = false;
    bool weather = false;
    bool surface = false;
    bool road = false;
    // identity attributes (c_a)
    bool vehicle_type = false;
    bool color = false;
    // location fields (c_l), already aggregated over phases
    bool frame_position = false;
    bool environment_position = false;
};

/// Phase aggregation rule for multi-phase location fields: the field matches
/// if any annotated phase matches. Kept behind this one function so the rule
/// can be swapped without touching the scores.
inline bool phase_match_any(const std::vector<bool>& phase_matches) {
    return std::any_of(phase_matches.begin(), phase_matches.end(), [](bool b) { return b; });
}

// ---------------------------------------------------------------------------
// Classification reward
// ---------------------------------------------------------------------------

/// Five-branch reward over (prediction, ground truth):
///   invalid format            -> -2.0
///   false negative            -> -1.50   (abnormal ground truth predicted A)
///   false positive            -> -1.25   (normal ground truth predicted abnormal)
///   wrong abnormal subtype    -> -0.75
///   exact class match         ->  1.5
/// The false-negative penalty deliberately exceeds the false-positive one:
/// missing an abnormal event costs more than flagging a normal one.
inline double classification_reward(const ParsedLabel& pred, AnomalyClass gt) {
    if (!pred.is_valid()) return -2.0;
    const AnomalyClass p = pred.value();
    if (p == gt) return 1.5;
    if (is_abnormal(gt) && p == AnomalyClass::A) return -1.50;
    if (gt == AnomalyClass::A && is_abnormal(p)) return -1.25;
    return -0.75;  // both abnormal, different subtype
}

// ---------------------------------------------------------------------------
// Deterministic grounding scores (shared by reward and evaluation)
// ---------------------------------------------------------------------------

/// Weighted environment correctness. Weights: time 1, weather 1, surface 1,
/// road 3. Returns 1 when no factor is specified in the ground truth,
/// otherwise sum(w*s*c) / sum(w*s).
inline double env_score(const EnvAnnotation& gt, const MatchVector& matches) {
    double num = 0.0, den = 0.0;
    auto add = [&](bool specified, bool matched, double weight) {
        if (!specified && matched)
            throw std::invalid_argument("env_score: match flag set for unspecified factor");
        if (specified) {
            den += weight;
            if (matched) num += weight;
        }
    };
    add(is_specified(gt.time_of_day), matches.time_of_day, 1.0);
    add(is_specified(gt.weather), matches.weather, 1.0);
    add(is_specified(gt.surface), matches.surface, 1.0);
    add(is_specified(gt.road), matches.road, 3.0);
    if (den == 0.0) return 1.0;
    return num / den;
}

/// Identity grounding (B1): equal-weight fraction of specified attributes
/// matched; 0.5 when neither type nor color is specified.
inline double identity_grounding_score(const IdentityAnnotation& gt, const MatchVector& matches) {
    double num = 0.0, den = 0.0;
    auto add = [&](bool specified, bool matched) {
        if (!specified && matched)
            throw std::invalid_argument("identity_grounding_score: match flag set for unspecified attribute");
        if (specified) {
            den += 1.0;
            if (matched) num += 1.0;
        }
    };
    add(is_specified(gt.vehicle_type), matches.vehicle_type);
    add(is_specified(gt.color), matches.color);
    if (den == 0.0) return 0.5;
    return num / den;
}

/// Location grounding (B2): equal-weight fraction of specified fields
/// matched; 0.5 when neither frame nor environment position is specified.
/// Multi-phase fields must be aggregated by the caller (phase_match_any).
inline double location_grounding_score(const LocationAnnotation& gt, const MatchVector& matches) {
    double num = 0.0, den = 0.0;
    auto add = [&](bool specified, bool matched) {
        if (!specified && matched)
            throw std::invalid_argument("location_grounding_score: match flag set for unspecified field");
        if (specified) {
            den += 1.0;
            if (matched) num += 1.0;
        }
    };
    add(is_specified(gt.frame_position), matches.frame_position);
    add(is_specified(gt.environment_position), matches.environment_position);
    if (den == 0.0) return 0.5;
    return num / den;
}

/// GroundingScore = B1 + B2, in [0,2].
inline double grounding_score(double b1, double b2) {
    if (!(b1 >= 0.0 && b1 <= 1.0) || !(b2 >= 0.0 && b2 <= 1.0))
        throw std::invalid_argument("grounding_score: inputs must lie in [0,1]");
    return b1 + b2;
}

// ---------------------------------------------------------------------------
// Summarization reward and GPT-Eval total
// ---------------------------------------------------------------------------

/// env + grounding + description + reasoning - hallucination - verbosity,
/// in [-4, 10] for in-range verdicts.
inline double summarization_reward(const JudgeVerdict& v) {
    return v.env + v.grounding + v.description + v.reasoning - v.hallucination - v.verbosity;
}

/// Positive components only (the 0-10 evaluation total); penalties belong to
/// the reward, not to evaluation.
inline double g_score(const JudgeVerdict& v) {
    return v.env + v.grounding + v.description + v.reasoning;
}

}  // namespace taur1::rewards
