#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "taur1/core.hpp"
#include "taur1/metrics.hpp"
#include "taur1/rewards.hpp"

namespace taur1::judge {

inline constexpr const char* kDefaultJudgeModel = "gpt-5-mini-2025-08-07";
inline constexpr const char* kDefaultReasoning = "low";
inline constexpr const char* kApiKeyEnvVar = "TAU_JUDGE_API_KEY";

enum class JudgeMode { Eval, Reward };

struct JudgeOptions {
    std::string model = kDefaultJudgeModel;
    std::string reasoning = kDefaultReasoning;
    bool include_decomposed = true;  // embed structured ground truth, not just the summary
    // verbatim replacement for the built-in rubric system prompt; lets the
    // repo-versioned text assets be swapped in without code changes
    std::string system_prompt_override;
};

struct JudgeRequest {
    JudgeMode mode = JudgeMode::Eval;
    std::string clip_id;
    DecomposedAnnotation gt_annotation;
    std::string candidate_summary;
    std::string model_name;
    std::string reasoning_level;
    std::string system_prompt;
    std::string user_prompt;
};

struct JudgeResponse {
    std::string raw;
    rewards::JudgeVerdict verdict;
    int attempts = 1;
};

struct JudgeParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct JudgeUnavailableError : std::runtime_error {
    std::string clip_id;
    JudgeUnavailableError(std::string clip, const std::string& what)
        : std::runtime_error(what), clip_id(std::move(clip)) {}
};

namespace detail {

inline std::string render_gt_block(const DecomposedAnnotation& gt, bool include_decomposed) {
    std::string s;
    s += "Ground-truth summary:\n" + gt.summary + "\n";
    if (!include_decomposed) return s;
    s += "Ground-truth decomposed annotation:\n";
    auto field = [&](const char* name, const std::optional<std::string>& v) {
        if (is_specified(v)) s += std::string("- ") + name + ": " + *v + "\n";
    };
    field("time of day", gt.env.time_of_day);
    field("weather", gt.env.weather);
    field("road surface", gt.env.surface);
    field("road layout", gt.env.road);
    field("vehicle type", gt.identity.vehicle_type);
    field("vehicle color", gt.identity.color);
    auto list_field = [&](const char* name, const std::optional<std::vector<std::string>>& v) {
        if (!is_specified(v)) return;
        s += std::string("- ") + name + ": ";
        for (std::size_t i = 0; i < v->size(); ++i) {
            if (i) s += "; ";
            s += (*v)[i];
        }
        s += "\n";
    };
    list_field("frame position (per phase)", gt.location.frame_position);
    list_field("scene position (per phase)", gt.location.environment_position);
    if (!gt.description.empty()) s += "- event description: " + gt.description + "\n";
    if (!gt.reasoning.empty()) s += "- event reasoning: " + gt.reasoning + "\n";
    return s;
}

}  // namespace detail

/// Builds the rubric prompt for one candidate summary. Deterministic: the
/// same inputs always produce byte-identical payloads. Reward mode adds the
/// hallucination/verbosity penalty instructions and asks for stricter
/// description/reasoning judgement; eval mode carries no penalty scoring.
inline JudgeRequest build_judge_request(const DecomposedAnnotation& gt,
                                        const std::string& candidate_summary, JudgeMode mode,
                                        const JudgeOptions& options = {},
                                        const std::string& clip_id = {}) {
    if (gt.summary.empty())
        throw std::invalid_argument("build_judge_request: ground-truth summary is empty");

    JudgeRequest req;
    req.mode = mode;
    req.clip_id = clip_id;
    req.gt_annotation = gt;
    req.candidate_summary = candidate_summary;
    req.model_name = options.model;
    req.reasoning_level = options.reasoning;

    std::string sys;
    sys += "You are a strict grader of traffic-anomaly summaries. Compare the candidate "
           "summary to the ground truth and score these aspects:\n";
    sys += "1. environment correctness (0-1): weighted agreement on time of day (weight 1), "
           "weather (weight 1), road surface (weight 1) and road layout (weight 3); score "
           "only factors specified in the ground truth, and give the full 1.0 when none is "
           "specified.\n";
    sys += "2. object grounding (0-2): identity grounding (0-1, equal weight on vehicle type "
           "and color) plus location grounding (0-1, equal weight on frame position and scene "
           "position); when a location field lists several phases, count it correct if any "
           "phase matches; give 0.5 for a sub-score whose fields are all unspecified in the "
           "ground truth.\n";
    sys += "3. description quality (0-5): how faithfully the candidate describes the "
           "movements and interactions of the anomalous objects.\n";
    sys += "4. reasoning quality (0-2): how well the candidate explains the underlying cause.\n";
    if (mode == JudgeMode::Reward) {
        sys += "Judge description and reasoning conservatively and strictly: award partial "
               "credit only for clearly supported content.\n";
        sys += "5. hallucination penalty (0-3): penalize content not supported by the ground "
               "truth.\n";
        sys += "6. verbosity penalty (0-1): penalize unnecessary length or repetition.\n";
    }
    sys += "Respond with a single JSON object and nothing else, with keys "
           "\"env\", \"grounding\", \"description\", \"reasoning\", \"hallucination\", "
           "\"verbosity\".";
    if (mode == JudgeMode::Eval)
        sys += " Set \"hallucination\" and \"verbosity\" to 0.";

    std::string user;
    user += detail::render_gt_block(gt, options.include_decomposed);
    user += "\nCandidate summary:\n" + candidate_summary + "\n";
    user += "\nScore the candidate now. Ranges: env (0-1) grounding (0-2) description (0-5) "
            "reasoning (0-2).";

    req.system_prompt = options.system_prompt_override.empty() ? std::move(sys)
                                                               : options.system_prompt_override;
    req.user_prompt = std::move(user);
    return req;
}

inline nlohmann::json verdict_to_json(const rewards::JudgeVerdict& v) {
    return {{"env", v.env},
            {"grounding", v.grounding},
            {"description", v.description},
            {"reasoning", v.reasoning},
            {"hallucination", v.hallucination},
            {"verbosity", v.verbosity}};
}

inline rewards::JudgeVerdict verdict_from_json(const nlohmann::json& j, bool quiet = true) {
    return rewards::make_verdict(j.value("env", 0.0), j.value("grounding", 0.0),
                                 j.value("description", 0.0), j.value("reasoning", 0.0),
                                 j.value("hallucination", 0.0), j.value("verbosity", 0.0), nullptr,
                                 quiet);
}

/// Extracts the first JSON object from raw judge output. Missing keys
/// default to 0 with a warning; values are clamped into range. Throws
/// JudgeParseError when no JSON object parses.
inline rewards::JudgeVerdict parse_judge_response(const std::string& raw, bool quiet = false) {
    for (std::size_t start = raw.find('{'); start != std::string::npos;
         start = raw.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false, escaped = false;
        for (std::size_t i = start; i < raw.size(); ++i) {
            const char ch = raw[i];
            if (in_string) {
                if (escaped)
                    escaped = false;
                else if (ch == '\\')
                    escaped = true;
                else if (ch == '"')
                    in_string = false;
                continue;
            }
            if (ch == '"') {
                in_string = true;
            } else if (ch == '{') {
                ++depth;
            } else if (ch == '}') {
                if (--depth == 0) {
                    nlohmann::json j =
                        nlohmann::json::parse(raw.substr(start, i - start + 1), nullptr, false);
                    if (j.is_discarded() || !j.is_object()) break;
                    auto get = [&](const char* key) {
                        if (!j.contains(key) || !j.at(key).is_number()) {
                            if (!quiet)
                                std::cerr << "warning: judge response missing key '" << key
                                          << "', defaulting to 0\n";
                            return 0.0;
                        }
                        return j.at(key).get<double>();
                    };
                    return rewards::make_verdict(get("env"), get("grounding"), get("description"),
                                                 get("reasoning"), get("hallucination"),
                                                 get("verbosity"), nullptr, quiet);
                }
            }
        }
    }
    throw JudgeParseError("no JSON object found in judge response");
}

// ---------------------------------------------------------------------------
// Remote judge transport
// ---------------------------------------------------------------------------

/// Transport abstraction for the chat-completion wire call. Concrete
/// implementations post a JSON body and return the assistant text.
class JudgeClient {
public:
    struct PostResult {
        bool ok = false;
        std::string content;  // choices[0].message.content on success
        std::string error;
    };

    virtual ~JudgeClient() = default;
    virtual PostResult post_chat(const std::string& json_body) = 0;

    int max_retries = 3;
    int backoff_base_ms = 1000;
    int backoff_factor = 2;
};

inline std::string chat_completion_body(const JudgeRequest& req) {
    nlohmann::json body = {
        {"model", req.model_name},
        {"messages",
         {{{"role", "system"}, {"content", req.system_prompt}},
          {{"role", "user"}, {"content", req.user_prompt}}}},
        {"reasoning_effort", req.reasoning_level},
    };
    return body.dump();
}

/// Parses the chat-completion response envelope down to the assistant text.
inline std::string extract_chat_content(const std::string& response_body) {
    nlohmann::json j = nlohmann::json::parse(response_body, nullptr, false);
    if (j.is_discarded()) throw JudgeParseError("malformed chat-completion response");
    try {
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        throw JudgeParseError("chat-completion response missing choices[0].message.content");
    }
}

/// One judged clip with retry/backoff: up to 1 + max_retries attempts on
/// transport failure or unparseable output, exponential backoff between
/// attempts. Throws JudgeUnavailableError carrying the clip id once retries
/// are exhausted.
inline JudgeResponse remote_judge(JudgeClient& client, const JudgeRequest& request) {
    const std::string body = chat_completion_body(request);
    std::string last_error;
    for (int attempt = 1; attempt <= 1 + client.max_retries; ++attempt) {
        if (attempt > 1) {
            long long delay = client.backoff_base_ms;
            for (int i = 2; i < attempt; ++i) delay *= client.backoff_factor;
            std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        }
        auto result = client.post_chat(body);
        if (!result.ok) {
            last_error = result.error.empty() ? "transport failure" : result.error;
            continue;
        }
        try {
            JudgeResponse resp;
            resp.raw = result.content;
            resp.verdict = parse_judge_response(result.content);
            resp.attempts = attempt;
            return resp;
        } catch (const JudgeParseError& e) {
            last_error = e.what();
        }
    }
    throw JudgeUnavailableError(request.clip_id,
                                "judge unavailable after " +
                                    std::to_string(1 + client.max_retries) +
                                    " attempts: " + last_error);
}

struct JudgedClip {
    std::string clip_id;
    std::optional<JudgeResponse> response;  // empty => null verdict, see error
    std::string error;
};

/// Fans judging out over clips with a bounded number of in-flight requests.
/// Each worker owns its own client; results are keyed by clip id and
/// independent of completion order.
inline std::vector<JudgedClip> judge_many(
    const std::function<std::unique_ptr<JudgeClient>()>& client_factory,
    const std::vector<JudgeRequest>& requests, int concurrency = 4) {
    if (concurrency < 1) throw std::invalid_argument("judge_many: concurrency must be >= 1");
    std::vector<JudgedClip> out(requests.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        auto client = client_factory();
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= requests.size()) break;
            out[i].clip_id = requests[i].clip_id;
            try {
                out[i].response = remote_judge(*client, requests[i]);
            } catch (const std::exception& e) {
                out[i].error = e.what();
            }
        }
    };
    std::vector<std::thread> threads;
    const int n = std::min<int>(concurrency, static_cast<int>(requests.size()));
    threads.reserve(static_cast<std::size_t>(std::max(n, 0)));
    for (int i = 0; i < n; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    return out;
}

// ---------------------------------------------------------------------------
// Rule-based judge (deterministic oracle / offline fallback)
// ---------------------------------------------------------------------------

namespace detail {

inline bool ci_equal(const std::string& a, const std::string& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::tolower(static_cast<unsigned char>(a[i])) !=
            std::tolower(static_cast<unsigned char>(b[i])))
            return false;
    return true;
}

inline bool field_match(const std::optional<std::string>& gt, const std::optional<std::string>& cand) {
    return is_specified(gt) && is_specified(cand) && ci_equal(*gt, *cand);
}

// phase-level matches against the candidate list, aggregated by the
// any-phase rule
inline bool phases_match(const std::optional<std::vector<std::string>>& gt,
                         const std::optional<std::vector<std::string>>& cand) {
    if (!is_specified(gt) || !is_specified(cand)) return false;
    std::vector<bool> per_phase;
    per_phase.reserve(gt->size());
    for (const auto& phase : *gt) {
        bool hit = false;
        for (const auto& c : *cand)
            if (ci_equal(phase, c)) { hit = true; break; }
        per_phase.push_back(hit);
    }
    return rewards::phase_match_any(per_phase);
}

}  // namespace detail

/// Deterministic verdict from a structured candidate: the grounding formulas
/// with case-insensitive string equality as the compatibility rule, and
/// scaled ROUGE-L as a proxy for description/reasoning quality. Oracle and
/// offline fallback only; no penalty terms.
inline rewards::JudgeVerdict rule_based_judge(const DecomposedAnnotation& gt,
                                              const DecomposedAnnotation& candidate) {
    rewards::MatchVector mv;
    mv.time_of_day = detail::field_match(gt.env.time_of_day, candidate.env.time_of_day);
    mv.weather = detail::field_match(gt.env.weather, candidate.env.weather);
    mv.surface = detail::field_match(gt.env.surface, candidate.env.surface);
    mv.road = detail::field_match(gt.env.road, candidate.env.road);
    mv.vehicle_type = detail::field_match(gt.identity.vehicle_type, candidate.identity.vehicle_type);
    mv.color = detail::field_match(gt.identity.color, candidate.identity.color);
    mv.frame_position = detail::phases_match(gt.location.frame_position, candidate.location.frame_position);
    mv.environment_position =
        detail::phases_match(gt.location.environment_position, candidate.location.environment_position);

    const double env = rewards::env_score(gt.env, mv);
    const double b1 = rewards::identity_grounding_score(gt.identity, mv);
    const double b2 = rewards::location_grounding_score(gt.location, mv);
    const double grounding = rewards::grounding_score(b1, b2);
    const double description =
        5.0 * metrics::rouge_l(metrics::tokenize(candidate.description), metrics::tokenize(gt.description));
    const double reasoning =
        2.0 * metrics::rouge_l(metrics::tokenize(candidate.reasoning), metrics::tokenize(gt.reasoning));
    return rewards::make_verdict(env, grounding, description, reasoning, 0.0, 0.0, nullptr, true);
}

}  // namespace taur1::judge
