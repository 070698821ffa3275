#pragma once

#include <atomic>
#include <chrono>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "taur1/core.hpp"
#include "taur1/profiler.hpp"
#include "taur1/prompts.hpp"

namespace taur1::pipeline {

// ---------------------------------------------------------------------------
// Backend abstraction
// ---------------------------------------------------------------------------

/// Frame-sampling and token-budget hints forwarded to backends that honor
/// them; no video processing happens on this side.
struct GenerationParams {
    int max_frames = 180;
    double sample_fps = 2.0;
    int min_video_tokens = 32;
    int max_video_tokens = 256;
};

struct BackendRequest {
    std::string clip_id;
    std::string system_prompt;
    std::string user_prompt;
    std::string media_ref;
    GenerationParams params;
};

struct BackendResult {
    std::string text;
    profiler::StageTimings timings;
};

struct TransportError : std::runtime_error {
    enum class Kind { Transport, Timeout };
    Kind kind;
    TransportError(Kind k, const std::string& what) : std::runtime_error(what), kind(k) {}
};

/// A backend either returns text with complete stage timings or throws a
/// TransportError.
class InferenceBackend {
public:
    virtual ~InferenceBackend() = default;
    virtual BackendResult generate(const BackendRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// Mock backend
// ---------------------------------------------------------------------------

/// Deterministic playback backend keyed by clip id. Entries either script a
/// response text or a transport/timeout error; unknown clips fall back to a
/// configurable default response.
class MockBackend : public InferenceBackend {
public:
    struct Entry {
        std::string text;
        std::optional<TransportError::Kind> error;

        static Entry response(std::string t) { return Entry{std::move(t), std::nullopt}; }
        static Entry failure(TransportError::Kind k) { return Entry{{}, k}; }
    };

    explicit MockBackend(std::unordered_map<std::string, Entry> script = {},
                         std::string default_response = "A",
                         std::chrono::milliseconds per_call_delay = std::chrono::milliseconds(0))
        : script_(std::move(script)),
          default_response_(std::move(default_response)),
          per_call_delay_(per_call_delay) {}

    void set_entry(const std::string& clip_id, Entry e) { script_[clip_id] = std::move(e); }

    int calls() const { return calls_.load(); }
    std::vector<BackendRequest> requests() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return requests_;
    }

    BackendResult generate(const BackendRequest& request) override {
        calls_.fetch_add(1);
        {
            std::lock_guard<std::mutex> lock(mutex_);
            requests_.push_back(request);
        }
        const auto start = std::chrono::steady_clock::now();
        if (per_call_delay_.count() > 0) std::this_thread::sleep_for(per_call_delay_);

        const Entry* entry = nullptr;
        if (auto it = script_.find(request.clip_id); it != script_.end()) entry = &it->second;
        if (entry && entry->error) {
            throw TransportError(*entry->error, entry->error == TransportError::Kind::Timeout
                                                    ? "mock timeout for clip " + request.clip_id
                                                    : "mock transport error for clip " + request.clip_id);
        }
        const auto elapsed_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                .count();
        BackendResult result;
        result.text = entry ? entry->text : default_response_;
        result.timings.prompt_construction_ms = 0.0;
        result.timings.model_generation_ms = elapsed_ms;
        result.timings.total_ms = elapsed_ms;
        return result;
    }

private:
    std::unordered_map<std::string, Entry> script_;
    std::string default_response_;
    std::chrono::milliseconds per_call_delay_;
    std::atomic<int> calls_{0};
    mutable std::mutex mutex_;
    std::vector<BackendRequest> requests_;
};

// ---------------------------------------------------------------------------
// Two-layer orchestration
// ---------------------------------------------------------------------------

struct PipelineConfig {
    int workers = 4;
    bool use_prior_label = true;
    bool serialize_backends = false;  // wrap backend calls in a mutex
    bool record_prompts = false;      // keep summarizer prompts in the report
    GenerationParams generation;
    prompts::ClassGlosses glosses;
};

struct ClassifierDecision {
    std::string clip_id;
    ParsedLabel parsed = ParsedLabel::invalid("");
    std::string raw;
    profiler::StageTimings timings;
    std::optional<std::string> error;  // transport error, treated as Invalid for routing
};

struct ClipRecord {
    std::string clip_id;
    AnomalyClass gt_label = AnomalyClass::A;
    double duration_s = 0.0;
    ClassifierDecision decision;
    bool routed = false;
    std::optional<std::string> summary;
    std::optional<profiler::StageTimings> summary_timings;
    std::optional<std::string> error;  // summarizer-stage error
    std::optional<std::string> summarizer_prompt;
};

struct PipelineReport {
    std::vector<ClipRecord> records;
    std::size_t routed_count = 0;
    std::size_t summarized_count = 0;
    std::size_t error_count = 0;  // records with a classifier or summarizer error
    // label lists ready for the metrics module, in record order
    std::vector<ParsedLabel> preds;
    std::vector<AnomalyClass> gts;
};

/// Sends the classification prompt and parses the answer. A transport error
/// is recorded on the decision and leaves the parse Invalid, which the
/// routing rule treats fail-safe.
inline ClassifierDecision classify_clip(InferenceBackend& backend, const VideoClip& clip,
                                        const PipelineConfig& config) {
    ClassifierDecision decision;
    decision.clip_id = clip.clip_id;
    const auto prompt = prompts::build_classifier_prompt(clip, config.glosses);
    BackendRequest req{clip.clip_id, prompt.system, prompt.user, clip.media_ref, config.generation};
    try {
        auto result = backend.generate(req);
        decision.raw = result.text;
        decision.timings = result.timings;
        decision.parsed = parse_anomaly_label(decision.raw);
    } catch (const TransportError& e) {
        decision.error = e.what();
        decision.parsed = parse_anomaly_label(decision.raw);  // empty raw -> Invalid
    }
    return decision;
}

/// Requests a summary for one routed clip; the prior label (B/C/D or
/// Invalid) is injected into the prompt unless disabled. Throws
/// TransportError on backend failure.
inline BackendResult summarize_clip(InferenceBackend& backend, const VideoClip& clip,
                                    const ParsedLabel& prior, const PipelineConfig& config,
                                    std::string* prompt_out = nullptr) {
    if (prior.is_valid() && !is_abnormal(prior.value()))
        throw std::invalid_argument("summarize_clip: prior label A is never summarized");
    const auto prompt = prompts::build_summarizer_prompt(
        clip, config.use_prior_label ? std::optional<ParsedLabel>(prior) : std::nullopt,
        config.glosses);
    if (prompt_out) *prompt_out = prompt.user;
    BackendRequest req{clip.clip_id, prompt.system, prompt.user, clip.media_ref, config.generation};
    return backend.generate(req);
}

namespace detail {

inline bool should_route(const ClassifierDecision& d) {
    // fail-safe: everything except a clean class-A decision goes to the
    // summarizer
    return !(d.parsed.is_valid() && d.parsed.value() == AnomalyClass::A && !d.error.has_value());
}

}  // namespace detail

/// Runs the two-layer cascade over a clip batch with a bounded worker pool.
/// Per-clip failures are isolated: one clip's error never aborts the batch.
inline PipelineReport run_pipeline(InferenceBackend& classifier_backend,
                                   InferenceBackend& summarizer_backend,
                                   const std::vector<VideoClip>& clips,
                                   const PipelineConfig& config = {}) {
    if (clips.empty()) throw std::invalid_argument("run_pipeline: empty clip list");
    if (config.workers < 1) throw std::invalid_argument("run_pipeline: workers must be >= 1");

    PipelineReport report;
    report.records.resize(clips.size());
    std::mutex backend_mutex;  // used only when serialize_backends is set

    auto process = [&](std::size_t i) {
        const VideoClip& clip = clips[i];
        ClipRecord rec;
        rec.clip_id = clip.clip_id;
        rec.gt_label = clip.label;
        rec.duration_s = clip.duration_s;
        {
            std::unique_lock<std::mutex> lock(backend_mutex, std::defer_lock);
            if (config.serialize_backends) lock.lock();
            rec.decision = classify_clip(classifier_backend, clip, config);
        }
        rec.routed = detail::should_route(rec.decision);
        if (rec.routed) {
            const ParsedLabel prior = rec.decision.parsed.is_valid() &&
                                              is_abnormal(rec.decision.parsed.value())
                                          ? rec.decision.parsed
                                          : ParsedLabel::invalid(rec.decision.raw);
            try {
                std::string prompt;
                std::unique_lock<std::mutex> lock(backend_mutex, std::defer_lock);
                if (config.serialize_backends) lock.lock();
                auto result = summarize_clip(summarizer_backend, clip, prior, config,
                                             config.record_prompts ? &prompt : nullptr);
                rec.summary = result.text;
                rec.summary_timings = result.timings;
                if (config.record_prompts) rec.summarizer_prompt = prompt;
            } catch (const TransportError& e) {
                rec.error = e.what();
            }
        }
        report.records[i] = std::move(rec);
    };

    // isolation holds even for backends that throw something other than
    // TransportError; the record keeps the message instead of the batch dying
    auto process_isolated = [&](std::size_t i) {
        try {
            process(i);
        } catch (const std::exception& e) {
            ClipRecord rec;
            rec.clip_id = clips[i].clip_id;
            rec.gt_label = clips[i].label;
            rec.duration_s = clips[i].duration_s;
            rec.decision.clip_id = clips[i].clip_id;
            rec.decision.parsed = ParsedLabel::invalid("");
            rec.routed = true;
            rec.error = std::string("unexpected backend failure: ") + e.what();
            report.records[i] = std::move(rec);
        }
    };

    const int workers = std::min<int>(config.workers, static_cast<int>(clips.size()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < clips.size(); ++i) process_isolated(i);
    } else {
        std::atomic<std::size_t> next{0};
        auto loop = [&]() {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= clips.size()) break;
                process_isolated(i);
            }
        };
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(loop);
        for (auto& t : pool) t.join();
    }

    for (const auto& rec : report.records) {
        if (rec.routed) ++report.routed_count;
        if (rec.summary) ++report.summarized_count;
        if (rec.error || rec.decision.error) ++report.error_count;
        report.preds.push_back(rec.decision.parsed);
        report.gts.push_back(rec.gt_label);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

inline nlohmann::json report_to_json(const PipelineReport& report) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& rec : report.records) {
        nlohmann::json r;
        r["clip_id"] = rec.clip_id;
        r["gt_label"] = std::string(1, to_letter(rec.gt_label));
        r["duration_s"] = rec.duration_s;
        r["raw"] = rec.decision.raw;
        r["parsed"] = rec.decision.parsed.is_valid()
                          ? std::string(1, to_letter(rec.decision.parsed.value()))
                          : std::string("invalid");
        r["routed"] = rec.routed;
        r["classifier_timings"] = profiler::timings_to_json(rec.decision.timings);
        if (rec.decision.error) r["classifier_error"] = *rec.decision.error;
        if (rec.summary) r["summary"] = *rec.summary;
        if (rec.summary_timings) r["summarizer_timings"] = profiler::timings_to_json(*rec.summary_timings);
        if (rec.error) r["error"] = *rec.error;
        if (rec.summarizer_prompt) r["summarizer_prompt"] = *rec.summarizer_prompt;
        records.push_back(std::move(r));
    }
    return {{"records", records},
            {"aggregates",
             {{"clips", report.records.size()},
              {"routed", report.routed_count},
              {"summarized", report.summarized_count},
              {"errors", report.error_count}}}};
}

inline PipelineReport report_from_json(const nlohmann::json& j) {
    PipelineReport report;
    for (const auto& r : j.at("records")) {
        ClipRecord rec;
        rec.clip_id = r.at("clip_id").get<std::string>();
        const auto gt = r.at("gt_label").get<std::string>();
        if (auto cls = gt.size() == 1 ? class_from_letter(gt[0]) : std::nullopt)
            rec.gt_label = *cls;
        else
            throw std::runtime_error("pipeline report: bad gt_label");
        rec.duration_s = r.value("duration_s", 0.0);
        rec.decision.clip_id = rec.clip_id;
        rec.decision.raw = r.value("raw", std::string{});
        const auto parsed = r.value("parsed", std::string("invalid"));
        rec.decision.parsed = parsed.size() == 1 && class_from_letter(parsed[0])
                                  ? ParsedLabel::valid(*class_from_letter(parsed[0]), rec.decision.raw)
                                  : ParsedLabel::invalid(rec.decision.raw);
        if (r.contains("classifier_timings"))
            rec.decision.timings = profiler::timings_from_json(r.at("classifier_timings"));
        if (r.contains("classifier_error"))
            rec.decision.error = r.at("classifier_error").get<std::string>();
        rec.routed = r.value("routed", false);
        if (r.contains("summary")) rec.summary = r.at("summary").get<std::string>();
        if (r.contains("summarizer_timings"))
            rec.summary_timings = profiler::timings_from_json(r.at("summarizer_timings"));
        if (r.contains("error")) rec.error = r.at("error").get<std::string>();
        if (r.contains("summarizer_prompt"))
            rec.summarizer_prompt = r.at("summarizer_prompt").get<std::string>();
        report.records.push_back(std::move(rec));
    }
    for (const auto& rec : report.records) {
        if (rec.routed) ++report.routed_count;
        if (rec.summary) ++report.summarized_count;
        if (rec.error || rec.decision.error) ++report.error_count;
        report.preds.push_back(rec.decision.parsed);
        report.gts.push_back(rec.gt_label);
    }
    return report;
}

}  // namespace taur1::pipeline
