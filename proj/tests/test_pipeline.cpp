#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>
#include <thread>

#include "taur1/http.hpp"
#include "taur1/metrics.hpp"
#include "taur1/pipeline.hpp"
#include "support.hpp"

using namespace taur1;
using namespace taur1::pipeline;
using taur1_test::make_eval42_manifest;

namespace {

// scripts a classifier that answers every clip with its ground-truth letter
MockBackend perfect_classifier(const DatasetManifest& manifest) {
    std::unordered_map<std::string, MockBackend::Entry> script;
    for (const auto& c : manifest.clips)
        script[c.clip_id] = MockBackend::Entry::response(std::string(1, to_letter(c.label)));
    return MockBackend(std::move(script));
}

MockBackend plain_summarizer() {
    return MockBackend({}, "A vehicle behaves anomalously in the roundabout.");
}

}  // namespace

TEST_CASE("classify_clip parses scripted outputs", "[pipeline]") {
    PipelineConfig config;
    VideoClip clip{"clip_1", "site_01", 30.0, AnomalyClass::C, "videos/clip_1.mp4"};

    SECTION("clean letter") {
        MockBackend backend({{"clip_1", MockBackend::Entry::response("C")}});
        const auto d = classify_clip(backend, clip, config);
        CHECK(d.parsed.is_valid());
        CHECK(d.parsed.value() == AnomalyClass::C);
        CHECK(d.raw == "C");
        CHECK_FALSE(d.error.has_value());
    }
    SECTION("garbage becomes Invalid") {
        MockBackend backend({{"clip_1", MockBackend::Entry::response("hmm, unsure")}});
        const auto d = classify_clip(backend, clip, config);
        CHECK_FALSE(d.parsed.is_valid());
    }
    SECTION("transport error is recorded, parse stays Invalid") {
        MockBackend backend(
            {{"clip_1", MockBackend::Entry::failure(TransportError::Kind::Transport)}});
        const auto d = classify_clip(backend, clip, config);
        CHECK(d.error.has_value());
        CHECK_FALSE(d.parsed.is_valid());
    }
    SECTION("classifier prompt lists all four options") {
        MockBackend backend({{"clip_1", MockBackend::Entry::response("C")}});
        classify_clip(backend, clip, config);
        const auto reqs = backend.requests();
        REQUIRE(reqs.size() == 1);
        for (const char* marker : {"(A)", "(B)", "(C)", "(D)"})
            CHECK(reqs[0].user_prompt.find(marker) != std::string::npos);
        CHECK(reqs[0].media_ref == clip.media_ref);
    }
}

TEST_CASE("summarizer prompt carries the prior label", "[pipeline]") {
    PipelineConfig config;
    VideoClip clip{"clip_9", "site_02", 45.0, AnomalyClass::C, "videos/clip_9.mp4"};
    auto backend = plain_summarizer();

    SECTION("class prior uses the configured gloss verbatim") {
        std::string prompt;
        summarize_clip(backend, clip, ParsedLabel::valid(AnomalyClass::C), config, &prompt);
        CHECK(prompt.find(config.glosses.gloss(AnomalyClass::C)) != std::string::npos);
        CHECK(prompt.find("A first-stage classifier labeled this clip as") != std::string::npos);
    }
    SECTION("Invalid prior maps to the unspecified-anomaly phrasing") {
        std::string prompt;
        summarize_clip(backend, clip, ParsedLabel::invalid("??"), config, &prompt);
        CHECK(prompt.find("an unspecified anomaly") != std::string::npos);
    }
    SECTION("prior A is rejected") {
        CHECK_THROWS_AS(
            summarize_clip(backend, clip, ParsedLabel::valid(AnomalyClass::A), config),
            std::invalid_argument);
    }
    SECTION("prior on/off differ only by the prior sentence") {
        std::string with_prior, without_prior;
        summarize_clip(backend, clip, ParsedLabel::valid(AnomalyClass::B), config, &with_prior);
        PipelineConfig no_prior = config;
        no_prior.use_prior_label = false;
        summarize_clip(backend, clip, ParsedLabel::valid(AnomalyClass::B), no_prior, &without_prior);

        const std::string sentence =
            prompts::prior_label_sentence(ParsedLabel::valid(AnomalyClass::B), config.glosses);
        REQUIRE(with_prior.rfind(sentence + "\n", 0) == 0);  // prefix
        CHECK(with_prior.substr(sentence.size() + 1) == without_prior);
    }
    SECTION("prompts are pure functions of their inputs") {
        std::string a, b;
        summarize_clip(backend, clip, ParsedLabel::valid(AnomalyClass::D), config, &a);
        summarize_clip(backend, clip, ParsedLabel::valid(AnomalyClass::D), config, &b);
        CHECK(a == b);
    }
}

TEST_CASE("pipeline routes exactly the abnormal clips", "[pipeline]") {
    const auto manifest = make_eval42_manifest();  // 34 abnormal / 8 normal
    auto classifier = perfect_classifier(manifest);
    auto summarizer = plain_summarizer();

    const auto report = run_pipeline(classifier, summarizer, manifest.clips);
    CHECK(report.records.size() == 42);
    CHECK(report.routed_count == 34);
    CHECK(report.summarized_count == 34);
    CHECK(report.error_count == 0);
    CHECK(summarizer.calls() == 34);

    for (const auto& rec : report.records) {
        if (rec.gt_label == AnomalyClass::A) {
            CHECK_FALSE(rec.routed);
            CHECK_FALSE(rec.summary.has_value());
        } else {
            CHECK(rec.routed);
            CHECK(rec.summary.has_value());
        }
    }
}

TEST_CASE("pipeline never summarizes an all-normal batch", "[pipeline]") {
    const auto manifest = make_eval42_manifest();
    std::unordered_map<std::string, MockBackend::Entry> script;
    for (const auto& c : manifest.clips) script[c.clip_id] = MockBackend::Entry::response("A");
    MockBackend classifier(std::move(script));
    auto summarizer = plain_summarizer();

    const auto report = run_pipeline(classifier, summarizer, manifest.clips);
    CHECK(report.routed_count == 0);
    CHECK(summarizer.calls() == 0);
}

TEST_CASE("pipeline isolates per-clip failures", "[pipeline]") {
    const auto manifest = make_eval42_manifest();
    auto classifier = perfect_classifier(manifest);
    auto summarizer = plain_summarizer();
    // inject a timeout on one abnormal clip's summarizer call
    const std::string victim = manifest.clips.back().clip_id;  // label D in this fixture
    summarizer.set_entry(victim, MockBackend::Entry::failure(TransportError::Kind::Timeout));

    const auto report = run_pipeline(classifier, summarizer, manifest.clips);
    CHECK(report.records.size() == 42);
    CHECK(report.error_count == 1);
    CHECK(report.summarized_count == 33);
    int complete = 0;
    for (const auto& rec : report.records)
        complete += !rec.error && !rec.decision.error;
    CHECK(complete == 41);
    for (const auto& rec : report.records)
        if (rec.clip_id == victim) {
            CHECK(rec.routed);
            CHECK(rec.error.has_value());
            CHECK_FALSE(rec.summary.has_value());
        }
}

TEST_CASE("invalid classifier outputs route fail-safe", "[pipeline]") {
    const auto manifest = make_eval42_manifest();
    std::unordered_map<std::string, MockBackend::Entry> script;
    for (const auto& c : manifest.clips) script[c.clip_id] = MockBackend::Entry::response("A");
    script[manifest.clips[0].clip_id] = MockBackend::Entry::response("no answer");  // Invalid
    script[manifest.clips[1].clip_id] =
        MockBackend::Entry::failure(TransportError::Kind::Transport);  // error
    MockBackend classifier(std::move(script));
    auto summarizer = plain_summarizer();

    const auto report = run_pipeline(classifier, summarizer, manifest.clips);
    CHECK(report.routed_count == 2);
    CHECK(summarizer.calls() == 2);
    const auto reqs = summarizer.requests();
    for (const auto& r : reqs)
        CHECK(r.user_prompt.find("an unspecified anomaly") != std::string::npos);
}

TEST_CASE("routing partition property", "[pipeline][property]") {
    const auto manifest = make_eval42_manifest();
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        std::unordered_map<std::string, MockBackend::Entry> script;
        for (const auto& c : manifest.clips) {
            switch (rng() % 4) {
                case 0: script[c.clip_id] = MockBackend::Entry::response("A"); break;
                case 1: script[c.clip_id] = MockBackend::Entry::response("B"); break;
                case 2: script[c.clip_id] = MockBackend::Entry::response("??"); break;
                default:
                    script[c.clip_id] =
                        MockBackend::Entry::failure(TransportError::Kind::Transport);
            }
        }
        MockBackend classifier(std::move(script));
        auto summarizer = plain_summarizer();
        const auto report = run_pipeline(classifier, summarizer, manifest.clips);

        std::size_t routed = 0;
        for (const auto& rec : report.records) {
            const bool clean_a = rec.decision.parsed.is_valid() &&
                                 rec.decision.parsed.value() == AnomalyClass::A &&
                                 !rec.decision.error;
            REQUIRE(rec.routed == !clean_a);
            routed += rec.routed;
            // every routed clip has exactly one summarizer outcome
            if (rec.routed) REQUIRE((rec.summary.has_value() || rec.error.has_value()));
            if (!rec.routed) {
                REQUIRE_FALSE(rec.summary.has_value());
                REQUIRE_FALSE(rec.error.has_value());
            }
        }
        REQUIRE(routed == report.routed_count);
        REQUIRE(summarizer.calls() == static_cast<int>(routed));
    }
}

TEST_CASE("report label lists round-trip into metrics", "[pipeline]") {
    const auto manifest = make_eval42_manifest();
    std::unordered_map<std::string, MockBackend::Entry> script;
    // three normals misclassified abnormal, everything else correct
    int flipped = 0;
    for (const auto& c : manifest.clips) {
        if (c.label == AnomalyClass::A && flipped < 3) {
            script[c.clip_id] = MockBackend::Entry::response("C");
            ++flipped;
        } else {
            script[c.clip_id] = MockBackend::Entry::response(std::string(1, to_letter(c.label)));
        }
    }
    MockBackend classifier(std::move(script));
    auto summarizer = plain_summarizer();
    const auto report = run_pipeline(classifier, summarizer, manifest.clips);

    const auto rep = metrics::confusion_and_counts(report.preds, report.gts);
    CHECK(rep.fp == 3);
    CHECK(rep.fn == 0);
    CHECK_THAT(rep.weighted_f1_2, Catch::Matchers::WithinAbs(0.9218, 1e-4));

    // serialization round trip preserves the same counts
    const auto restored = pipeline::report_from_json(pipeline::report_to_json(report));
    const auto rep2 = metrics::confusion_and_counts(restored.preds, restored.gts);
    CHECK(rep2.fp == rep.fp);
    CHECK(rep2.fn == rep.fn);
    CHECK(restored.routed_count == report.routed_count);
    CHECK(restored.summarized_count == report.summarized_count);
}

TEST_CASE("mock per-call delay shows up in stage timings", "[pipeline]") {
    VideoClip clip{"clip_t", "site_01", 10.0, AnomalyClass::B, "videos/t.mp4"};
    MockBackend backend({{"clip_t", MockBackend::Entry::response("B")}}, "A",
                        std::chrono::milliseconds(10));
    PipelineConfig config;
    const auto d = classify_clip(backend, clip, config);
    CHECK(d.timings.model_generation_ms >= 10.0);
    CHECK(d.timings.total_ms >= d.timings.model_generation_ms);
}

TEST_CASE("worker pool matches single-thread results", "[pipeline]") {
    const auto manifest = make_eval42_manifest();
    auto c1 = perfect_classifier(manifest);
    auto s1 = plain_summarizer();
    PipelineConfig serial;
    serial.workers = 1;
    const auto a = run_pipeline(c1, s1, manifest.clips, serial);

    auto c2 = perfect_classifier(manifest);
    auto s2 = plain_summarizer();
    PipelineConfig parallel;
    parallel.workers = 8;
    const auto b = run_pipeline(c2, s2, manifest.clips, parallel);

    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        REQUIRE(a.records[i].clip_id == b.records[i].clip_id);
        REQUIRE(a.records[i].routed == b.records[i].routed);
        REQUIRE(a.records[i].summary == b.records[i].summary);
    }
    CHECK(a.routed_count == b.routed_count);
}

namespace {

// backend that violates the contract by throwing something other than a
// TransportError
class MisbehavingBackend : public InferenceBackend {
public:
    BackendResult generate(const BackendRequest& request) override {
        if (request.clip_id == "eval_05") throw std::runtime_error("backend bug");
        BackendResult r;
        r.text = "A";
        return r;
    }
};

}  // namespace

TEST_CASE("non-transport backend exceptions stay isolated per clip", "[pipeline]") {
    const auto manifest = make_eval42_manifest();
    MisbehavingBackend classifier;
    auto summarizer = plain_summarizer();
    const auto report = run_pipeline(classifier, summarizer, manifest.clips);
    CHECK(report.records.size() == manifest.clips.size());
    CHECK(report.error_count == 1);
    for (const auto& rec : report.records)
        if (rec.clip_id == "eval_05") {
            REQUIRE(rec.error.has_value());
            CHECK(rec.error->find("backend bug") != std::string::npos);
        }
}

TEST_CASE("pipeline rejects empty batches and bad worker counts", "[pipeline]") {
    auto classifier = plain_summarizer();
    auto summarizer = plain_summarizer();
    CHECK_THROWS_AS(run_pipeline(classifier, summarizer, {}), std::invalid_argument);
    const auto manifest = make_eval42_manifest();
    PipelineConfig config;
    config.workers = 0;
    CHECK_THROWS_AS(run_pipeline(classifier, summarizer, manifest.clips, config),
                    std::invalid_argument);
}

TEST_CASE("live HTTP backend speaks the chat-completion wire shape", "[pipeline][http]") {
    httplib::Server server;
    nlohmann::json seen_body;
    server.Post("/v1/chat/completions", [&](const httplib::Request& q, httplib::Response& s) {
        seen_body = nlohmann::json::parse(q.body);
        nlohmann::json envelope = {
            {"choices", {{{"message", {{"role", "assistant"}, {"content", "B"}}}}}},
            {"timings",
             {{"model_generation_ms", 42.0}, {"total_ms", 50.0}, {"input_encoding_ms", 3.0}}}};
        s.set_content(envelope.dump(), "application/json");
    });
    server.Post("/broken", [](const httplib::Request&, httplib::Response& s) { s.status = 500; });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    const std::string base = "http://127.0.0.1:" + std::to_string(port);

    SECTION("request carries prompts, media and generation hints") {
        taur1::HttpBackend backend(base, "tiny-vlm");
        BackendRequest req{"clip_7", "system text", "user text", "videos/clip_7.mp4", {}};
        const auto result = backend.generate(req);
        CHECK(result.text == "B");
        // server-reported stage timings win over wall-clock
        CHECK(result.timings.model_generation_ms == 42.0);
        CHECK(result.timings.total_ms == 50.0);

        CHECK(seen_body.at("model") == "tiny-vlm");
        CHECK(seen_body.at("max_frames") == 180);
        CHECK(seen_body.at("sample_fps") == 2.0);
        CHECK(seen_body.at("min_video_tokens") == 32);
        CHECK(seen_body.at("max_video_tokens") == 256);
        const auto& user = seen_body.at("messages")[1];
        CHECK(user.at("role") == "user");
        bool has_video = false;
        for (const auto& part : user.at("content"))
            if (part.at("type") == "video_url")
                has_video = part.at("video_url").at("url") == "videos/clip_7.mp4";
        CHECK(has_video);
    }
    SECTION("non-200 responses surface as transport errors") {
        taur1::HttpBackend backend(base + "/broken", "tiny-vlm");
        BackendRequest req{"clip_7", "s", "u", "m", {}};
        CHECK_THROWS_AS(backend.generate(req), TransportError);
    }

    server.stop();
    server_thread.join();
}
