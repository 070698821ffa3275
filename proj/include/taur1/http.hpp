#pragma once

// Live chat-completion transports for the judge and the inference backends.
// Kept in a separate header so the HTTP stack is only compiled where needed.

#include <chrono>
#include <cstdlib>
#include <memory>
#include <stdexcept>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "taur1/judge.hpp"
#include "taur1/pipeline.hpp"

namespace taur1 {

namespace detail {

struct SplitUrl {
    std::string base;  // scheme://host[:port]
    std::string path;  // /v1/chat/completions etc.
};

inline SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw std::invalid_argument("endpoint must start with http:// or https://: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/v1/chat/completions"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Judge over HTTP
// ---------------------------------------------------------------------------

/// Chat-completion transport for the remote judge. The API key comes from
/// the environment only.
class HttpJudgeClient : public judge::JudgeClient {
public:
    explicit HttpJudgeClient(const std::string& endpoint, int timeout_s = 60)
        : url_(detail::split_url(endpoint)), client_(url_.base) {
        client_.set_connection_timeout(timeout_s);
        client_.set_read_timeout(timeout_s);
        if (const char* key = std::getenv(judge::kApiKeyEnvVar)) api_key_ = key;
    }

    PostResult post_chat(const std::string& json_body) override {
        httplib::Headers headers{{"Content-Type", "application/json"}};
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        auto res = client_.Post(url_.path, headers, json_body, "application/json");
        PostResult out;
        if (!res) {
            out.error = "transport failure: " + httplib::to_string(res.error());
            return out;
        }
        if (res->status != 200) {
            out.error = "HTTP " + std::to_string(res->status);
            return out;
        }
        try {
            out.content = judge::extract_chat_content(res->body);
            out.ok = true;
        } catch (const judge::JudgeParseError& e) {
            out.error = e.what();
        }
        return out;
    }

private:
    detail::SplitUrl url_;
    httplib::Client client_;
    std::string api_key_;
};

// ---------------------------------------------------------------------------
// Inference backend over HTTP
// ---------------------------------------------------------------------------

inline constexpr const char* kBackendApiKeyEnvVar = "TAU_BACKEND_API_KEY";

/// Live VLM backend speaking the same chat-completion shape as the judge,
/// with the clip forwarded as a video_url content part. Generation timing is
/// wall-clock around the call; stage attribution uses server-reported fields
/// when present. Authentication uses its own environment variable so the
/// judge key never leaves the judge endpoint.
class HttpBackend : public pipeline::InferenceBackend {
public:
    HttpBackend(const std::string& endpoint, std::string model, int timeout_s = 300)
        : url_(detail::split_url(endpoint)), client_(url_.base), model_(std::move(model)) {
        client_.set_connection_timeout(timeout_s);
        client_.set_read_timeout(timeout_s);
        if (const char* key = std::getenv(kBackendApiKeyEnvVar)) api_key_ = key;
    }

    pipeline::BackendResult generate(const pipeline::BackendRequest& request) override {
        nlohmann::json user_content = nlohmann::json::array();
        user_content.push_back({{"type", "text"}, {"text", request.user_prompt}});
        if (!request.media_ref.empty())
            user_content.push_back(
                {{"type", "video_url"}, {"video_url", {{"url", request.media_ref}}}});
        nlohmann::json body = {
            {"model", model_},
            {"messages",
             {{{"role", "system"}, {"content", request.system_prompt}},
              {{"role", "user"}, {"content", user_content}}}},
            {"max_frames", request.params.max_frames},
            {"sample_fps", request.params.sample_fps},
            {"min_video_tokens", request.params.min_video_tokens},
            {"max_video_tokens", request.params.max_video_tokens},
        };

        httplib::Headers headers{{"Content-Type", "application/json"}};
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

        const auto start = std::chrono::steady_clock::now();
        auto res = client_.Post(url_.path, headers, body.dump(), "application/json");
        const double elapsed_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                .count();

        if (!res) {
            const auto kind = res.error() == httplib::Error::Read ||
                                      res.error() == httplib::Error::ConnectionTimeout
                                  ? pipeline::TransportError::Kind::Timeout
                                  : pipeline::TransportError::Kind::Transport;
            throw pipeline::TransportError(kind, "backend transport failure: " +
                                                     httplib::to_string(res.error()));
        }
        if (res->status != 200)
            throw pipeline::TransportError(pipeline::TransportError::Kind::Transport,
                                           "backend HTTP " + std::to_string(res->status));

        pipeline::BackendResult out;
        out.timings.total_ms = elapsed_ms;
        out.timings.model_generation_ms = elapsed_ms;
        nlohmann::json j = nlohmann::json::parse(res->body, nullptr, false);
        if (j.is_discarded())
            throw pipeline::TransportError(pipeline::TransportError::Kind::Transport,
                                           "backend returned malformed JSON");
        try {
            out.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            throw pipeline::TransportError(pipeline::TransportError::Kind::Transport,
                                           "backend response missing choices[0].message.content");
        }
        if (j.contains("timings") && j.at("timings").is_object()) {
            const auto server = profiler::timings_from_json(j.at("timings"));
            if (server.total_ms > 0.0) out.timings = server;
        }
        return out;
    }

private:
    detail::SplitUrl url_;
    httplib::Client client_;
    std::string model_;
    std::string api_key_;
};

}  // namespace taur1
