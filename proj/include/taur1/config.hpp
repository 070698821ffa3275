#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include "taur1/grpo.hpp"

namespace taur1 {

/// Application configuration shared by the CLI subcommands. Loaded from a
/// flat `key = value` file; unknown keys are rejected. Flags override file
/// values; the judge API key is environment-only.
struct AppConfig {
    // judge
    std::string judge_endpoint;
    std::string judge_model = "gpt-5-mini-2025-08-07";
    std::string judge_reasoning = "low";
    int judge_max_retries = 3;
    int judge_backoff_base_ms = 1000;
    int judge_concurrency = 4;
    std::string judge_system_prompt_eval_path;    // text asset override
    std::string judge_system_prompt_reward_path;  // text asset override
    // inference backends
    std::string classifier_endpoint;
    std::string classifier_model;
    std::string summarizer_endpoint;
    std::string summarizer_model;
    // pipeline
    int pipeline_workers = 4;
    bool pipeline_serialize_backends = false;
    std::string pipeline_glosses_path;  // class-gloss JSON asset override
    // grpo defaults
    grpo::GrpoConfig grpo;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("config: bad boolean for " + key + ": " + v);
}

template <typename T, typename Parse>
T parse_number(const std::string& v, const std::string& key, Parse parse) {
    try {
        return parse(v);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad number for " + key + ": " + v);
    }
}

inline int to_int(const std::string& v, const std::string& key) {
    return parse_number<int>(v, key, [](const std::string& s) { return std::stoi(s); });
}
inline double to_double(const std::string& v, const std::string& key) {
    return parse_number<double>(v, key, [](const std::string& s) { return std::stod(s); });
}
inline std::uint64_t to_u64(const std::string& v, const std::string& key) {
    return parse_number<std::uint64_t>(v, key, [](const std::string& s) { return std::stoull(s); });
}

}  // namespace detail

inline void apply_config_line(AppConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "judge.endpoint") cfg.judge_endpoint = value;
    else if (key == "judge.model") cfg.judge_model = value;
    else if (key == "judge.reasoning") cfg.judge_reasoning = value;
    else if (key == "judge.max_retries") cfg.judge_max_retries = detail::to_int(value, key);
    else if (key == "judge.backoff_base_ms") cfg.judge_backoff_base_ms = detail::to_int(value, key);
    else if (key == "judge.concurrency") cfg.judge_concurrency = detail::to_int(value, key);
    else if (key == "judge.system_prompt_eval") cfg.judge_system_prompt_eval_path = value;
    else if (key == "judge.system_prompt_reward") cfg.judge_system_prompt_reward_path = value;
    else if (key == "classifier.endpoint") cfg.classifier_endpoint = value;
    else if (key == "classifier.model") cfg.classifier_model = value;
    else if (key == "summarizer.endpoint") cfg.summarizer_endpoint = value;
    else if (key == "summarizer.model") cfg.summarizer_model = value;
    else if (key == "pipeline.workers") cfg.pipeline_workers = detail::to_int(value, key);
    else if (key == "pipeline.serialize_backends")
        cfg.pipeline_serialize_backends = detail::parse_bool(value, key);
    else if (key == "pipeline.glosses") cfg.pipeline_glosses_path = value;
    else if (key == "grpo.epsilon") cfg.grpo.epsilon = detail::to_double(value, key);
    else if (key == "grpo.beta") cfg.grpo.beta = detail::to_double(value, key);
    else if (key == "grpo.group_size") cfg.grpo.group_size = detail::to_int(value, key);
    else if (key == "grpo.advantage_epsilon") cfg.grpo.advantage_epsilon = detail::to_double(value, key);
    else if (key == "grpo.seed") cfg.grpo.seed = detail::to_u64(value, key);
    else if (key == "grpo.contexts_per_iter") cfg.grpo.contexts_per_iter = detail::to_int(value, key);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
}

inline AppConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    AppConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const std::string trimmed = detail::trim(line);
        if (trimmed.empty() || trimmed[0] == '#') continue;
        const auto eq = trimmed.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        apply_config_line(cfg, detail::trim(trimmed.substr(0, eq)),
                          detail::trim(trimmed.substr(eq + 1)));
    }
    return cfg;
}

}  // namespace taur1
