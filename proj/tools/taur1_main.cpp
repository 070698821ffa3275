// taur1: dataset operations, reward verification, toy GRPO training,
// evaluation, two-layer pipeline execution, and latency profiling behind one
// subcommand-style binary. Exit codes: 0 success, 1 domain error, 2 usage
// error. Machine-readable output goes to stdout, diagnostics to stderr.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "taur1/config.hpp"
#include "taur1/core.hpp"
#include "taur1/grpo.hpp"
#include "taur1/http.hpp"
#include "taur1/judge.hpp"
#include "taur1/manifest_io.hpp"
#include "taur1/metrics.hpp"
#include "taur1/pipeline.hpp"
#include "taur1/profiler.hpp"
#include "taur1/rewards.hpp"

using nlohmann::json;

namespace {

void write_output(const std::string& text, const std::string& out_path) {
    if (out_path.empty() || out_path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream f(out_path);
    if (!f) throw std::runtime_error("cannot open output file: " + out_path);
    f << text;
}

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

// ---------------------------------------------------------------------------
// reward-check
// ---------------------------------------------------------------------------

int run_reward_check() {
    using taur1::AnomalyClass;
    using taur1::ParsedLabel;

    // expected cells restated here independently of the library's branch
    // order; the command fails if any computed cell disagrees
    const double expected[5][4] = {
        {1.5, -1.50, -1.50, -1.50},  // pred A
        {-1.25, 1.5, -0.75, -0.75},  // pred B
        {-1.25, -0.75, 1.5, -0.75},  // pred C
        {-1.25, -0.75, -0.75, 1.5},  // pred D
        {-2.0, -2.0, -2.0, -2.0},    // pred Invalid
    };
    const char* row_names[5] = {"A", "B", "C", "D", "Invalid"};

    std::ostringstream out;
    out << "Classification reward table (rows: prediction, columns: ground truth)\n";
    out << "pred        gt=A     gt=B     gt=C     gt=D\n";
    bool all_match = true;
    for (int p = 0; p < 5; ++p) {
        char line[128];
        const ParsedLabel pred = p < 4 ? ParsedLabel::valid(static_cast<AnomalyClass>(p))
                                       : ParsedLabel::invalid("<malformed>");
        double cells[4];
        for (int g = 0; g < 4; ++g) {
            cells[g] = taur1::rewards::classification_reward(pred, static_cast<AnomalyClass>(g));
            if (cells[g] != expected[p][g]) all_match = false;
        }
        std::snprintf(line, sizeof(line), "%-9s %+8.2f %+8.2f %+8.2f %+8.2f\n", row_names[p],
                      cells[0], cells[1], cells[2], cells[3]);
        out << line;
    }
    out << (all_match ? "OK: all 20 reward cells match the defined branches\n"
                      : "MISMATCH: computed rewards deviate from the defined branches\n");
    std::cout << out.str();
    return all_match ? 0 : 1;
}

// ---------------------------------------------------------------------------
// train-grpo-toy
// ---------------------------------------------------------------------------

std::array<double, 4> parse_class_mix(const std::string& spec) {
    std::array<double, 4> mix{};
    std::stringstream ss(spec);
    std::string part;
    int i = 0;
    while (std::getline(ss, part, ':')) {
        if (i >= 4) throw std::invalid_argument("class mix needs exactly four A:B:C:D proportions");
        mix[static_cast<std::size_t>(i++)] = std::stod(part);
    }
    if (i != 4) throw std::invalid_argument("class mix needs exactly four A:B:C:D proportions");
    return mix;
}

std::string curve_to_csv(const std::vector<taur1::grpo::CurvePoint>& curve) {
    std::ostringstream out;
    out << "iteration,mean_reward,fn_rate,fp_rate\n";
    for (const auto& pt : curve)
        out << pt.iteration << "," << fixed(pt.mean_reward, 6) << "," << fixed(pt.fn_rate, 6)
            << "," << fixed(pt.fp_rate, 6) << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// evaluation inputs
// ---------------------------------------------------------------------------

struct PredRecord {
    std::string clip_id;
    std::string raw;                                    // classifier output text
    std::string summary;                                // summarizer output text
    std::optional<taur1::DecomposedAnnotation> annotation;  // structured candidate
};

std::vector<PredRecord> load_predictions(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open predictions file: " + path);
    std::vector<PredRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw std::runtime_error("predictions line " + std::to_string(lineno) + ": bad JSON");
        PredRecord rec;
        rec.clip_id = j.at("clip_id").get<std::string>();
        if (j.contains("raw")) rec.raw = j.at("raw").get<std::string>();
        else if (j.contains("label")) rec.raw = j.at("label").get<std::string>();
        if (j.contains("summary")) rec.summary = j.at("summary").get<std::string>();
        if (j.contains("annotation"))
            rec.annotation = taur1::detail::annotation_from_json(j.at("annotation"));
        out.push_back(std::move(rec));
    }
    return out;
}

json classification_report_json(const taur1::metrics::ClassificationReport& rep) {
    json confusion = json::array();
    for (const auto& row : rep.confusion) confusion.push_back(row);
    return {{"accuracy_4", rep.accuracy_4},   {"weighted_f1_4", rep.weighted_f1_4},
            {"accuracy_2", rep.accuracy_2},   {"weighted_f1_2", rep.weighted_f1_2},
            {"fp", rep.fp},                   {"fn", rep.fn},
            {"confusion", confusion}};
}

// ---------------------------------------------------------------------------
// pipeline helpers
// ---------------------------------------------------------------------------

std::unique_ptr<taur1::pipeline::MockBackend> mock_from_json(const json& layer,
                                                             int per_call_delay_ms) {
    using taur1::pipeline::MockBackend;
    using taur1::pipeline::TransportError;
    std::unordered_map<std::string, MockBackend::Entry> script;
    if (layer.contains("script")) {
        for (const auto& [clip_id, value] : layer.at("script").items()) {
            if (value.is_string()) {
                script[clip_id] = MockBackend::Entry::response(value.get<std::string>());
            } else if (value.is_object() && value.contains("error")) {
                const auto kind = value.at("error").get<std::string>() == "timeout"
                                      ? TransportError::Kind::Timeout
                                      : TransportError::Kind::Transport;
                script[clip_id] = MockBackend::Entry::failure(kind);
            } else {
                throw std::runtime_error("mock script entries must be strings or {\"error\": ...}");
            }
        }
    }
    return std::make_unique<MockBackend>(std::move(script), layer.value("default", std::string("A")),
                                         std::chrono::milliseconds(per_call_delay_ms));
}

}  // namespace

int main(int argc, char** argv) {
    // --config is resolved before flag parsing so flags can override file values
    taur1::AppConfig config;
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") {
            try {
                config = taur1::load_config(argv[i + 1]);
            } catch (const std::exception& e) {
                std::cerr << "error: " << e.what() << "\n";
                return 1;
            }
        }
    }

    CLI::App app{"Traffic-anomaly understanding toolkit: dataset ops, rewards, toy GRPO, "
                 "evaluation, two-layer pipeline, profiling"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "key = value configuration file");

    // --- split ---
    auto* split_cmd = app.add_subcommand("split", "Stratified train/test split of a manifest");
    std::string split_manifest, split_out;
    int split_test_count = 42;
    std::uint64_t split_seed = 0;
    split_cmd->add_option("--manifest", split_manifest, "dataset manifest (JSON Lines)")->required();
    split_cmd->add_option("--test-count", split_test_count, "number of test clips")->required();
    split_cmd->add_option("--seed", split_seed, "split seed")->capture_default_str();
    split_cmd->add_option("--out", split_out, "output path (default stdout)");

    // --- stats ---
    auto* stats_cmd = app.add_subcommand("stats", "Dataset statistics report");
    std::string stats_manifest, stats_out;
    double stats_bin_width = 30.0;
    stats_cmd->add_option("--manifest", stats_manifest, "dataset manifest (JSON Lines)")->required();
    stats_cmd->add_option("--bin-width", stats_bin_width, "duration histogram bin width (s)")->capture_default_str();
    stats_cmd->add_option("--out", stats_out, "output path (default stdout)");

    // --- plan ---
    auto* plan_cmd = app.add_subcommand("plan", "Emit a training plan JSON document");
    std::string plan_role, plan_out;
    double plan_sft_lr = -1.0, plan_grpo_lr = -1.0;
    plan_cmd->add_option("--role", plan_role, "classifier or summarizer")->required();
    plan_cmd->add_option("--sft-lr", plan_sft_lr, "override the SFT learning rate");
    plan_cmd->add_option("--grpo-lr", plan_grpo_lr, "override the GRPO learning rate");
    plan_cmd->add_option("--out", plan_out, "output path (default stdout)");

    // --- reward-check ---
    app.add_subcommand("reward-check", "Print and verify the 20-cell classification reward table");

    // --- train-grpo-toy ---
    auto* toy_cmd = app.add_subcommand("train-grpo-toy", "GRPO training on the toy softmax policy");
    int toy_group_size = config.grpo.group_size;
    double toy_epsilon = config.grpo.epsilon;
    double toy_beta = config.grpo.beta;
    int toy_iters = 300;
    double toy_lr = 0.1;
    std::uint64_t toy_seed = config.grpo.seed;
    std::string toy_mix = "0.25:0.25:0.25:0.25";
    int toy_env_size = 200;
    double toy_noise = 0.25;
    std::string toy_out;
    toy_cmd->add_option("--group-size", toy_group_size, "responses per question (G)")->capture_default_str();
    toy_cmd->add_option("--epsilon", toy_epsilon, "clip half-width")->capture_default_str();
    toy_cmd->add_option("--beta", toy_beta, "KL coefficient")->capture_default_str();
    toy_cmd->add_option("--iters", toy_iters, "training iterations")->capture_default_str();
    toy_cmd->add_option("--lr", toy_lr, "learning rate")->capture_default_str();
    toy_cmd->add_option("--seed", toy_seed, "RNG seed")->capture_default_str();
    toy_cmd->add_option("--class-mix", toy_mix, "A:B:C:D proportions")->capture_default_str();
    toy_cmd->add_option("--env-size", toy_env_size, "synthetic contexts")->capture_default_str();
    toy_cmd->add_option("--noise", toy_noise, "feature noise std")->capture_default_str();
    toy_cmd->add_option("--out", toy_out, "reward-curve CSV path (default stdout)");

    // --- eval-classify ---
    auto* evc_cmd = app.add_subcommand("eval-classify", "Classification metrics report (JSON)");
    std::string evc_manifest, evc_pred, evc_report, evc_out;
    evc_cmd->add_option("--manifest", evc_manifest, "dataset manifest (JSON Lines)");
    evc_cmd->add_option("--pred", evc_pred, "predictions JSONL: {clip_id, raw}");
    evc_cmd->add_option("--report", evc_report, "pipeline report JSON to evaluate");
    evc_cmd->add_option("--out", evc_out, "output path (default stdout)");

    // --- eval-summarize ---
    auto* evs_cmd = app.add_subcommand("eval-summarize", "Summarization metrics per clip (CSV)");
    std::string evs_manifest, evs_pred, evs_verdicts, evs_judge_endpoint, evs_out;
    bool evs_rule_judge = false;
    evs_cmd->add_option("--manifest", evs_manifest, "dataset manifest (JSON Lines)")->required();
    evs_cmd->add_option("--pred", evs_pred, "predictions JSONL: {clip_id, summary[, annotation]}")
        ->required();
    evs_cmd->add_option("--verdicts", evs_verdicts, "replay verdicts JSONL: {clip_id, env, ...}");
    evs_cmd->add_flag("--rule-judge", evs_rule_judge,
                      "score with the deterministic rule-based judge (needs structured candidates)");
    evs_cmd->add_option("--judge-endpoint", evs_judge_endpoint,
                        "remote judge endpoint (chat completions)");
    evs_cmd->add_option("--out", evs_out, "output path (default stdout)");

    // --- run-pipeline ---
    auto* pipe_cmd = app.add_subcommand("run-pipeline", "Run the two-layer cascade over a manifest");
    std::string pipe_manifest, pipe_mock_script, pipe_out;
    std::string pipe_classifier_endpoint = config.classifier_endpoint;
    std::string pipe_summarizer_endpoint = config.summarizer_endpoint;
    std::string pipe_classifier_model = config.classifier_model;
    std::string pipe_summarizer_model = config.summarizer_model;
    int pipe_workers = config.pipeline_workers;
    bool pipe_no_prior = false, pipe_record_prompts = false;
    pipe_cmd->add_option("--manifest", pipe_manifest, "dataset manifest (JSON Lines)")->required();
    pipe_cmd->add_option("--classifier-endpoint", pipe_classifier_endpoint,
                         "first-layer chat-completion endpoint");
    pipe_cmd->add_option("--summarizer-endpoint", pipe_summarizer_endpoint,
                         "second-layer chat-completion endpoint");
    pipe_cmd->add_option("--classifier-model", pipe_classifier_model, "first-layer model name");
    pipe_cmd->add_option("--summarizer-model", pipe_summarizer_model, "second-layer model name");
    pipe_cmd->add_option("--mock-script", pipe_mock_script,
                         "scripted mock backends (JSON) instead of live endpoints");
    std::string pipe_glosses;
    pipe_cmd->add_option("--glosses", pipe_glosses, "class-gloss JSON asset override");
    pipe_cmd->add_option("--workers", pipe_workers, "bounded worker pool size")->capture_default_str();
    pipe_cmd->add_flag("--no-prior-label", pipe_no_prior,
                       "omit the prior-label sentence from summarizer prompts");
    pipe_cmd->add_flag("--record-prompts", pipe_record_prompts,
                       "include summarizer prompts in the report");
    pipe_cmd->add_option("--out", pipe_out, "report path (default stdout)");

    // --- profile ---
    auto* prof_cmd = app.add_subcommand("profile", "Deployment-efficiency table from a report");
    std::string prof_report, prof_json_out;
    prof_cmd->add_option("--report", prof_report, "pipeline report JSON with timings")->required();
    prof_cmd->add_option("--json", prof_json_out, "also write the JSON twin to this path");

    // let global options (--config) appear after the subcommand name too
    for (auto* sub : app.get_subcommands([](CLI::App*) { return true; })) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // prints help, exit 0
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // usage error
    }

    try {
        if (split_cmd->parsed()) {
            const auto manifest = taur1::load_manifest_jsonl(split_manifest);
            const auto split = taur1::stratified_split(manifest, split_test_count, split_seed);
            json out = {{"train_ids", split.train_ids}, {"test_ids", split.test_ids}};
            write_output(out.dump(2) + "\n", split_out);
            return 0;
        }

        if (stats_cmd->parsed()) {
            const auto manifest = taur1::load_manifest_jsonl(stats_manifest);
            const auto stats = taur1::dataset_stats(manifest, stats_bin_width);
            write_output(taur1::stats_to_json(stats).dump(2) + "\n", stats_out);
            return 0;
        }

        if (plan_cmd->parsed()) {
            const auto role = taur1::model_role_from_name(plan_role);
            if (!role) throw std::invalid_argument("unknown role '" + plan_role + "'");
            const auto plan = taur1::build_training_plan(
                *role, plan_sft_lr > 0 ? std::optional<double>(plan_sft_lr) : std::nullopt,
                plan_grpo_lr > 0 ? std::optional<double>(plan_grpo_lr) : std::nullopt);
            write_output(taur1::plan_to_json(plan).dump(2) + "\n", plan_out);
            return 0;
        }

        if (app.get_subcommand("reward-check")->parsed()) {
            return run_reward_check();
        }

        if (toy_cmd->parsed()) {
            taur1::grpo::GrpoConfig grpo_config = config.grpo;
            grpo_config.group_size = toy_group_size;
            grpo_config.epsilon = toy_epsilon;
            grpo_config.beta = toy_beta;
            grpo_config.seed = toy_seed;
            const auto env =
                taur1::grpo::make_synthetic_env(toy_env_size, parse_class_mix(toy_mix), toy_seed,
                                                toy_noise);
            const auto result = taur1::grpo::train_toy_grpo(env, grpo_config, toy_iters, toy_lr);
            write_output(curve_to_csv(result.curve), toy_out);
            const auto errors = taur1::grpo::count_argmax_errors(result.policy, env.contexts);
            std::cerr << "final mean reward " << fixed(result.curve.back().mean_reward, 4)
                      << ", argmax errors on the training contexts: fn=" << errors.fn
                      << " fp=" << errors.fp << "\n";
            return 0;
        }

        if (evc_cmd->parsed()) {
            std::vector<taur1::ParsedLabel> preds;
            std::vector<taur1::AnomalyClass> gts;
            if (!evc_report.empty()) {
                std::ifstream f(evc_report);
                if (!f) throw std::runtime_error("cannot open report: " + evc_report);
                const auto report = taur1::pipeline::report_from_json(json::parse(f));
                preds = report.preds;
                gts = report.gts;
            } else if (!evc_manifest.empty() && !evc_pred.empty()) {
                const auto manifest = taur1::load_manifest_jsonl(evc_manifest);
                std::unordered_map<std::string, taur1::AnomalyClass> label_of;
                for (const auto& c : manifest.clips) label_of[c.clip_id] = c.label;
                for (const auto& rec : load_predictions(evc_pred)) {
                    auto it = label_of.find(rec.clip_id);
                    if (it == label_of.end())
                        throw std::runtime_error("prediction for unknown clip '" + rec.clip_id + "'");
                    preds.push_back(taur1::parse_anomaly_label(rec.raw));
                    gts.push_back(it->second);
                }
            } else {
                throw std::invalid_argument(
                    "eval-classify needs either --report or --manifest with --pred");
            }
            const auto rep = taur1::metrics::confusion_and_counts(preds, gts);
            write_output(classification_report_json(rep).dump(2) + "\n", evc_out);
            return 0;
        }

        if (evs_cmd->parsed()) {
            const auto manifest = taur1::load_manifest_jsonl(evs_manifest);
            const auto preds = load_predictions(evs_pred);

            std::unordered_map<std::string, taur1::rewards::JudgeVerdict> verdicts;
            if (!evs_verdicts.empty()) {
                std::ifstream f(evs_verdicts);
                if (!f) throw std::runtime_error("cannot open verdicts file: " + evs_verdicts);
                std::string line;
                while (std::getline(f, line)) {
                    if (line.empty()) continue;
                    const auto j = json::parse(line);
                    verdicts[j.at("clip_id").get<std::string>()] = taur1::judge::verdict_from_json(j);
                }
            }

            taur1::judge::JudgeOptions judge_options;
            judge_options.model = config.judge_model;
            judge_options.reasoning = config.judge_reasoning;
            if (!config.judge_system_prompt_eval_path.empty())
                judge_options.system_prompt_override =
                    taur1::prompts::load_prompt_asset(config.judge_system_prompt_eval_path);
            const std::string judge_endpoint =
                !evs_judge_endpoint.empty() ? evs_judge_endpoint : config.judge_endpoint;
            const bool use_remote = verdicts.empty() && !evs_rule_judge && !judge_endpoint.empty();
            if (verdicts.empty() && !evs_rule_judge && !use_remote)
                throw std::invalid_argument(
                    "eval-summarize needs a G-Score source: --verdicts, --rule-judge, or "
                    "--judge-endpoint");

            if (use_remote) {
                // fan out across clips with the configured concurrency bound
                std::vector<taur1::judge::JudgeRequest> requests;
                for (const auto& rec : preds) {
                    auto it = manifest.annotations.find(rec.clip_id);
                    if (it == manifest.annotations.end())
                        throw std::runtime_error("no annotation for clip '" + rec.clip_id + "'");
                    requests.push_back(taur1::judge::build_judge_request(
                        it->second, rec.summary, taur1::judge::JudgeMode::Eval, judge_options,
                        rec.clip_id));
                }
                const auto judged = taur1::judge::judge_many(
                    [&]() -> std::unique_ptr<taur1::judge::JudgeClient> {
                        auto client = std::make_unique<taur1::HttpJudgeClient>(judge_endpoint);
                        client->max_retries = config.judge_max_retries;
                        client->backoff_base_ms = config.judge_backoff_base_ms;
                        return client;
                    },
                    requests, config.judge_concurrency);
                for (const auto& jc : judged) {
                    if (jc.response)
                        verdicts[jc.clip_id] = jc.response->verdict;
                    else
                        std::cerr << "warning: " << jc.error << " (null verdict recorded for '"
                                  << jc.clip_id << "')\n";
                }
            }

            std::ostringstream csv;
            csv << "clip_id,bleu,rouge_l,meteor,g_score\n";
            double sum_bleu = 0, sum_rouge = 0, sum_meteor = 0, sum_g = 0;
            int n = 0, n_g = 0;
            for (const auto& rec : preds) {
                auto it = manifest.annotations.find(rec.clip_id);
                if (it == manifest.annotations.end())
                    throw std::runtime_error("no annotation for clip '" + rec.clip_id + "'");
                const auto& gt = it->second;
                const auto cand_tokens = taur1::metrics::tokenize(rec.summary);
                const auto ref_tokens = taur1::metrics::tokenize(gt.summary);
                const double b = taur1::metrics::bleu(cand_tokens, ref_tokens);
                const double r = taur1::metrics::rouge_l(cand_tokens, ref_tokens);
                const double m = taur1::metrics::meteor(cand_tokens, ref_tokens);

                std::optional<double> g;
                if (auto v = verdicts.find(rec.clip_id); v != verdicts.end()) {
                    g = taur1::rewards::g_score(v->second);
                } else if (evs_rule_judge) {
                    if (!rec.annotation)
                        throw std::runtime_error("clip '" + rec.clip_id +
                                                 "': --rule-judge needs a structured candidate "
                                                 "annotation in the predictions file");
                    g = taur1::rewards::g_score(taur1::judge::rule_based_judge(gt, *rec.annotation));
                }
                csv << rec.clip_id << "," << fixed(b, 6) << "," << fixed(r, 6) << ","
                    << fixed(m, 6) << ",";
                if (g) {
                    csv << fixed(*g, 6);
                    sum_g += *g;
                    ++n_g;
                }
                csv << "\n";
                sum_bleu += b;
                sum_rouge += r;
                sum_meteor += m;
                ++n;
            }
            if (n == 0) throw std::invalid_argument("no predictions to evaluate");
            csv << "mean," << fixed(sum_bleu / n, 6) << "," << fixed(sum_rouge / n, 6) << ","
                << fixed(sum_meteor / n, 6) << ",";
            if (n_g > 0) csv << fixed(sum_g / n_g, 6);
            csv << "\n";
            write_output(csv.str(), evs_out);
            return 0;
        }

        if (pipe_cmd->parsed()) {
            const auto manifest = taur1::load_manifest_jsonl(pipe_manifest);
            std::unique_ptr<taur1::pipeline::InferenceBackend> classifier, summarizer;
            if (!pipe_mock_script.empty()) {
                std::ifstream f(pipe_mock_script);
                if (!f) throw std::runtime_error("cannot open mock script: " + pipe_mock_script);
                const auto j = json::parse(f);
                const int delay = j.value("per_call_delay_ms", 0);
                classifier = mock_from_json(j.value("classifier", json::object()), delay);
                summarizer = mock_from_json(j.value("summarizer", json::object()), delay);
            } else {
                if (pipe_classifier_endpoint.empty() || pipe_summarizer_endpoint.empty())
                    throw std::invalid_argument(
                        "run-pipeline needs either --mock-script or both endpoints");
                classifier = std::make_unique<taur1::HttpBackend>(pipe_classifier_endpoint,
                                                                  pipe_classifier_model);
                summarizer = std::make_unique<taur1::HttpBackend>(pipe_summarizer_endpoint,
                                                                  pipe_summarizer_model);
            }
            taur1::pipeline::PipelineConfig pipeline_config;
            pipeline_config.workers = pipe_workers;
            pipeline_config.use_prior_label = !pipe_no_prior;
            pipeline_config.serialize_backends = config.pipeline_serialize_backends;
            pipeline_config.record_prompts = pipe_record_prompts;
            if (!pipe_glosses.empty())
                pipeline_config.glosses = taur1::prompts::load_class_glosses(pipe_glosses);
            else if (!config.pipeline_glosses_path.empty())
                pipeline_config.glosses =
                    taur1::prompts::load_class_glosses(config.pipeline_glosses_path);
            const auto report =
                taur1::pipeline::run_pipeline(*classifier, *summarizer, manifest.clips,
                                              pipeline_config);
            write_output(taur1::pipeline::report_to_json(report).dump(2) + "\n", pipe_out);
            std::cerr << "pipeline: " << report.records.size() << " clips, "
                      << report.routed_count << " routed, " << report.summarized_count
                      << " summarized, " << report.error_count << " errors\n";
            return 0;
        }

        if (prof_cmd->parsed()) {
            std::ifstream f(prof_report);
            if (!f) throw std::runtime_error("cannot open report: " + prof_report);
            const auto report = taur1::pipeline::report_from_json(json::parse(f));

            std::vector<taur1::profiler::StageTimings> classifier_timings, summarizer_timings;
            std::vector<double> classifier_durations, summarizer_durations;
            for (const auto& rec : report.records) {
                classifier_timings.push_back(rec.decision.timings);
                classifier_durations.push_back(rec.duration_s);
                if (rec.summary_timings) {
                    summarizer_timings.push_back(*rec.summary_timings);
                    summarizer_durations.push_back(rec.duration_s);
                }
            }
            if (classifier_timings.empty())
                throw std::invalid_argument("report contains no clips to profile");
            const auto classifier_profile =
                taur1::profiler::aggregate(classifier_timings, classifier_durations);
            const auto summarizer_profile =
                summarizer_timings.empty()
                    ? taur1::profiler::RunProfile::from_totals(0.0, 0, 0.0)
                    : taur1::profiler::aggregate(summarizer_timings, summarizer_durations);
            std::cout << taur1::profiler::render_efficiency_table(classifier_profile,
                                                                  summarizer_profile);
            if (!prof_json_out.empty())
                write_output(taur1::profiler::efficiency_to_json(classifier_profile,
                                                                 summarizer_profile)
                                     .dump(2) +
                                 "\n",
                             prof_json_out);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    std::cerr << "error: no subcommand executed\n";
    return 2;
}
