#pragma once

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "taur1/core.hpp"

namespace taur1 {

// JSON Lines manifest, one record per clip:
//   {"clip_id", "site_id", "duration_s", "label", "media_ref",
//    "annotation": {...}, "qa": [...]}
// Optional annotation fields are omitted when unspecified; the label is a
// single letter "A".."D".

namespace detail {

inline nlohmann::json annotation_to_json(const DecomposedAnnotation& a) {
    nlohmann::json j;
    nlohmann::json env = nlohmann::json::object();
    if (a.env.time_of_day) env["time_of_day"] = *a.env.time_of_day;
    if (a.env.weather) env["weather"] = *a.env.weather;
    if (a.env.surface) env["surface"] = *a.env.surface;
    if (a.env.road) env["road"] = *a.env.road;
    j["env"] = env;
    nlohmann::json identity = nlohmann::json::object();
    if (a.identity.vehicle_type) identity["vehicle_type"] = *a.identity.vehicle_type;
    if (a.identity.color) identity["color"] = *a.identity.color;
    j["identity"] = identity;
    nlohmann::json location = nlohmann::json::object();
    if (a.location.frame_position) location["frame_position"] = *a.location.frame_position;
    if (a.location.environment_position)
        location["environment_position"] = *a.location.environment_position;
    j["location"] = location;
    j["description"] = a.description;
    j["reasoning"] = a.reasoning;
    if (a.time_window) j["time_window"] = {a.time_window->start_s, a.time_window->end_s};
    j["summary"] = a.summary;
    return j;
}

inline DecomposedAnnotation annotation_from_json(const nlohmann::json& j) {
    DecomposedAnnotation a;
    if (j.contains("env")) {
        const auto& e = j.at("env");
        if (e.contains("time_of_day")) a.env.time_of_day = e.at("time_of_day").get<std::string>();
        if (e.contains("weather")) a.env.weather = e.at("weather").get<std::string>();
        if (e.contains("surface")) a.env.surface = e.at("surface").get<std::string>();
        if (e.contains("road")) a.env.road = e.at("road").get<std::string>();
    }
    if (j.contains("identity")) {
        const auto& i = j.at("identity");
        if (i.contains("vehicle_type")) a.identity.vehicle_type = i.at("vehicle_type").get<std::string>();
        if (i.contains("color")) a.identity.color = i.at("color").get<std::string>();
    }
    if (j.contains("location")) {
        const auto& l = j.at("location");
        if (l.contains("frame_position"))
            a.location.frame_position = l.at("frame_position").get<std::vector<std::string>>();
        if (l.contains("environment_position"))
            a.location.environment_position =
                l.at("environment_position").get<std::vector<std::string>>();
    }
    a.description = j.value("description", std::string{});
    a.reasoning = j.value("reasoning", std::string{});
    if (j.contains("time_window") && !j.at("time_window").is_null()) {
        const auto& tw = j.at("time_window");
        a.time_window = TimeWindow{tw.at(0).get<double>(), tw.at(1).get<double>()};
    }
    a.summary = j.value("summary", std::string{});
    return a;
}

}  // namespace detail

inline void write_manifest_jsonl(const DatasetManifest& m, std::ostream& out) {
    std::unordered_map<std::string, std::vector<const QAPair*>> qa_by_clip;
    for (const auto& qa : m.qa_pairs) qa_by_clip[qa.clip_id].push_back(&qa);
    for (const auto& c : m.clips) {
        nlohmann::json rec;
        rec["clip_id"] = c.clip_id;
        rec["site_id"] = c.site_id;
        rec["duration_s"] = c.duration_s;
        rec["label"] = std::string(1, to_letter(c.label));
        rec["media_ref"] = c.media_ref;
        if (auto it = m.annotations.find(c.clip_id); it != m.annotations.end())
            rec["annotation"] = detail::annotation_to_json(it->second);
        nlohmann::json qa = nlohmann::json::array();
        if (auto it = qa_by_clip.find(c.clip_id); it != qa_by_clip.end()) {
            for (const QAPair* p : it->second)
                qa.push_back({{"category", std::string(qa_category_name(p->category))},
                              {"question", p->question},
                              {"answer", p->answer}});
        }
        rec["qa"] = qa;
        out << rec.dump() << "\n";
    }
}

inline void save_manifest_jsonl(const DatasetManifest& m, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open manifest for writing: " + path);
    write_manifest_jsonl(m, f);
}

inline DatasetManifest read_manifest_jsonl(std::istream& in, bool validate = true) {
    DatasetManifest m;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const nlohmann::json rec = nlohmann::json::parse(line);
            VideoClip clip;
            clip.clip_id = rec.at("clip_id").get<std::string>();
            clip.site_id = rec.at("site_id").get<std::string>();
            clip.duration_s = rec.at("duration_s").get<double>();
            const auto label = rec.at("label").get<std::string>();
            auto cls = label.size() == 1 ? class_from_letter(label[0]) : std::nullopt;
            if (!cls) throw std::runtime_error("bad label '" + label + "'");
            clip.label = *cls;
            clip.media_ref = rec.value("media_ref", std::string{});
            if (rec.contains("annotation") && !rec.at("annotation").is_null())
                m.annotations.emplace(clip.clip_id,
                                      detail::annotation_from_json(rec.at("annotation")));
            if (rec.contains("qa")) {
                for (const auto& q : rec.at("qa")) {
                    QAPair p;
                    p.clip_id = clip.clip_id;
                    auto cat = qa_category_from_name(q.at("category").get<std::string>());
                    if (!cat) throw std::runtime_error("unknown qa category");
                    p.category = *cat;
                    p.question = q.at("question").get<std::string>();
                    p.answer = q.at("answer").get<std::string>();
                    m.qa_pairs.push_back(std::move(p));
                }
            }
            m.clips.push_back(std::move(clip));
        } catch (const std::exception& e) {
            throw std::runtime_error("manifest line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (validate) validate_manifest(m);
    return m;
}

inline DatasetManifest load_manifest_jsonl(const std::string& path, bool validate = true) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open manifest: " + path);
    return read_manifest_jsonl(f, validate);
}

// Training plan JSON document, consumed by external training scripts.
inline nlohmann::json plan_to_json(const TrainingPlan& plan) {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& s : plan.stages) {
        nlohmann::json cats = nlohmann::json::array();
        for (QACategory c : s.qa_categories) cats.push_back(std::string(qa_category_name(c)));
        stages.push_back({{"name", s.name},
                          {"qa_categories", cats},
                          {"epochs", s.epochs},
                          {"learning_rate", s.learning_rate},
                          {"method", std::string(training_method_name(s.method))}});
    }
    return {{"role", std::string(model_role_name(plan.role))}, {"stages", stages}};
}

inline nlohmann::json stats_to_json(const StatsReport& r) {
    nlohmann::json per_class = nlohmann::json::object();
    for (AnomalyClass c : kAllClasses)
        per_class[std::string(1, to_letter(c))] = r.per_class[static_cast<std::size_t>(class_index(c))];
    nlohmann::json per_site = nlohmann::json::object();
    for (const auto& [site, n] : r.per_site) per_site[site] = n;
    nlohmann::json proportions = nlohmann::json::object();
    for (const auto& [name, p] : r.qa_category_proportions) proportions[name] = p;
    return {{"total_clips", r.total_clips},
            {"per_class", per_class},
            {"per_site", per_site},
            {"total_duration_s", r.total_duration_s},
            {"duration_histogram",
             {{"bin_width_s", r.histogram_bin_width_s}, {"counts", r.duration_histogram}}},
            {"total_qa_pairs", r.total_qa_pairs},
            {"qa_category_proportions", proportions}};
}

}  // namespace taur1
