#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace taur1 {

// ---------------------------------------------------------------------------
// Label space
// ---------------------------------------------------------------------------

/// Four-way anomaly label space. A is the normal class; B, C and D are the
/// abnormal subtypes (manoeuvre violation, near-collision/collision,
/// abnormal road use).
enum class AnomalyClass : std::uint8_t { A = 0, B = 1, C = 2, D = 3 };

inline constexpr std::array<AnomalyClass, 4> kAllClasses{
    AnomalyClass::A, AnomalyClass::B, AnomalyClass::C, AnomalyClass::D};

constexpr bool is_abnormal(AnomalyClass c) noexcept { return c != AnomalyClass::A; }

constexpr char to_letter(AnomalyClass c) noexcept {
    return static_cast<char>('A' + static_cast<int>(c));
}

constexpr int class_index(AnomalyClass c) noexcept { return static_cast<int>(c); }

inline std::optional<AnomalyClass> class_from_letter(char ch) {
    switch (std::toupper(static_cast<unsigned char>(ch))) {
        case 'A': return AnomalyClass::A;
        case 'B': return AnomalyClass::B;
        case 'C': return AnomalyClass::C;
        case 'D': return AnomalyClass::D;
        default: return std::nullopt;
    }
}

/// Outcome of mapping a raw model output onto the label space. An output
/// that cannot be resolved to exactly one class letter is Invalid and keeps
/// the unmodified raw text.
struct ParsedLabel {
    std::optional<AnomalyClass> label;  // nullopt => invalid format
    std::string raw;                    // original model output

    static ParsedLabel valid(AnomalyClass c, std::string raw_text = {}) {
        return ParsedLabel{c, std::move(raw_text)};
    }
    static ParsedLabel invalid(std::string raw_text) {
        return ParsedLabel{std::nullopt, std::move(raw_text)};
    }

    bool is_valid() const noexcept { return label.has_value(); }
    AnomalyClass value() const {
        if (!label) throw std::logic_error("ParsedLabel: value() on invalid label");
        return *label;
    }
};

/// Resolves a raw model output to a class letter. The letter must appear as
/// a standalone token (surrounding punctuation/parentheses and an attached
/// "answer:" prefix are stripped, case-insensitive). Exactly one distinct
/// candidate letter is required; anything else is Invalid. Total: never
/// throws.
inline ParsedLabel parse_anomaly_label(const std::string& raw) {
    auto strip_edges = [](std::string_view t) {
        while (!t.empty() && !std::isalnum(static_cast<unsigned char>(t.front()))) t.remove_prefix(1);
        while (!t.empty() && !std::isalnum(static_cast<unsigned char>(t.back()))) t.remove_suffix(1);
        return t;
    };

    std::optional<AnomalyClass> found;
    bool ambiguous = false;
    std::size_t i = 0;
    while (i < raw.size() && !ambiguous) {
        while (i < raw.size() && std::isspace(static_cast<unsigned char>(raw[i]))) ++i;
        std::size_t start = i;
        while (i < raw.size() && !std::isspace(static_cast<unsigned char>(raw[i]))) ++i;
        if (start == i) continue;

        std::string token(raw.substr(start, i - start));
        std::transform(token.begin(), token.end(), token.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        std::string_view t = strip_edges(token);
        if (t.size() > 7 && t.substr(0, 7) == "answer:") t = strip_edges(t.substr(7));
        if (t.size() != 1) continue;

        if (auto cls = class_from_letter(t.front())) {
            if (found && *found != *cls) ambiguous = true;
            found = cls;
        }
    }
    if (found && !ambiguous) return ParsedLabel::valid(*found, raw);
    return ParsedLabel::invalid(raw);
}

// ---------------------------------------------------------------------------
// QA taxonomy
// ---------------------------------------------------------------------------

/// The five decomposed tasks followed by the two final tasks.
enum class QACategory : std::uint8_t {
    Environment = 0,
    ObjectGrounding,
    TimeWindow,
    Reasoning,
    Description,
    Classification,
    Summarization,
};

inline constexpr std::array<QACategory, 7> kAllQACategories{
    QACategory::Environment,    QACategory::ObjectGrounding, QACategory::TimeWindow,
    QACategory::Reasoning,      QACategory::Description,     QACategory::Classification,
    QACategory::Summarization};

inline constexpr std::array<QACategory, 5> kDecomposedCategories{
    QACategory::Environment, QACategory::ObjectGrounding, QACategory::TimeWindow,
    QACategory::Reasoning,   QACategory::Description};

inline std::string_view qa_category_name(QACategory c) {
    switch (c) {
        case QACategory::Environment: return "environment";
        case QACategory::ObjectGrounding: return "object_grounding";
        case QACategory::TimeWindow: return "time_window";
        case QACategory::Reasoning: return "reasoning";
        case QACategory::Description: return "description";
        case QACategory::Classification: return "classification";
        case QACategory::Summarization: return "summarization";
    }
    return "unknown";
}

inline std::optional<QACategory> qa_category_from_name(std::string_view name) {
    for (QACategory c : kAllQACategories)
        if (qa_category_name(c) == name) return c;
    return std::nullopt;
}

struct QAPair {
    std::string clip_id;
    QACategory category = QACategory::Environment;
    std::string question;
    std::string answer;
};

// ---------------------------------------------------------------------------
// Clips and annotations
// ---------------------------------------------------------------------------

struct VideoClip {
    std::string clip_id;
    std::string site_id;      // camera site namespace
    double duration_s = 0.0;  // > 0
    AnomalyClass label = AnomalyClass::A;
    std::string media_ref;    // opaque locator; never dereferenced here
};

inline bool is_specified(const std::optional<std::string>& field) {
    return field.has_value() && !field->empty();
}
inline bool is_specified(const std::optional<std::vector<std::string>>& field) {
    return field.has_value() && !field->empty();
}

/// Environment factors; a factor counts as specified iff present and
/// non-empty.
struct EnvAnnotation {
    std::optional<std::string> time_of_day;
    std::optional<std::string> weather;
    std::optional<std::string> surface;
    std::optional<std::string> road;
};

struct IdentityAnnotation {
    std::optional<std::string> vehicle_type;
    std::optional<std::string> color;
};

/// Location fields hold one text per annotated phase of the event.
struct LocationAnnotation {
    std::optional<std::vector<std::string>> frame_position;
    std::optional<std::vector<std::string>> environment_position;
};

struct TimeWindow {
    double start_s = 0.0;
    double end_s = 0.0;
};

struct DecomposedAnnotation {
    EnvAnnotation env;
    IdentityAnnotation identity;
    LocationAnnotation location;
    std::string description;
    std::string reasoning;
    std::optional<TimeWindow> time_window;
    std::string summary;
};

struct DatasetManifest {
    std::vector<VideoClip> clips;
    std::unordered_map<std::string, DecomposedAnnotation> annotations;
    std::vector<QAPair> qa_pairs;
};

/// Full structural validation; throws std::invalid_argument on the first
/// violation found.
inline void validate_manifest(const DatasetManifest& m) {
    std::unordered_map<std::string, const VideoClip*> by_id;
    by_id.reserve(m.clips.size());
    for (const auto& c : m.clips) {
        if (c.clip_id.empty()) throw std::invalid_argument("manifest: empty clip_id");
        if (!by_id.emplace(c.clip_id, &c).second)
            throw std::invalid_argument("manifest: duplicate clip_id '" + c.clip_id + "'");
        if (!(c.duration_s > 0.0))
            throw std::invalid_argument("manifest: non-positive duration for clip '" + c.clip_id + "'");
        if (c.site_id.empty())
            throw std::invalid_argument("manifest: empty site_id for clip '" + c.clip_id + "'");
    }
    for (const auto& qa : m.qa_pairs) {
        if (!by_id.count(qa.clip_id))
            throw std::invalid_argument("manifest: qa pair references unknown clip '" + qa.clip_id + "'");
        if (qa.question.empty() || qa.answer.empty())
            throw std::invalid_argument("manifest: empty question/answer for clip '" + qa.clip_id + "'");
    }
    for (const auto& [clip_id, ann] : m.annotations) {
        auto it = by_id.find(clip_id);
        if (it == by_id.end())
            throw std::invalid_argument("manifest: annotation references unknown clip '" + clip_id + "'");
        const VideoClip& clip = *it->second;
        if (ann.time_window) {
            const auto& tw = *ann.time_window;
            if (!(0.0 <= tw.start_s && tw.start_s < tw.end_s && tw.end_s <= clip.duration_s))
                throw std::invalid_argument("manifest: bad time window for clip '" + clip_id + "'");
        }
        if (is_abnormal(clip.label) && ann.summary.empty())
            throw std::invalid_argument("manifest: abnormal clip '" + clip_id + "' lacks a summary");
    }
}

// ---------------------------------------------------------------------------
// Stratified split
// ---------------------------------------------------------------------------

struct SplitResult {
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
};

/// Per-class test allocation proportional to class frequency, rounded by
/// largest remainder (ties broken by class order A..D). Within a class,
/// membership is drawn by a seed-keyed Fisher-Yates shuffle over the
/// lexicographically sorted clip ids, so a fixed (manifest, seed) pair
/// always yields the same split. Output id lists follow manifest order.
inline SplitResult stratified_split(const DatasetManifest& manifest, int test_count,
                                    std::uint64_t seed) {
    const auto total = static_cast<long long>(manifest.clips.size());
    if (test_count < 0 || test_count > total)
        throw std::invalid_argument("stratified_split: test_count out of range");

    std::array<std::vector<std::string>, 4> per_class;
    for (const auto& c : manifest.clips) per_class[class_index(c.label)].push_back(c.clip_id);

    // Largest-remainder allocation in exact integer arithmetic.
    std::array<long long, 4> alloc{};
    long long assigned = 0;
    std::array<std::pair<long long, int>, 4> remainders{};  // (numerator, class)
    for (int k = 0; k < 4; ++k) {
        const long long n_k = static_cast<long long>(per_class[k].size());
        alloc[k] = total > 0 ? (static_cast<long long>(test_count) * n_k) / total : 0;
        remainders[k] = {total > 0 ? (static_cast<long long>(test_count) * n_k) % total : 0, k};
        assigned += alloc[k];
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (long long extra = test_count - assigned, i = 0; extra > 0; --extra, ++i)
        alloc[remainders[static_cast<std::size_t>(i)].second] += 1;

    std::mt19937_64 rng(seed);
    std::unordered_set<std::string> test_set;
    for (int k = 0; k < 4; ++k) {
        auto& ids = per_class[k];
        std::sort(ids.begin(), ids.end());
        // explicit Fisher-Yates keeps the draw identical across platforms
        for (std::size_t i = ids.size(); i > 1; --i)
            std::swap(ids[i - 1], ids[rng() % i]);
        for (long long i = 0; i < alloc[k]; ++i) test_set.insert(ids[static_cast<std::size_t>(i)]);
    }

    SplitResult out;
    for (const auto& c : manifest.clips) {
        if (test_set.count(c.clip_id))
            out.test_ids.push_back(c.clip_id);
        else
            out.train_ids.push_back(c.clip_id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset statistics
// ---------------------------------------------------------------------------

struct StatsReport {
    std::size_t total_clips = 0;
    std::array<std::size_t, 4> per_class{};               // indexed by AnomalyClass
    std::map<std::string, std::size_t> per_site;
    double total_duration_s = 0.0;
    double histogram_bin_width_s = 30.0;
    std::vector<std::size_t> duration_histogram;           // bin i covers [i*w, (i+1)*w)
    std::size_t total_qa_pairs = 0;
    std::map<std::string, double> qa_category_proportions; // sums to 1 when QA pairs exist
};

inline StatsReport dataset_stats(const DatasetManifest& manifest, double bin_width_s = 30.0) {
    if (!(bin_width_s > 0.0)) throw std::invalid_argument("dataset_stats: bin width must be positive");
    StatsReport r;
    r.histogram_bin_width_s = bin_width_s;
    r.total_clips = manifest.clips.size();
    for (const auto& c : manifest.clips) {
        r.per_class[static_cast<std::size_t>(class_index(c.label))] += 1;
        r.per_site[c.site_id] += 1;
        r.total_duration_s += c.duration_s;
        const auto bin = static_cast<std::size_t>(c.duration_s / bin_width_s);
        if (bin >= r.duration_histogram.size()) r.duration_histogram.resize(bin + 1, 0);
        r.duration_histogram[bin] += 1;
    }
    r.total_qa_pairs = manifest.qa_pairs.size();
    if (r.total_qa_pairs > 0) {
        std::map<std::string, std::size_t> counts;
        for (const auto& qa : manifest.qa_pairs) counts[std::string(qa_category_name(qa.category))] += 1;
        for (const auto& [name, n] : counts)
            r.qa_category_proportions[name] =
                static_cast<double>(n) / static_cast<double>(r.total_qa_pairs);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Training plans
// ---------------------------------------------------------------------------

enum class TrainingMethod : std::uint8_t { SFT, GRPO };
enum class ModelRole : std::uint8_t { Classifier, Summarizer };

inline std::string_view training_method_name(TrainingMethod m) {
    return m == TrainingMethod::SFT ? "SFT" : "GRPO";
}
inline std::string_view model_role_name(ModelRole r) {
    return r == ModelRole::Classifier ? "classifier" : "summarizer";
}
inline std::optional<ModelRole> model_role_from_name(std::string_view name) {
    if (name == "classifier") return ModelRole::Classifier;
    if (name == "summarizer") return ModelRole::Summarizer;
    return std::nullopt;
}

struct TrainingStage {
    std::string name;
    std::vector<QACategory> qa_categories;
    int epochs = 1;
    double learning_rate = 0.0;
    TrainingMethod method = TrainingMethod::SFT;
};

struct TrainingPlan {
    ModelRole role = ModelRole::Classifier;
    std::vector<TrainingStage> stages;
};

inline void validate_plan(const TrainingPlan& plan) {
    int grpo_count = 0;
    bool seen_grpo = false;
    for (const auto& s : plan.stages) {
        if (s.epochs <= 0) throw std::invalid_argument("training plan: non-positive epochs");
        if (!(s.learning_rate > 0.0)) throw std::invalid_argument("training plan: non-positive learning rate");
        if (s.method == TrainingMethod::GRPO) {
            ++grpo_count;
            seen_grpo = true;
            if (s.epochs != 1) throw std::invalid_argument("training plan: GRPO stage must run one epoch");
        } else if (seen_grpo) {
            throw std::invalid_argument("training plan: SFT stage after GRPO stage");
        }
    }
    if (grpo_count != 1) throw std::invalid_argument("training plan: exactly one GRPO stage required");
}

/// Emits the staged plan for one model role. Stage defaults (epochs,
/// learning rates, category filters) are fixed; learning rates may be
/// overridden for external trainers with different scaling.
inline TrainingPlan build_training_plan(ModelRole role,
                                        std::optional<double> sft_lr_override = std::nullopt,
                                        std::optional<double> grpo_lr_override = std::nullopt) {
    TrainingPlan plan;
    plan.role = role;
    const double grpo_lr = grpo_lr_override.value_or(1e-6);
    if (role == ModelRole::Classifier) {
        const double sft_lr = sft_lr_override.value_or(5e-6);
        plan.stages = {
            {"sft_decomposed_priors",
             {QACategory::TimeWindow, QACategory::Description, QACategory::Reasoning},
             3, sft_lr, TrainingMethod::SFT},
            {"sft_classification", {QACategory::Classification}, 6, sft_lr, TrainingMethod::SFT},
            {"grpo_classification", {QACategory::Classification}, 1, grpo_lr, TrainingMethod::GRPO},
        };
    } else {
        const double sft_lr = sft_lr_override.value_or(3e-6);
        plan.stages = {
            {"sft_decomposed_all",
             {kDecomposedCategories.begin(), kDecomposedCategories.end()},
             3, sft_lr, TrainingMethod::SFT},
            {"sft_summarization", {QACategory::Summarization}, 4, sft_lr, TrainingMethod::SFT},
            {"grpo_summarization", {QACategory::Summarization}, 1, grpo_lr, TrainingMethod::GRPO},
        };
    }
    validate_plan(plan);
    return plan;
}

}  // namespace taur1
