#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "taur1/core.hpp"

namespace taur1::metrics {

using TokenSequence = std::vector<std::string>;

/// Canonical tokenizer for all text metrics: lowercase, split on whitespace,
/// strip leading/trailing punctuation per token, drop empty tokens. Internal
/// punctuation (hyphens etc.) is preserved.
inline TokenSequence tokenize(std::string_view text) {
    TokenSequence out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (start == i) continue;
        std::string_view tok = text.substr(start, i - start);
        while (!tok.empty() && !std::isalnum(static_cast<unsigned char>(tok.front()))) tok.remove_prefix(1);
        while (!tok.empty() && !std::isalnum(static_cast<unsigned char>(tok.back()))) tok.remove_suffix(1);
        if (tok.empty()) continue;
        std::string lowered(tok);
        std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        out.push_back(std::move(lowered));
    }
    return out;
}

namespace detail {

inline std::unordered_map<std::string, int> ngram_counts(const TokenSequence& seq, int n) {
    std::unordered_map<std::string, int> counts;
    if (static_cast<int>(seq.size()) < n) return counts;
    for (std::size_t i = 0; i + n <= seq.size(); ++i) {
        std::string key = seq[i];
        for (int k = 1; k < n; ++k) {
            key.push_back('\x1f');
            key += seq[i + k];
        }
        counts[key] += 1;
    }
    return counts;
}

inline std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            if (a[i - 1] == b[j - 1])
                cur[j] = prev[j - 1] + 1;
            else
                cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

/// Exact minimal chunk count over all maximum-cardinality exact-match
/// alignments. Depth-first search over candidate positions, preferring run
/// continuation; branch-and-bound on the chunk count. The node budget is a
/// safety valve for adversarial inputs; ordinary sentences never reach it.
class ChunkMinimizer {
public:
    ChunkMinimizer(const TokenSequence& cand, const TokenSequence& ref)
        : cand_(cand), ref_(ref), ref_used_(ref.size(), false) {
        std::unordered_map<std::string, int> cand_counts, ref_counts;
        for (const auto& t : cand) cand_counts[t] += 1;
        for (const auto& t : ref) ref_counts[t] += 1;
        for (const auto& [w, c] : cand_counts) {
            auto it = ref_counts.find(w);
            const int m = it == ref_counts.end() ? 0 : std::min(c, it->second);
            if (m > 0) needed_[w] = m;
            total_matches_ += m;
        }
        cand_avail_ = cand_counts;
        for (std::size_t j = 0; j < ref.size(); ++j) ref_positions_[ref[j]].push_back(j);
    }

    int total_matches() const { return total_matches_; }

    int minimal_chunks() {
        if (total_matches_ == 0) return 0;
        best_ = std::numeric_limits<int>::max();
        dfs(0, -2, 0);
        return best_;
    }

private:
    void dfs(std::size_t idx, long long prev_ref, int chunks) {
        if (chunks >= best_) return;
        if (++nodes_ > kNodeBudget) return;
        if (idx == cand_.size()) {
            bool done = true;
            for (const auto& [w, n] : needed_)
                if (n > 0) { done = false; break; }
            if (done) best_ = std::min(best_, chunks);
            return;
        }
        const std::string& w = cand_[idx];
        auto need_it = needed_.find(w);
        const bool can_match = need_it != needed_.end() && need_it->second > 0;

        if (can_match) {
            auto& positions = ref_positions_[w];
            // continuation of the current run first: no new chunk
            const long long cont = prev_ref + 1;
            auto try_match = [&](std::size_t j, int add) {
                ref_used_[j] = true;
                need_it->second -= 1;
                cand_avail_[w] -= 1;
                dfs(idx + 1, static_cast<long long>(j), chunks + add);
                cand_avail_[w] += 1;
                need_it->second += 1;
                ref_used_[j] = false;
            };
            if (cont >= 0 && cont < static_cast<long long>(ref_.size()) &&
                !ref_used_[static_cast<std::size_t>(cont)] && ref_[static_cast<std::size_t>(cont)] == w)
                try_match(static_cast<std::size_t>(cont), 0);
            for (std::size_t j : positions) {
                if (ref_used_[j] || static_cast<long long>(j) == cont) continue;
                try_match(j, 1);
            }
        }
        // skip this candidate occurrence when enough later occurrences remain
        const int avail = cand_avail_[w];
        const int need = can_match ? need_it->second : 0;
        if (avail - 1 >= need) {
            cand_avail_[w] -= 1;
            dfs(idx + 1, -2, chunks);
            cand_avail_[w] += 1;
        }
    }

    static constexpr std::uint64_t kNodeBudget = 2'000'000;
    const TokenSequence& cand_;
    const TokenSequence& ref_;
    std::vector<bool> ref_used_;
    std::unordered_map<std::string, int> needed_;
    std::unordered_map<std::string, int> cand_avail_;
    std::unordered_map<std::string, std::vector<std::size_t>> ref_positions_;
    int total_matches_ = 0;
    int best_ = 0;
    std::uint64_t nodes_ = 0;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Text-generation metrics
// ---------------------------------------------------------------------------

/// Sentence BLEU-4: uniform n-gram weights, clipped modified precision,
/// brevity penalty exp(1 - |ref|/|cand|) when the candidate is shorter.
/// Zero n-gram precisions are replaced by eps = 1e-9 so the geometric mean
/// stays finite. Empty candidate scores 0.
inline double bleu(const TokenSequence& candidate, const TokenSequence& reference) {
    if (candidate.empty()) return 0.0;
    constexpr double kEps = 1e-9;
    double log_sum = 0.0;
    for (int n = 1; n <= 4; ++n) {
        const auto cand_counts = detail::ngram_counts(candidate, n);
        const auto ref_counts = detail::ngram_counts(reference, n);
        long long total = 0, matched = 0;
        for (const auto& [gram, c] : cand_counts) {
            total += c;
            auto it = ref_counts.find(gram);
            if (it != ref_counts.end()) matched += std::min(c, it->second);
        }
        const double p = (total > 0 && matched > 0)
                             ? static_cast<double>(matched) / static_cast<double>(total)
                             : kEps;
        log_sum += 0.25 * std::log(p);
    }
    const double bp = candidate.size() < reference.size()
                          ? std::exp(1.0 - static_cast<double>(reference.size()) /
                                               static_cast<double>(candidate.size()))
                          : 1.0;
    return bp * std::exp(log_sum);
}

/// ROUGE-L F1 over the longest common subsequence.
inline double rouge_l(const TokenSequence& candidate, const TokenSequence& reference) {
    if (candidate.empty() || reference.empty()) return 0.0;
    const auto lcs = detail::lcs_length(candidate, reference);
    if (lcs == 0) return 0.0;
    const double p = static_cast<double>(lcs) / static_cast<double>(candidate.size());
    const double r = static_cast<double>(lcs) / static_cast<double>(reference.size());
    return 2.0 * p * r / (p + r);
}

/// METEOR with exact-match unigram alignment (no stemming or synonymy):
/// matches are maximized, then chunks minimized; F_mean = P*R/(0.9P + 0.1R);
/// penalty = 0.5*(chunks/matches)^3. Identical m-token inputs score exactly
/// 1 - 0.5/m^3.
inline double meteor(const TokenSequence& candidate, const TokenSequence& reference) {
    if (candidate.empty() || reference.empty()) return 0.0;
    detail::ChunkMinimizer aligner(candidate, reference);
    const long long m = aligner.total_matches();
    if (m == 0) return 0.0;
    const long long ch = aligner.minimal_chunks();
    const double p = static_cast<double>(m) / static_cast<double>(candidate.size());
    const double r = static_cast<double>(m) / static_cast<double>(reference.size());
    const double f_mean = p * r / (0.9 * p + 0.1 * r);
    const double penalty =
        0.5 * static_cast<double>(ch * ch * ch) / static_cast<double>(m * m * m);
    return f_mean * (1.0 - penalty);
}

// ---------------------------------------------------------------------------
// Classification metrics
// ---------------------------------------------------------------------------

enum class BinaryLabel : std::uint8_t { Normal = 0, Abnormal = 1 };

inline BinaryLabel binary_collapse(AnomalyClass c) {
    return is_abnormal(c) ? BinaryLabel::Abnormal : BinaryLabel::Normal;
}

inline void check_eval_inputs(std::size_t preds, std::size_t gts) {
    if (preds != gts) throw std::invalid_argument("metrics: prediction/ground-truth length mismatch");
    if (preds == 0) throw std::invalid_argument("metrics: empty evaluation set");
}

/// Fraction of exact matches; an Invalid prediction never matches.
inline double accuracy(const std::vector<ParsedLabel>& preds, const std::vector<AnomalyClass>& gts) {
    check_eval_inputs(preds.size(), gts.size());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i].is_valid() && preds[i].value() == gts[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

/// Support-weighted mean of per-class F1 over a square confusion matrix
/// (rows = ground truth, columns = prediction). Per-class F1 is 0 when
/// precision + recall is 0.
inline double weighted_f1_from_confusion(const std::vector<std::vector<long long>>& m) {
    const std::size_t k = m.size();
    double weighted = 0.0, total_support = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        long long tp = m[c][c], support = 0, predicted = 0;
        for (std::size_t j = 0; j < k; ++j) support += m[c][j];
        for (std::size_t i = 0; i < k; ++i) predicted += m[i][c];
        const double p = predicted > 0 ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
        const double r = support > 0 ? static_cast<double>(tp) / static_cast<double>(support) : 0.0;
        const double f1 = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
        weighted += static_cast<double>(support) * f1;
        total_support += static_cast<double>(support);
    }
    return total_support > 0.0 ? weighted / total_support : 0.0;
}

/// Unweighted mean of per-class F1 (negative control for the averaging-mode
/// choice; not the reported metric).
inline double macro_f1_from_confusion(const std::vector<std::vector<long long>>& m) {
    const std::size_t k = m.size();
    if (k == 0) return 0.0;
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        long long tp = m[c][c], support = 0, predicted = 0;
        for (std::size_t j = 0; j < k; ++j) support += m[c][j];
        for (std::size_t i = 0; i < k; ++i) predicted += m[i][c];
        const double p = predicted > 0 ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
        const double r = support > 0 ? static_cast<double>(tp) / static_cast<double>(support) : 0.0;
        sum += (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }
    return sum / static_cast<double>(k);
}

struct ClassificationReport {
    double accuracy_4 = 0.0;
    double weighted_f1_4 = 0.0;
    double accuracy_2 = 0.0;
    double weighted_f1_2 = 0.0;
    long long fp = 0;  // binary: normals predicted abnormal (Invalid included)
    long long fn = 0;  // binary: abnormals predicted normal (Invalid included)
    std::array<std::array<long long, 4>, 4> confusion{};  // rows = gt, cols = pred
};

namespace detail {

// Invalid predictions carry no class, but the 4x4 matrix must keep row sums
// equal to supports. They are folded onto the binary-wrong side: column A
// for abnormal ground truth (a false negative), column B for normal ground
// truth (a false positive). The fold is what makes every derived count
// treat Invalid as always wrong.
inline int effective_column(const ParsedLabel& pred, AnomalyClass gt) {
    if (pred.is_valid()) return class_index(pred.value());
    return is_abnormal(gt) ? class_index(AnomalyClass::A) : class_index(AnomalyClass::B);
}

}  // namespace detail

/// Full 4x4 confusion matrix plus binary FP/FN counts and the four headline
/// numbers. Binary FP/FN follow the always-wrong convention for Invalid
/// predictions.
inline ClassificationReport confusion_and_counts(const std::vector<ParsedLabel>& preds,
                                                 const std::vector<AnomalyClass>& gts) {
    check_eval_inputs(preds.size(), gts.size());
    ClassificationReport rep;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const int row = class_index(gts[i]);
        const int col = detail::effective_column(preds[i], gts[i]);
        rep.confusion[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)] += 1;
    }

    const auto n = static_cast<double>(preds.size());
    long long diag = 0;
    std::vector<std::vector<long long>> m4(4, std::vector<long long>(4, 0));
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            m4[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
                rep.confusion[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
            if (r == c) diag += rep.confusion[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        }
    rep.accuracy_4 = static_cast<double>(diag) / n;
    rep.weighted_f1_4 = weighted_f1_from_confusion(m4);

    // binary collapse of the folded matrix: index 0 = normal (A), 1 = abnormal
    std::vector<std::vector<long long>> m2(2, std::vector<long long>(2, 0));
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            m2[r == 0 ? 0 : 1][c == 0 ? 0 : 1] +=
                rep.confusion[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    rep.fp = m2[0][1];
    rep.fn = m2[1][0];
    rep.accuracy_2 = static_cast<double>(m2[0][0] + m2[1][1]) / n;
    rep.weighted_f1_2 = weighted_f1_from_confusion(m2);
    return rep;
}

inline double weighted_f1_4(const std::vector<ParsedLabel>& preds,
                            const std::vector<AnomalyClass>& gts) {
    return confusion_and_counts(preds, gts).weighted_f1_4;
}

inline double weighted_f1_2(const std::vector<ParsedLabel>& preds,
                            const std::vector<AnomalyClass>& gts) {
    return confusion_and_counts(preds, gts).weighted_f1_2;
}

inline double accuracy_2(const std::vector<ParsedLabel>& preds,
                         const std::vector<AnomalyClass>& gts) {
    return confusion_and_counts(preds, gts).accuracy_2;
}

}  // namespace taur1::metrics
