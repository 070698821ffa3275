#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "taur1/core.hpp"
#include "taur1/rewards.hpp"

namespace taur1::grpo {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct GrpoConfig {
    double epsilon = 0.2;             // clip half-width
    double beta = 0.04;               // KL coefficient
    int group_size = 8;               // G, responses sampled per question
    double advantage_epsilon = 1e-8;  // added to the std in normalization
    std::uint64_t seed = 0;
    int contexts_per_iter = 8;        // questions sampled per outer iteration
};

inline void validate_config(const GrpoConfig& c) {
    if (!(c.epsilon > 0.0)) throw std::invalid_argument("grpo: epsilon must be positive");
    if (c.beta < 0.0) throw std::invalid_argument("grpo: beta must be non-negative");
    if (c.group_size < 2) throw std::invalid_argument("grpo: group size must be at least 2");
    if (!(c.advantage_epsilon > 0.0))
        throw std::invalid_argument("grpo: advantage epsilon must be positive");
    if (c.contexts_per_iter < 1) throw std::invalid_argument("grpo: contexts per iteration must be >= 1");
}

// ---------------------------------------------------------------------------
// Toy policy: linear softmax over {A, B, C, D, Invalid}
// ---------------------------------------------------------------------------

inline constexpr int kToyOutputs = 5;       // four classes plus the malformed symbol
inline constexpr int kInvalidOutput = 4;

inline ParsedLabel output_to_label(int output_index) {
    if (output_index < 0 || output_index >= kToyOutputs)
        throw std::invalid_argument("output_to_label: index out of range");
    if (output_index == kInvalidOutput) return ParsedLabel::invalid("<malformed>");
    return ParsedLabel::valid(static_cast<AnomalyClass>(output_index));
}

/// Linear-softmax categorical policy: logits(ctx)_k = sum_f w[f][k] * ctx[f].
/// Serves as current, old, or reference policy depending on which copy the
/// caller holds.
class ToyPolicy {
public:
    ToyPolicy(int num_features, int num_outputs = kToyOutputs)
        : num_features_(num_features),
          num_outputs_(num_outputs),
          weights_(static_cast<std::size_t>(num_features) * static_cast<std::size_t>(num_outputs), 0.0) {
        if (num_features < 1 || num_outputs < 2)
            throw std::invalid_argument("ToyPolicy: bad dimensions");
    }

    int num_features() const { return num_features_; }
    int num_outputs() const { return num_outputs_; }
    std::vector<double>& weights() { return weights_; }
    const std::vector<double>& weights() const { return weights_; }
    double& weight(int feature, int output) {
        return weights_[static_cast<std::size_t>(feature) * static_cast<std::size_t>(num_outputs_) +
                        static_cast<std::size_t>(output)];
    }
    double weight(int feature, int output) const {
        return weights_[static_cast<std::size_t>(feature) * static_cast<std::size_t>(num_outputs_) +
                        static_cast<std::size_t>(output)];
    }

    std::vector<double> logits(std::span<const double> context) const {
        check_context(context);
        std::vector<double> z(static_cast<std::size_t>(num_outputs_), 0.0);
        for (int f = 0; f < num_features_; ++f)
            for (int k = 0; k < num_outputs_; ++k)
                z[static_cast<std::size_t>(k)] += weight(f, k) * context[static_cast<std::size_t>(f)];
        return z;
    }

    /// Softmax output distribution; sums to one within 1e-12.
    std::vector<double> probs(std::span<const double> context) const {
        auto z = logits(context);
        const double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (auto& v : z) {
            v = std::exp(v - zmax);
            sum += v;
        }
        for (auto& v : z) v /= sum;
        return z;
    }

    double log_prob(std::span<const double> context, int output) const {
        if (output < 0 || output >= num_outputs_)
            throw std::invalid_argument("ToyPolicy: output index out of range");
        auto z = logits(context);
        const double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - zmax);
        return z[static_cast<std::size_t>(output)] - zmax - std::log(sum);
    }

    int sample(std::span<const double> context, std::mt19937_64& rng) const {
        const auto p = probs(context);
        const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        double acc = 0.0;
        for (int k = 0; k < num_outputs_; ++k) {
            acc += p[static_cast<std::size_t>(k)];
            if (u < acc) return k;
        }
        return num_outputs_ - 1;
    }

    int argmax(std::span<const double> context) const {
        const auto p = probs(context);
        return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    }

private:
    void check_context(std::span<const double> context) const {
        if (static_cast<int>(context.size()) != num_features_)
            throw std::invalid_argument("ToyPolicy: context feature dimension mismatch");
    }

    int num_features_;
    int num_outputs_;
    std::vector<double> weights_;  // row-major [feature][output]
};

// ---------------------------------------------------------------------------
// Synthetic environment
// ---------------------------------------------------------------------------

struct SyntheticContext {
    std::vector<double> features;
    AnomalyClass label = AnomalyClass::A;
};

struct SyntheticEnv {
    std::vector<SyntheticContext> contexts;
    std::array<double, 4> class_mix{};
};

/// Desk-scale stand-in for video QA inputs. Features are a bias term plus
/// one noisy indicator per class, so the label is linearly recoverable.
/// Class counts follow the mix by largest remainder; everything is
/// deterministic in the seed.
inline SyntheticEnv make_synthetic_env(int count, const std::array<double, 4>& class_mix,
                                       std::uint64_t seed, double noise_sd = 0.25) {
    if (count < 1) throw std::invalid_argument("make_synthetic_env: count must be >= 1");
    const double mix_sum = class_mix[0] + class_mix[1] + class_mix[2] + class_mix[3];
    if (std::abs(mix_sum - 1.0) > 1e-9)
        throw std::invalid_argument("make_synthetic_env: class mix must sum to 1");
    for (double p : class_mix)
        if (p < 0.0) throw std::invalid_argument("make_synthetic_env: negative class proportion");

    std::array<int, 4> alloc{};
    std::array<std::pair<double, int>, 4> rema{};
    int assigned = 0;
    for (int k = 0; k < 4; ++k) {
        const double exact = class_mix[static_cast<std::size_t>(k)] * count;
        alloc[static_cast<std::size_t>(k)] = static_cast<int>(std::floor(exact));
        rema[static_cast<std::size_t>(k)] = {exact - std::floor(exact), k};
        assigned += alloc[static_cast<std::size_t>(k)];
    }
    std::stable_sort(rema.begin(), rema.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int extra = count - assigned, i = 0; extra > 0; --extra, ++i)
        alloc[static_cast<std::size_t>(rema[static_cast<std::size_t>(i)].second)] += 1;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sd);
    SyntheticEnv env;
    env.class_mix = class_mix;
    for (int k = 0; k < 4; ++k) {
        for (int i = 0; i < alloc[static_cast<std::size_t>(k)]; ++i) {
            SyntheticContext ctx;
            ctx.label = static_cast<AnomalyClass>(k);
            ctx.features.assign(5, 0.0);
            ctx.features[0] = 1.0;  // bias
            for (int c = 0; c < 4; ++c)
                ctx.features[static_cast<std::size_t>(1 + c)] = (c == k ? 1.0 : 0.0) + noise(rng);
            env.contexts.push_back(std::move(ctx));
        }
    }
    // deterministic shuffle so class blocks are interleaved
    for (std::size_t i = env.contexts.size(); i > 1; --i)
        std::swap(env.contexts[i - 1], env.contexts[rng() % i]);
    return env;
}

// ---------------------------------------------------------------------------
// Rollout groups
// ---------------------------------------------------------------------------

struct RolloutResponse {
    ParsedLabel output = ParsedLabel::invalid("");
    int output_index = kInvalidOutput;  // index into the toy output space
    double logp_new = 0.0;              // log pi_theta(o|q)
    double logp_old = 0.0;              // log pi_theta_old(o|q), frozen
    double reward = 0.0;
    double advantage = 0.0;
};

struct RolloutGroup {
    std::string question_id;
    std::vector<double> context;  // features of q
    std::vector<RolloutResponse> responses;
};

// ---------------------------------------------------------------------------
// Core operations
// ---------------------------------------------------------------------------

/// exp(logp_new - logp_old), with the exponent clamped to [-30, 30].
inline double policy_ratio(double logp_new, double logp_old) {
    if (!std::isfinite(logp_new) || !std::isfinite(logp_old))
        throw std::invalid_argument("policy_ratio: non-finite log-probability");
    return std::exp(std::clamp(logp_new - logp_old, -30.0, 30.0));
}

/// Group-standardized advantages: (r - mean) / (std_pop + eps). A
/// zero-variance group maps to all-zero advantages.
inline std::vector<double> group_advantages(const std::vector<double>& rewards,
                                            double advantage_epsilon) {
    if (rewards.size() < 2)
        throw std::invalid_argument("group_advantages: need at least two rewards");
    std::vector<double> adv(rewards.size(), 0.0);
    // identical rewards mean zero variance; check before summing so float
    // rounding cannot leak a spurious nonzero std
    const auto [lo, hi] = std::minmax_element(rewards.begin(), rewards.end());
    if (*lo == *hi) return adv;
    const double mean =
        std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(rewards.size());
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(rewards.size());
    const double sd = std::sqrt(var);
    if (sd == 0.0) return adv;
    for (std::size_t i = 0; i < rewards.size(); ++i)
        adv[i] = (rewards[i] - mean) / (sd + advantage_epsilon);
    return adv;
}

/// min(ratio*A, clip(ratio, 1-eps, 1+eps)*A) — never exceeds ratio*A.
inline double clipped_surrogate(double ratio, double advantage, double epsilon) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("clipped_surrogate: epsilon must be positive");
    const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
    return std::min(ratio * advantage, clipped * advantage);
}

/// Analytic categorical KL(policy || reference) at one context; >= 0.
inline double kl_to_reference(const ToyPolicy& policy, const ToyPolicy& reference,
                              std::span<const double> context) {
    if (policy.num_outputs() != reference.num_outputs() ||
        policy.num_features() != reference.num_features())
        throw std::invalid_argument("kl_to_reference: policy dimension mismatch");
    const auto p = policy.probs(context);
    const auto q = reference.probs(context);
    double kl = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k)
        if (p[k] > 0.0) kl += p[k] * (std::log(p[k]) - std::log(q[k]));
    return std::max(kl, 0.0);
}

struct GrpoStep {
    double loss = 0.0;
    std::vector<double> grad;  // same layout as ToyPolicy::weights()
};

/// Negated GRPO objective for one group and its exact gradient with respect
/// to the toy policy weights. logp_old and the advantages are treated as
/// constants; the clipped branch contributes zero gradient (including at the
/// clip boundary). Lower loss is better.
inline GrpoStep grpo_loss_and_grad(const RolloutGroup& group, const ToyPolicy& policy,
                                   const ToyPolicy& reference, const GrpoConfig& config) {
    validate_config(config);
    if (group.responses.empty()) throw std::invalid_argument("grpo_loss_and_grad: empty group");
    if (static_cast<int>(group.context.size()) != policy.num_features())
        throw std::invalid_argument("grpo_loss_and_grad: context feature dimension mismatch");
    if (policy.num_outputs() != reference.num_outputs() ||
        policy.num_features() != reference.num_features())
        throw std::invalid_argument("grpo_loss_and_grad: policy/reference shape mismatch");

    const int F = policy.num_features();
    const int K = policy.num_outputs();
    const auto ctx = std::span<const double>(group.context);
    const auto p = policy.probs(ctx);

    // log-probs under the current policy, via the same logits
    std::vector<double> logp(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) logp[k] = std::log(p[k]);

    const double G = static_cast<double>(group.responses.size());
    double surrogate_sum = 0.0;
    // d(surrogate)/d(logit_j), accumulated over the group
    std::vector<double> dlogit(static_cast<std::size_t>(K), 0.0);

    for (const auto& resp : group.responses) {
        const int k = resp.output_index;
        if (k < 0 || k >= K) throw std::invalid_argument("grpo_loss_and_grad: response output out of range");
        const double ratio = policy_ratio(logp[static_cast<std::size_t>(k)], resp.logp_old);
        const double a = resp.advantage;
        const double unclipped = ratio * a;
        const double clipped = std::clamp(ratio, 1.0 - config.epsilon, 1.0 + config.epsilon) * a;
        surrogate_sum += std::min(unclipped, clipped);

        bool pass;
        if (unclipped < clipped)
            pass = true;
        else if (unclipped > clipped)
            pass = false;
        else  // equal branches: gradient flows only strictly inside the band
            pass = ratio > 1.0 - config.epsilon && ratio < 1.0 + config.epsilon;
        if (pass) {
            const double coef = a * ratio;  // d(ratio*A)/d(logp_new)
            for (int j = 0; j < K; ++j) {
                const double indicator = (j == k) ? 1.0 : 0.0;
                dlogit[static_cast<std::size_t>(j)] +=
                    coef * (indicator - p[static_cast<std::size_t>(j)]);
            }
        }
    }

    // KL term and its logit gradient: dKL/dz_j = p_j * (l_j - KL)
    const auto q = reference.probs(ctx);
    double kl = 0.0;
    std::vector<double> l(static_cast<std::size_t>(K), 0.0);
    for (int j = 0; j < K; ++j) {
        l[static_cast<std::size_t>(j)] =
            logp[static_cast<std::size_t>(j)] - std::log(q[static_cast<std::size_t>(j)]);
        kl += p[static_cast<std::size_t>(j)] * l[static_cast<std::size_t>(j)];
    }
    kl = std::max(kl, 0.0);

    GrpoStep step;
    step.loss = -(surrogate_sum / G - config.beta * kl);
    step.grad.assign(static_cast<std::size_t>(F) * static_cast<std::size_t>(K), 0.0);
    for (int f = 0; f < F; ++f) {
        const double x = group.context[static_cast<std::size_t>(f)];
        for (int j = 0; j < K; ++j) {
            const double d_surr = dlogit[static_cast<std::size_t>(j)] / G;
            const double d_kl = p[static_cast<std::size_t>(j)] * (l[static_cast<std::size_t>(j)] - kl);
            step.grad[static_cast<std::size_t>(f) * static_cast<std::size_t>(K) +
                      static_cast<std::size_t>(j)] = -(d_surr - config.beta * d_kl) * x;
        }
    }
    return step;
}

// ---------------------------------------------------------------------------
// Toy training loop
// ---------------------------------------------------------------------------

struct CurvePoint {
    int iteration = 0;
    double mean_reward = 0.0;
    double fn_rate = 0.0;  // abnormal ground truth answered A or malformed
    double fp_rate = 0.0;  // normal ground truth answered abnormal or malformed
};

struct ToyTrainResult {
    ToyPolicy policy;
    std::vector<CurvePoint> curve;
};

struct BinaryErrorCounts {
    int fn = 0;
    int fp = 0;
};

/// Greedy-decision error counts on a context set (argmax decoding, Invalid
/// counted as always wrong).
inline BinaryErrorCounts count_argmax_errors(const ToyPolicy& policy,
                                             const std::vector<SyntheticContext>& contexts) {
    BinaryErrorCounts c;
    for (const auto& ctx : contexts) {
        const int k = policy.argmax(ctx.features);
        const bool predicted_normal = k == class_index(AnomalyClass::A);
        const bool invalid = k == kInvalidOutput;
        if (is_abnormal(ctx.label)) {
            if (predicted_normal || invalid) ++c.fn;
        } else {
            if (!predicted_normal || invalid) ++c.fp;
        }
    }
    return c;
}

/// One-update-per-iteration GRPO on the toy policy. Each iteration freezes a
/// copy of the current policy, samples groups from it, scores them with the
/// classification reward, standardizes advantages within each group, and
/// applies a single gradient step averaged over the sampled contexts. The
/// reference policy for the KL term is the initial policy. Deterministic for
/// a fixed seed.
inline ToyTrainResult train_toy_grpo(const SyntheticEnv& env, const GrpoConfig& config,
                                     int iterations, double learning_rate) {
    validate_config(config);
    if (env.contexts.empty()) throw std::invalid_argument("train_toy_grpo: environment has no contexts");
    if (iterations < 1) throw std::invalid_argument("train_toy_grpo: iterations must be >= 1");

    const int F = static_cast<int>(env.contexts.front().features.size());
    ToyPolicy policy(F, kToyOutputs);
    const ToyPolicy reference = policy;  // uniform initial policy
    std::mt19937_64 rng(config.seed);

    ToyTrainResult result{policy, {}};
    for (int it = 0; it < iterations; ++it) {
        const ToyPolicy old_policy = result.policy;  // refreshed once per outer iteration
        std::vector<double> grad_accum(result.policy.weights().size(), 0.0);
        double reward_sum = 0.0;
        int fn = 0, fp = 0, samples = 0;

        for (int c = 0; c < config.contexts_per_iter; ++c) {
            const auto& ctx = env.contexts[rng() % env.contexts.size()];
            RolloutGroup group;
            group.question_id = "iter" + std::to_string(it) + "_q" + std::to_string(c);
            group.context = ctx.features;
            std::vector<double> rewards_vec;
            rewards_vec.reserve(static_cast<std::size_t>(config.group_size));
            for (int g = 0; g < config.group_size; ++g) {
                RolloutResponse resp;
                resp.output_index = old_policy.sample(ctx.features, rng);
                resp.output = output_to_label(resp.output_index);
                resp.logp_old = old_policy.log_prob(ctx.features, resp.output_index);
                resp.logp_new = resp.logp_old;  // ratio 1 at the frozen point
                resp.reward = rewards::classification_reward(resp.output, ctx.label);
                rewards_vec.push_back(resp.reward);
                reward_sum += resp.reward;
                ++samples;
                const bool predicted_normal = resp.output_index == class_index(AnomalyClass::A);
                const bool invalid = resp.output_index == kInvalidOutput;
                if (is_abnormal(ctx.label)) {
                    if (predicted_normal || invalid) ++fn;
                } else if (!predicted_normal || invalid) {
                    ++fp;
                }
                group.responses.push_back(std::move(resp));
            }
            const auto adv = group_advantages(rewards_vec, config.advantage_epsilon);
            for (std::size_t g = 0; g < adv.size(); ++g) group.responses[g].advantage = adv[g];

            const auto step = grpo_loss_and_grad(group, result.policy, reference, config);
            for (std::size_t w = 0; w < grad_accum.size(); ++w) grad_accum[w] += step.grad[w];
        }

        const double scale = learning_rate / static_cast<double>(config.contexts_per_iter);
        for (std::size_t w = 0; w < grad_accum.size(); ++w)
            result.policy.weights()[w] -= scale * grad_accum[w];

        CurvePoint pt;
        pt.iteration = it;
        pt.mean_reward = reward_sum / static_cast<double>(samples);
        pt.fn_rate = static_cast<double>(fn) / static_cast<double>(samples);
        pt.fp_rate = static_cast<double>(fp) / static_cast<double>(samples);
        result.curve.push_back(pt);
    }
    return result;
}

}  // namespace taur1::grpo
