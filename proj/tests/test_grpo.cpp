#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "taur1/grpo.hpp"

using namespace taur1;
using namespace taur1::grpo;

namespace {

// Central-difference gradient of the group loss with respect to the policy
// weights; logp_old and the advantages stay frozen while the weights move.
std::vector<double> finite_difference_grad(const RolloutGroup& group, const ToyPolicy& policy,
                                           const ToyPolicy& reference, const GrpoConfig& config,
                                           double h = 1e-5) {
    std::vector<double> grad(policy.weights().size(), 0.0);
    for (std::size_t w = 0; w < grad.size(); ++w) {
        ToyPolicy plus = policy, minus = policy;
        plus.weights()[w] += h;
        minus.weights()[w] -= h;
        const double lp = grpo_loss_and_grad(group, plus, reference, config).loss;
        const double lm = grpo_loss_and_grad(group, minus, reference, config).loss;
        grad[w] = (lp - lm) / (2.0 * h);
    }
    return grad;
}

double inf_norm(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

double grad_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    std::vector<double> diff(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
    return inf_norm(diff) / std::max({inf_norm(a), inf_norm(b), 1e-8});
}

// Random group with ratios kept away from the clip kinks so finite
// differences stay smooth.
RolloutGroup random_group(const ToyPolicy& policy, const GrpoConfig& config, std::mt19937_64& rng,
                          int group_size) {
    std::uniform_real_distribution<double> feat(-1.0, 1.0);
    std::uniform_real_distribution<double> shift(-0.4, 0.4);
    RolloutGroup group;
    group.context.resize(static_cast<std::size_t>(policy.num_features()));
    for (auto& x : group.context) x = feat(rng);

    std::vector<double> rewards;
    for (int g = 0; g < group_size; ++g) {
        RolloutResponse resp;
        resp.output_index = static_cast<int>(rng() % static_cast<std::uint64_t>(policy.num_outputs()));
        resp.output = output_to_label(resp.output_index);
        const double logp = policy.log_prob(group.context, resp.output_index);
        double delta = 0.0, ratio = 1.0;
        for (int attempt = 0; attempt < 100; ++attempt) {
            delta = shift(rng);
            ratio = std::exp(delta);
            if (std::abs(ratio - (1.0 - config.epsilon)) > 0.02 &&
                std::abs(ratio - (1.0 + config.epsilon)) > 0.02)
                break;
        }
        resp.logp_old = logp - delta;
        resp.logp_new = logp;
        resp.reward = rewards::classification_reward(resp.output, AnomalyClass::B);
        rewards.push_back(resp.reward);
        group.responses.push_back(std::move(resp));
    }
    const auto adv = group_advantages(rewards, config.advantage_epsilon);
    for (std::size_t i = 0; i < adv.size(); ++i) group.responses[i].advantage = adv[i];
    return group;
}

}  // namespace

TEST_CASE("policy ratio", "[grpo]") {
    CHECK(policy_ratio(-1.2, -1.2) == 1.0);
    CHECK_THAT(policy_ratio(-0.693147, -1.386294), Catch::Matchers::WithinAbs(2.0, 1e-5));
    CHECK_THAT(policy_ratio(std::log(0.5), std::log(0.25)), Catch::Matchers::WithinRel(2.0, 1e-12));
    CHECK(policy_ratio(0.0, -40.0) == std::exp(30.0));  // clamped exponent
    CHECK(policy_ratio(-40.0, 0.0) == std::exp(-30.0));
    CHECK_THROWS_AS(policy_ratio(std::numeric_limits<double>::infinity(), 0.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(policy_ratio(0.0, std::nan("")), std::invalid_argument);
}

TEST_CASE("group advantages", "[grpo]") {
    SECTION("zero variance maps to exact zeros") {
        const auto adv = group_advantages({1.5, 1.5, 1.5}, 1e-8);
        CHECK(adv == std::vector<double>{0.0, 0.0, 0.0});
    }
    SECTION("two-point group") {
        const auto adv = group_advantages({0.0, 2.0}, 1e-8);
        CHECK_THAT(adv[0], Catch::Matchers::WithinAbs(-1.0, 1e-7));
        CHECK_THAT(adv[1], Catch::Matchers::WithinAbs(1.0, 1e-7));
    }
    SECTION("derived case against an in-test brute-force oracle") {
        const std::vector<double> rewards{1.5, -0.75, -1.5, 1.5};
        // independent mean/std computation
        double mean = 0.0;
        for (double r : rewards) mean += r;
        mean /= static_cast<double>(rewards.size());
        double var = 0.0;
        for (double r : rewards) var += (r - mean) * (r - mean);
        const double sd = std::sqrt(var / static_cast<double>(rewards.size()));
        REQUIRE_THAT(mean, Catch::Matchers::WithinAbs(0.1875, 1e-15));
        REQUIRE_THAT(sd, Catch::Matchers::WithinAbs(1.3390178303517843, 1e-12));

        const auto adv = group_advantages(rewards, 1e-8);
        const double frozen[] = {0.9801960514993455, -0.7001400367852468, -1.2602520662134442,
                                 0.9801960514993455};
        for (std::size_t i = 0; i < rewards.size(); ++i) {
            REQUIRE_THAT(adv[i], Catch::Matchers::WithinAbs((rewards[i] - mean) / (sd + 1e-8), 1e-12));
            REQUIRE_THAT(adv[i], Catch::Matchers::WithinAbs(frozen[i], 1e-12));
        }
    }
    SECTION("fewer than two rewards is an error") {
        CHECK_THROWS_AS(group_advantages({1.0}, 1e-8), std::invalid_argument);
    }
}

TEST_CASE("group advantage distribution properties", "[grpo][property]") {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t g = 2 + rng() % 14;
        std::vector<double> rewards(g);
        for (auto& r : rewards) r = u(rng);

        const auto adv = group_advantages(rewards, 1e-8);
        double mean = 0.0;
        for (double a : adv) mean += a;
        mean /= static_cast<double>(g);
        REQUIRE(std::abs(mean) < 1e-9);

        // shift invariance
        std::vector<double> shifted = rewards;
        const double c = u(rng);
        for (auto& r : shifted) r += c;
        const auto adv_shifted = group_advantages(shifted, 1e-8);
        for (std::size_t i = 0; i < g; ++i) REQUIRE(std::abs(adv[i] - adv_shifted[i]) < 1e-9);

        // positive-scale invariance, exact at advantage_epsilon -> 0
        const double k = 0.25 + std::abs(u(rng));
        std::vector<double> scaled = rewards;
        for (auto& r : scaled) r *= k;
        const auto a0 = group_advantages(rewards, 1e-300);
        const auto a1 = group_advantages(scaled, 1e-300);
        for (std::size_t i = 0; i < g; ++i) REQUIRE(std::abs(a0[i] - a1[i]) < 1e-9);
    }
}

TEST_CASE("clipped surrogate", "[grpo]") {
    CHECK_THAT(clipped_surrogate(1.5, 1.0, 0.2), Catch::Matchers::WithinAbs(1.2, 1e-15));
    CHECK_THAT(clipped_surrogate(0.5, -1.0, 0.2), Catch::Matchers::WithinAbs(-0.8, 1e-15));
    for (double a : {-2.0, -0.5, 0.0, 0.7, 3.0})
        for (double eps : {0.1, 0.2, 0.5}) CHECK(clipped_surrogate(1.0, a, eps) == a);
    CHECK_THROWS_AS(clipped_surrogate(1.0, 1.0, 0.0), std::invalid_argument);

    SECTION("pessimistic bound: never exceeds ratio*advantage") {
        std::mt19937_64 rng(55);
        std::uniform_real_distribution<double> u(-2.0, 2.0);
        for (int i = 0; i < 1000; ++i) {
            const double ratio = std::exp(u(rng));
            const double adv = u(rng);
            const double eps = 0.05 + 0.5 * std::abs(u(rng));
            REQUIRE(clipped_surrogate(ratio, adv, eps) <= ratio * adv + 1e-12);
        }
    }
}

TEST_CASE("KL to reference", "[grpo]") {
    SECTION("identical policies have zero KL") {
        ToyPolicy p(3);
        p.weight(0, 1) = 0.7;
        p.weight(2, 4) = -0.3;
        const std::vector<double> ctx{1.0, -0.5, 0.25};
        CHECK(kl_to_reference(p, p, ctx) == 0.0);
    }
    SECTION("derived two-output case: (0.9, 0.1) vs uniform") {
        ToyPolicy p(1, 2), ref(1, 2);
        p.weight(0, 0) = std::log(0.9);
        p.weight(0, 1) = std::log(0.1);
        const std::vector<double> ctx{1.0};
        const auto probs = p.probs(ctx);
        REQUIRE_THAT(probs[0], Catch::Matchers::WithinAbs(0.9, 1e-12));
        // independent scalar oracle: 0.9*ln(1.8) + 0.1*ln(0.2)
        const double oracle = 0.9 * std::log(1.8) + 0.1 * std::log(0.2);
        REQUIRE_THAT(oracle, Catch::Matchers::WithinAbs(0.3680642071684971, 1e-12));
        CHECK_THAT(kl_to_reference(p, ref, ctx), Catch::Matchers::WithinAbs(oracle, 1e-9));
    }
    SECTION("non-negativity on random pairs, zero only at equality") {
        std::mt19937_64 rng(77);
        std::uniform_real_distribution<double> u(-1.5, 1.5);
        for (int i = 0; i < 500; ++i) {
            ToyPolicy p(2), q(2);
            for (int f = 0; f < 2; ++f)
                for (int k = 0; k < 5; ++k) {
                    p.weight(f, k) = u(rng);
                    q.weight(f, k) = u(rng);
                }
            const std::vector<double> ctx{u(rng), u(rng)};
            REQUIRE(kl_to_reference(p, q, ctx) >= 0.0);
            REQUIRE(kl_to_reference(p, p, ctx) <= 1e-12);
        }
    }
    SECTION("dimension mismatch") {
        ToyPolicy p(2), q(3);
        CHECK_THROWS_AS(kl_to_reference(p, q, std::vector<double>{1.0, 0.0}),
                        std::invalid_argument);
    }
}

TEST_CASE("toy policy softmax normalization", "[grpo][property]") {
    std::mt19937_64 rng(131);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    for (int i = 0; i < 300; ++i) {
        ToyPolicy p(3);
        for (int f = 0; f < 3; ++f)
            for (int k = 0; k < 5; ++k) p.weight(f, k) = u(rng);
        const std::vector<double> ctx{u(rng), u(rng), u(rng)};
        const auto probs = p.probs(ctx);
        double sum = 0.0;
        for (double q : probs) sum += q;
        REQUIRE(std::abs(sum - 1.0) <= 1e-12);
        const int k = static_cast<int>(rng() % 5);
        REQUIRE_THAT(p.log_prob(ctx, k),
                     Catch::Matchers::WithinAbs(std::log(probs[static_cast<std::size_t>(k)]), 1e-12));
    }
}

TEST_CASE("grpo loss degenerate case", "[grpo]") {
    GrpoConfig config;
    config.beta = 0.0;
    ToyPolicy policy(2), reference(2);
    RolloutGroup group;
    group.context = {1.0, -1.0};
    for (int g = 0; g < 4; ++g) {
        RolloutResponse r;
        r.output_index = g % 5;
        r.logp_old = policy.log_prob(group.context, r.output_index);
        r.advantage = 0.0;  // all-zero advantages
        group.responses.push_back(r);
    }
    const auto step = grpo_loss_and_grad(group, policy, reference, config);
    CHECK(step.loss == 0.0);
    for (double g : step.grad) CHECK(g == 0.0);
}

TEST_CASE("grpo gradient matches finite differences (single response, beta 0)", "[grpo]") {
    GrpoConfig config;
    config.beta = 0.0;
    config.group_size = 2;  // config minimum; the group itself has one response
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ToyPolicy policy(3), reference(3);
    for (int f = 0; f < 3; ++f)
        for (int k = 0; k < 5; ++k) policy.weight(f, k) = 0.3 * u(rng);

    RolloutGroup group;
    group.context = {0.8, -0.2, 0.5};
    RolloutResponse r;
    r.output_index = 2;
    const double logp = policy.log_prob(group.context, 2);
    r.logp_old = logp - 0.05;  // ratio ~ 1.05, inside the clip band
    r.advantage = 1.0;
    group.responses.push_back(r);

    const auto step = grpo_loss_and_grad(group, policy, reference, config);
    const auto fd = finite_difference_grad(group, policy, reference, config);
    CHECK(grad_relative_error(step.grad, fd) < 1e-4);

    // closed form for the unclipped branch: -A * ratio * d(logp)/dw
    const double ratio = std::exp(0.05);
    const auto probs = policy.probs(group.context);
    for (int f = 0; f < 3; ++f)
        for (int k = 0; k < 5; ++k) {
            const double dlogp = group.context[static_cast<std::size_t>(f)] *
                                 ((k == 2 ? 1.0 : 0.0) - probs[static_cast<std::size_t>(k)]);
            REQUIRE_THAT(step.grad[static_cast<std::size_t>(f * 5 + k)],
                         Catch::Matchers::WithinAbs(-1.0 * ratio * dlogp, 1e-12));
        }
}

TEST_CASE("grpo gradient matches finite differences on random configurations", "[grpo][property]") {
    std::mt19937_64 rng(991);
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    for (int trial = 0; trial < 40; ++trial) {
        GrpoConfig config;
        config.epsilon = 0.1 + 0.05 * static_cast<double>(rng() % 5);
        config.beta = (trial % 3 == 0) ? 0.0 : 0.02 * static_cast<double>(rng() % 6);
        ToyPolicy policy(3), reference(3);
        for (int f = 0; f < 3; ++f)
            for (int k = 0; k < 5; ++k) {
                policy.weight(f, k) = u(rng);
                reference.weight(f, k) = u(rng);
            }
        const auto group = random_group(policy, config, rng, 4);
        const auto step = grpo_loss_and_grad(group, policy, reference, config);
        const auto fd = finite_difference_grad(group, policy, reference, config);
        REQUIRE(grad_relative_error(step.grad, fd) < 1e-4);
    }
}

TEST_CASE("grpo loss input validation", "[grpo]") {
    GrpoConfig config;
    ToyPolicy policy(2), reference(3);
    RolloutGroup group;
    group.context = {1.0, 0.0};
    RolloutResponse r;
    r.output_index = 0;
    group.responses.push_back(r);
    CHECK_THROWS_AS(grpo_loss_and_grad(group, policy, reference, config), std::invalid_argument);

    ToyPolicy ref2(2);
    RolloutGroup empty;
    empty.context = {1.0, 0.0};
    CHECK_THROWS_AS(grpo_loss_and_grad(empty, policy, ref2, config), std::invalid_argument);
}

TEST_CASE("synthetic environment construction", "[grpo]") {
    const auto env = make_synthetic_env(100, {0.25, 0.25, 0.25, 0.25}, 3);
    REQUIRE(env.contexts.size() == 100);
    std::array<int, 4> counts{};
    for (const auto& c : env.contexts) counts[static_cast<std::size_t>(class_index(c.label))] += 1;
    for (int k = 0; k < 4; ++k) CHECK(counts[static_cast<std::size_t>(k)] == 25);
    CHECK(env.contexts.front().features.size() == 5);
    CHECK_THROWS_AS(make_synthetic_env(10, {0.5, 0.5, 0.5, 0.5}, 0), std::invalid_argument);
    CHECK_THROWS_AS(make_synthetic_env(0, {0.25, 0.25, 0.25, 0.25}, 0), std::invalid_argument);
}

TEST_CASE("toy training converges on a single-class environment", "[grpo][training]") {
    const auto env = make_synthetic_env(64, {0.0, 1.0, 0.0, 0.0}, 11);
    GrpoConfig config;
    config.seed = 11;
    const auto result = train_toy_grpo(env, config, 300, 0.1);

    int argmax_b = 0;
    for (const auto& ctx : env.contexts)
        argmax_b += result.policy.argmax(ctx.features) == class_index(AnomalyClass::B);
    CHECK(static_cast<double>(argmax_b) >= 0.95 * static_cast<double>(env.contexts.size()));
    CHECK(result.curve.size() == 300);
}

TEST_CASE("toy training is deterministic for a fixed seed", "[grpo][training]") {
    const auto env = make_synthetic_env(48, {0.25, 0.25, 0.25, 0.25}, 5);
    GrpoConfig config;
    config.seed = 42;
    const auto a = train_toy_grpo(env, config, 40, 0.1);
    const auto b = train_toy_grpo(env, config, 40, 0.1);
    REQUIRE(a.curve.size() == b.curve.size());
    for (std::size_t i = 0; i < a.curve.size(); ++i) {
        REQUIRE(a.curve[i].mean_reward == b.curve[i].mean_reward);
        REQUIRE(a.curve[i].fn_rate == b.curve[i].fn_rate);
        REQUIRE(a.curve[i].fp_rate == b.curve[i].fp_rate);
    }
    REQUIRE(a.policy.weights() == b.policy.weights());
}

TEST_CASE("toy training improves mean reward on a mixed environment", "[grpo][training]") {
    const auto env = make_synthetic_env(96, {0.25, 0.25, 0.25, 0.25}, 21);
    GrpoConfig config;
    config.seed = 21;
    const auto result = train_toy_grpo(env, config, 200, 0.1);
    auto mean_over = [&](std::size_t from, std::size_t to) {
        double s = 0.0;
        for (std::size_t i = from; i < to; ++i) s += result.curve[i].mean_reward;
        return s / static_cast<double>(to - from);
    };
    CHECK(mean_over(190, 200) > mean_over(0, 10));

    const auto held_out = make_synthetic_env(200, {0.25, 0.25, 0.25, 0.25}, 1234);
    const auto errors = count_argmax_errors(result.policy, held_out.contexts);
    CHECK(errors.fn <= errors.fp);
}

TEST_CASE("train_toy_grpo input validation", "[grpo]") {
    GrpoConfig config;
    CHECK_THROWS_AS(train_toy_grpo(SyntheticEnv{}, config, 10, 0.1), std::invalid_argument);
    const auto env = make_synthetic_env(8, {0.25, 0.25, 0.25, 0.25}, 0);
    CHECK_THROWS_AS(train_toy_grpo(env, config, 0, 0.1), std::invalid_argument);
}
