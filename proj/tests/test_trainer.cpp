#include <doctest.h>

#include <cmath>
#include <numeric>

#include "capita/kernels.hpp"
#include "capita/trainer.hpp"
#include "test_util.hpp"

using namespace capita;

namespace {

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

std::vector<double> random_direction(Rng& rng, std::size_t n) {
    std::vector<double> d(n);
    for (auto& x : d) x = 2.0 * uniform01(rng) - 1.0;
    return d;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

template <class F>
double directional_fd(ParametricPolicy& p, const std::vector<double>& d, double h, F f) {
    std::vector<double> theta = p.params();
    for (std::size_t i = 0; i < d.size(); ++i) p.params()[i] = theta[i] + h * d[i];
    double up = f();
    for (std::size_t i = 0; i < d.size(); ++i) p.params()[i] = theta[i] - h * d[i];
    double down = f();
    p.params() = theta;
    return (up - down) / (2.0 * h);
}

AdvantageGroup make_group(const StateRecord& s, const ParametricPolicy& p, Rng& rng, double gamma, double jitter) {
    AdvantageGroup g;
    g.features = s.features;
    TemplateCatalog cat(p.config().slots);
    const auto& keys = testing::small_states().plans[s.task].key_objects;
    auto lp = p.log_probs(g.features);
    for (int k = 0; k < 8; ++k) {
        int a = k == 0 ? s.expert : p.sample(g.features, rng);
        g.actions.push_back(a);
        g.old_logprob.push_back(lp[static_cast<std::size_t>(a)] + jitter * (2.0 * uniform01(rng) - 1.0));
        g.advantages.push_back(expert_advantage(s.tracker, cat.bind(static_cast<std::size_t>(a), keys), gamma,
                                                RewardMode::ManipOnly));
    }
    g.centered = center_group(g.advantages);
    return g;
}

bool near_clip_boundary(const std::vector<AdvantageGroup>& groups, const ParametricPolicy& p, double eps) {
    for (const auto& g : groups) {
        auto lp = p.log_probs(g.features);
        for (std::size_t i = 0; i < g.actions.size(); ++i) {
            double r = std::exp(lp[static_cast<std::size_t>(g.actions[i])] - g.old_logprob[i]);
            if (std::abs(r - (1.0 - eps)) < 1e-3 || std::abs(r - (1.0 + eps)) < 1e-3) return true;
        }
    }
    return false;
}

}  // namespace

TEST_CASE("group centering") {
    auto c = center_group({0.0, -0.75, -0.75, 0.0});
    CHECK(c == std::vector<double>{0.375, -0.375, -0.375, 0.375});
    CHECK(center_group({2.0, 2.0, 2.0}) == std::vector<double>{0.0, 0.0, 0.0});
    CHECK_THROWS_AS(center_group({1.0}), Error);
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> v(8);
        for (auto& x : v) x = -3.0 * uniform01(rng);
        auto cc = center_group(v);
        CHECK(std::abs(std::accumulate(cc.begin(), cc.end(), 0.0)) < 1e-12);
    }
}

TEST_CASE("group normalization has unit spread") {
    auto n = normalize_group({1.0, 0.0, 0.0, 1.0});
    for (double x : n) CHECK(std::abs(std::abs(x) - 1.0) < 1e-7);
    CHECK(normalize_group({0.0, 0.0}) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("clipped surrogate hand cases") {
    CHECK(clipped_term(1.3, -1.0, 0.2) == -1.3);
    CHECK(clipped_term(0.7, -1.0, 0.2) == -0.8);
    CHECK(clipped_term(1.3, 1.0, 0.2) == 1.2);
    CHECK(clipped_term(1.0, 0.4, 0.2) == 0.4);
}

TEST_CASE("on-policy gradient equals advantage times score") {
    Rng rng(8);
    ParametricPolicy p = testing::random_policy(rng, 0.05);
    const auto& s = testing::small_states().states[3];
    AdvantageGroup g;
    g.features = s.features;
    g.actions = {s.expert, 0};
    g.old_logprob = {p.logprob(s.features, s.expert), p.logprob(s.features, 0)};
    g.centered = {0.5, -0.5};
    auto r = surrogate_serial({g}, p, 0.2);
    std::vector<double> want(p.params().size(), 0.0);
    p.accumulate_grad_logprob(s.features, s.expert, 0.5 / 2, want);
    p.accumulate_grad_logprob(s.features, 0, -0.5 / 2, want);
    for (std::size_t i = 0; i < want.size(); ++i) REQUIRE(std::abs(r.grad[i] - want[i]) < 1e-15);
    CHECK(r.clip_fraction == 0.0);
}

TEST_CASE("non-finite ratios are skipped and counted") {
    ParametricPolicy p = uniform_policy();
    const auto& s = testing::small_states().states[0];
    AdvantageGroup g;
    g.features = s.features;
    g.actions = {0, 1};
    g.old_logprob = {-1e6, p.logprob(s.features, 1)};
    g.centered = {1.0, -1.0};
    auto r = surrogate_serial({g}, p, 0.2);
    CHECK(r.skipped == 1);
    CHECK(r.samples == 1);
}

TEST_CASE("softmax log-prob gradient matches finite differences") {
    Rng rng(11);
    const auto& states = testing::small_states().states;
    for (FeatureConfig cfg : {FeatureConfig{}, FeatureConfig{6, 64, 8}}) {
        for (int draw = 0; draw < 25; ++draw) {
            ParametricPolicy p = testing::random_policy(rng, 0.3, cfg);
            FeatureVector x = cfg == FeatureConfig{} ? states[uniform_index(rng, states.size())].features : [&] {
                const auto& s = states[uniform_index(rng, states.size())];
                return featurize(s.state, testing::small_states().tasks[s.task], cfg);
            }();
            int a = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(p.actions())));
            auto grad = p.grad_logprob(x, a);
            auto d = random_direction(rng, grad.size());
            double fd = directional_fd(p, d, 1e-5, [&] { return p.logprob(x, a); });
            CHECK(rel_err(fd, dot(grad, d)) < 1e-6);
        }
    }
}

TEST_CASE("clipped objective gradient matches finite differences") {
    Rng rng(12);
    const auto& states = testing::small_states().states;
    int checked = 0;
    for (int draw = 0; draw < 40; ++draw) {
        ParametricPolicy p = testing::random_policy(rng, 0.2);
        std::vector<AdvantageGroup> groups;
        for (int k = 0; k < 4; ++k) groups.push_back(make_group(states[uniform_index(rng, states.size())], p, rng, 0.95, 0.3));
        if (near_clip_boundary(groups, p, 0.2)) continue;
        auto r = surrogate_serial(groups, p, 0.2);
        auto d = random_direction(rng, r.grad.size());
        double fd = directional_fd(p, d, 1e-6, [&] { return surrogate_serial(groups, p, 0.2).value; });
        CHECK(rel_err(fd, dot(r.grad, d)) < 1e-4);
        ++checked;
    }
    CHECK(checked >= 20);
}

TEST_CASE("parallel surrogate equals the serial reference") {
    Rng rng(13);
    ParametricPolicy p = testing::random_policy(rng, 0.1);
    std::vector<AdvantageGroup> groups;
    const auto& states = testing::small_states().states;
    for (int k = 0; k < 37; ++k) groups.push_back(make_group(states[static_cast<std::size_t>(k)], p, rng, 0.95, 0.3));
    auto a = surrogate_serial(groups, p, 0.2);
    auto b = surrogate_parallel(groups, p, 0.2);
    CHECK(a.samples == b.samples);
    CHECK(std::abs(a.value - b.value) < 1e-12);
    for (std::size_t i = 0; i < a.grad.size(); ++i) REQUIRE(std::abs(a.grad[i] - b.grad[i]) < 1e-12);
}

TEST_CASE("gamma = 1 makes every advantage zero and the objective flat") {
    Rng rng(14);
    ParametricPolicy p = testing::random_policy(rng, 0.1);
    std::vector<AdvantageGroup> groups;
    for (const auto& s : testing::small_states().states) {
        groups.push_back(make_group(s, p, rng, 1.0, 0.3));
        if (groups.size() == 64) break;
    }
    for (const auto& g : groups)
        for (double a : g.advantages) CHECK(a == 0.0);
    auto r = surrogate_serial(groups, p, 0.2);
    CHECK(r.value == 0.0);
    for (double g : r.grad) REQUIRE(g == 0.0);

    TrainConfig cfg;
    cfg.gamma = 1.0;
    cfg.batch = 16;
    cfg.iterations = 3;
    cfg.probe_every = 1000;
    ParametricPolicy init = p;
    auto res = train(cfg, testing::small_states(), {}, 1, &init);
    CHECK(res.policy.params() == init.params());
}

TEST_CASE("a policy that always plays the expert gets zero gradient") {
    ParametricPolicy p = uniform_policy();
    std::vector<AdvantageGroup> groups;
    for (const auto& s : testing::small_states().states) {
        AdvantageGroup g;
        g.features = s.features;
        g.actions.assign(8, s.expert);
        g.old_logprob.assign(8, p.logprob(s.features, s.expert));
        g.advantages.assign(8, expert_advantage(s.tracker, expert_action(s.tracker), 0.95, RewardMode::ManipOnly));
        g.centered = center_group(g.advantages);
        groups.push_back(g);
        if (groups.size() == 64) break;
    }
    auto r = surrogate_serial(groups, p, 0.2);
    for (double g : r.grad) REQUIRE(g == 0.0);
}

TEST_CASE("uniform policy and greedy sampling") {
    ParametricPolicy p = uniform_policy();
    const auto& x = testing::small_states().states[0].features;
    CHECK(p.logprob(x, 5) == doctest::Approx(-std::log(static_cast<double>(p.actions()))).epsilon(1e-12));
    CHECK_THROWS_AS(p.logprob(x, p.actions()), Error);
    Rng rng(2);
    ParametricPolicy q = testing::random_policy(rng, 0.5);
    q.set_temperature(0.0);
    for (int i = 0; i < 20; ++i) CHECK(q.sample(x, rng) == q.argmax(x));
}

TEST_CASE("snapshots round trip and refuse a different feature config") {
    Rng rng(4);
    ParametricPolicy p = testing::random_policy(rng, 0.1);
    auto q = ParametricPolicy::from_snapshot(p.snapshot(), p.config());
    CHECK(q.params() == p.params());
    CHECK(q.param_digest() == p.param_digest());
    FeatureConfig other;
    other.hash_buckets = 512;
    CHECK_THROWS_AS(ParametricPolicy::from_snapshot(p.snapshot(), other), Error);
}

TEST_CASE("behavior cloning raises expert likelihood") {
    TrainConfig cfg;
    cfg.algo = Algo::Bc;
    cfg.batch = 64;
    cfg.iterations = 20;
    cfg.probe_every = 1000;
    const auto& data = testing::small_states();
    double before = action_match(uniform_policy(), data);
    auto res = train(cfg, data, {}, 3);
    CHECK(action_match(res.policy, data) > before);
    CHECK(action_match(res.policy, data) > 0.8);
}

TEST_CASE("train config validation") {
    TrainConfig c;
    c.group = 1;
    CHECK_THROWS_AS(c.validate(), Error);
    c = TrainConfig{};
    c.epsilon = 0.0;
    CHECK_THROWS_AS(c.validate(), Error);
    CHECK(parse_algo("grpo-reward") == Algo::GrpoReward);
    CHECK_THROWS_AS(parse_algo("ppo"), Error);
}

TEST_CASE("property: probabilities normalize") {
    Rng rng(21);
    const auto& states = testing::small_states().states;
    for (int draw = 0; draw < 100; ++draw) {
        ParametricPolicy p = testing::random_policy(rng, 2.0);
        auto lp = p.log_probs(states[uniform_index(rng, states.size())].features);
        double total = 0.0;
        for (double l : lp) total += std::exp(l);
        CHECK(std::abs(total - 1.0) < 1e-9);
    }
}

TEST_CASE("property: a shift on the bias weights leaves the argmax alone") {
    Rng rng(22);
    ParametricPolicy p = testing::random_policy(rng, 0.5);
    const int A = p.actions();
    const int bias = feat::bias(p.config().slots);
    ParametricPolicy q = p;
    for (int a = 0; a < A; ++a) q.params()[static_cast<std::size_t>(bias * A + a)] += 3.7;
    for (const auto& s : testing::small_states().states) {
        REQUIRE(q.argmax(s.features) == p.argmax(s.features));
        REQUIRE(std::abs(q.logprob(s.features, s.expert) - p.logprob(s.features, s.expert)) < 1e-9);
    }
}
