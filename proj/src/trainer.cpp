#include "capita/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>

#include "capita/kernels.hpp"

namespace capita {

std::string to_string(Algo a) {
    switch (a) {
        case Algo::Eipo: return "eipo";
        case Algo::GrpoReturn: return "grpo-return";
        case Algo::GrpoReward: return "grpo-reward";
        case Algo::Bc: return "bc";
    }
    return {};
}

Algo parse_algo(std::string_view s) {
    for (Algo a : {Algo::Eipo, Algo::GrpoReturn, Algo::GrpoReward, Algo::Bc})
        if (to_string(a) == s) return a;
    throw Error("config", "unknown algorithm: " + std::string(s));
}

void TrainConfig::validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw Error("config", "gamma must lie in (0, 1]");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw Error("config", "epsilon must lie in (0, 1)");
    if (group < 2) throw Error("config", "group size must be at least 2");
    if (batch < 1 || iterations < 0 || inner_epochs < 1) throw Error("config", "batch, iterations and inner epochs must be positive");
    if (!(lr > 0.0)) throw Error("config", "learning rate must be positive");
    if (probe_every < 1) throw Error("config", "probe interval must be positive");
    for (double p : {probe_p_og, probe_p_es, rollout_p_og, rollout_p_es})
        if (!(p >= 0.0 && p <= 1.0)) throw Error("config", "probabilities must lie in [0, 1]");
}

Json TrainConfig::to_json() const {
    return Json{{"algo", to_string(algo)},         {"gamma", gamma},
                {"epsilon", epsilon},              {"group", group},
                {"batch", batch},                  {"lr", lr},
                {"iterations", iterations},        {"inner_epochs", inner_epochs},
                {"reward_mode", to_string(reward_mode)}, {"features", features.to_json()},
                {"probe_every", probe_every},      {"probe_p_og", probe_p_og},
                {"probe_p_es", probe_p_es},        {"rollout_p_og", rollout_p_og},
                {"rollout_p_es", rollout_p_es}};
}

std::size_t TrainingSet::add_task(const TaskSpec& task) {
    tasks.push_back(task);
    plans.push_back(decompose(task));
    return tasks.size() - 1;
}

// ---------------------------------------------------------------- advantages

double expert_advantage(const ProgressTracker& tracker, const SchedulerAction& action, double gamma, RewardMode mode,
                        const Lexicon& lex) {
    tracker.check();
    const double v = expert_value(tracker, gamma, mode);
    ProgressTracker next = tracker;
    double reward = 0.0;
    if (!tracker.done() && is_optimal(tracker, action, lex)) {
        const SubPlan& s = tracker.plan[tracker.head];
        reward = (mode == RewardMode::AllSubplans || s.kind == SubPlanKind::Manipulation) ? 1.0 : 0.0;
        ++next.head;
    }
    return gamma * expert_value(next, gamma, mode) + reward - v;
}

std::vector<double> center_group(const std::vector<double>& a) {
    if (a.size() < 2) throw Error("trainer", "group needs at least two samples");
    double mean = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - mean;
    return out;
}

std::vector<double> normalize_group(const std::vector<double>& values) {
    std::vector<double> c = center_group(values);
    double var = 0.0;
    for (double x : c) var += x * x;
    double sd = std::sqrt(var / static_cast<double>(c.size()));
    for (auto& x : c) x /= sd + 1e-8;
    return c;
}

double clipped_term(double ratio, double advantage, double epsilon) {
    double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
    return std::min(ratio * advantage, clipped * advantage);
}

ObjectiveResult eipo_objective(const std::vector<AdvantageGroup>& groups, const ParametricPolicy& policy, double epsilon) {
    return surrogate_parallel(groups, policy, epsilon);
}

ObjectiveResult bc_objective(const TrainingSet& data, const std::vector<std::size_t>& batch, const ParametricPolicy& policy) {
    ObjectiveResult r;
    r.grad.assign(policy.params().size(), 0.0);
    for (std::size_t i : batch) {
        const StateRecord& s = data.states.at(i);
        r.value += policy.logprob(s.features, s.expert);
        policy.accumulate_grad_logprob(s.features, s.expert, 1.0, r.grad);
        ++r.samples;
    }
    if (r.samples > 0) {
        double inv = 1.0 / r.samples;
        r.value *= inv;
        for (auto& g : r.grad) g *= inv;
    }
    return r;
}

// ---------------------------------------------------------------- optimizer

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::vector<double>& theta, const std::vector<double>& grad) {
    if (theta.size() != m_.size() || grad.size() != m_.size()) throw Error("trainer", "optimizer size mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double g = grad[i];
        if (g == 0.0 && m_[i] == 0.0 && v_[i] == 0.0) continue;
        m_[i] = b1_ * m_[i] + (1.0 - b1_) * g;
        v_[i] = b2_ * v_[i] + (1.0 - b2_) * g * g;
        theta[i] += lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    std::string out = "iteration,objective,clip_fraction,mean_abs_adv,probe_sr\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,", r.iteration, r.objective, r.clip_fraction, r.mean_abs_adv);
        out += buf;
        if (r.probe_sr) {
            std::snprintf(buf, sizeof buf, "%.6f", *r.probe_sr);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------- evaluation helpers

double probe_success_rate(const ParametricPolicy& policy, const std::vector<TaskSpec>& probe, double p_og, double p_es,
                          std::uint64_t seed) {
    if (probe.empty()) return 0.0;
    std::vector<EpisodeJob> jobs;
    for (std::size_t i = 0; i < probe.size(); ++i) jobs.push_back({i, derive_seed(seed, i)});
    RunOptions opts;
    opts.record_transcript = false;
    auto results = run_episodes_parallel(
        probe, jobs, [&] { return std::make_unique<LearnedScheduler>(policy, true); }, CapabilitySuite::noisy(0.0, p_og, p_es),
        [](const TaskSpec& t) { return default_limits(t); }, opts);
    int ok = 0;
    for (const auto& r : results) ok += r.success ? 1 : 0;
    return static_cast<double>(ok) / static_cast<double>(results.size());
}

double action_match(const ParametricPolicy& policy, const TrainingSet& data) {
    if (data.states.empty()) return 0.0;
    std::size_t hit = 0;
    for (const auto& s : data.states) hit += policy.argmax(s.features) == s.expert ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(data.states.size());
}

// ---------------------------------------------------------------- training loop

namespace {

std::vector<AdvantageGroup> offline_groups(const TrainConfig& cfg, const TrainingSet& data,
                                           const std::vector<std::size_t>& batch, const ParametricPolicy& policy,
                                           const TemplateCatalog& catalog, std::uint64_t iter_seed) {
    std::vector<AdvantageGroup> groups(batch.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(static)
    for (long b = 0; b < static_cast<long>(batch.size()); ++b) {
        try {
            const StateRecord& s = data.states.at(batch[static_cast<std::size_t>(b)]);
            const ExpertPlan& plan = data.plans.at(s.task);
            Rng rng(derive_seed(iter_seed, static_cast<std::uint64_t>(b)));
            AdvantageGroup g;
            g.features = s.features;
            std::vector<double> lp = policy.log_probs(s.features);
            for (int i = 0; i < cfg.group; ++i) {
                int a = policy.sample(s.features, rng);
                g.actions.push_back(a);
                g.old_logprob.push_back(lp[static_cast<std::size_t>(a)]);
                SchedulerAction act = catalog.bind(static_cast<std::size_t>(a), plan.key_objects);
                if (cfg.algo == Algo::Eipo) {
                    g.advantages.push_back(expert_advantage(s.tracker, act, cfg.gamma, cfg.reward_mode));
                    g.rewards.push_back(g.advantages.back());
                } else {
                    g.rewards.push_back(is_optimal(s.tracker, act) ? 1.0 : 0.0);
                }
            }
            if (cfg.algo == Algo::Eipo) {
                g.centered = center_group(g.advantages);
            } else {
                g.advantages = normalize_group(g.rewards);
                g.centered = g.advantages;
            }
            groups[static_cast<std::size_t>(b)] = std::move(g);
        } catch (...) {
#pragma omp critical(capita_group_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return groups;
}

std::vector<AdvantageGroup> online_groups(const TrainConfig& cfg, const TrainingSet& data, const ParametricPolicy& policy,
                                          Rng& rng, std::uint64_t iter_seed) {
    const std::size_t n_tasks = static_cast<std::size_t>(cfg.batch);
    std::vector<std::size_t> picks(n_tasks);
    for (auto& p : picks) p = uniform_index(rng, data.tasks.size());
    const std::size_t G = static_cast<std::size_t>(cfg.group);
    std::vector<std::vector<PolicyStep>> trajs(n_tasks * G);
    std::vector<double> returns(n_tasks * G, 0.0);
    CapabilitySuite backends = CapabilitySuite::noisy(0.0, cfg.rollout_p_og, cfg.rollout_p_es);
    RunOptions opts;
    opts.record_transcript = false;
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
    for (long k = 0; k < static_cast<long>(n_tasks * G); ++k) {
        try {
            const TaskSpec& t = data.tasks[picks[static_cast<std::size_t>(k) / G]];
            LearnedScheduler sched(policy, false);
            EpisodeResult r = run_episode(t, sched, backends, default_limits(t), derive_seed(iter_seed, static_cast<std::uint64_t>(k)), opts);
            returns[static_cast<std::size_t>(k)] = r.ssr;
            trajs[static_cast<std::size_t>(k)] = sched.trajectory();
        } catch (...) {
#pragma omp critical(capita_rollout_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    std::vector<AdvantageGroup> groups;
    for (std::size_t t = 0; t < n_tasks; ++t) {
        std::vector<double> R(returns.begin() + static_cast<std::ptrdiff_t>(t * G),
                              returns.begin() + static_cast<std::ptrdiff_t>((t + 1) * G));
        std::vector<double> adv = normalize_group(R);
        for (std::size_t g = 0; g < G; ++g)
            for (auto& step : trajs[t * G + g]) {
                AdvantageGroup s;
                s.features = std::move(step.features);
                s.actions = {step.action};
                s.old_logprob = {step.logprob};
                s.rewards = {R[g]};
                s.advantages = {adv[g]};
                s.centered = {adv[g]};
                groups.push_back(std::move(s));
            }
    }
    return groups;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const TrainingSet& data, const std::vector<TaskSpec>& probe, std::uint64_t seed,
                  const ParametricPolicy* init) {
    cfg.validate();
    TemplateCatalog catalog(cfg.features.slots);
    TrainResult out;
    if (init) {
        if (init->config().digest() != cfg.features.digest())
            throw Error("digest", "initial policy feature digest " + init->config().digest() + " does not match " +
                                      cfg.features.digest());
        out.policy = *init;
    } else {
        out.policy = ParametricPolicy(cfg.features, static_cast<int>(catalog.size()));
        Rng init_rng(derive_seed(seed, 3));
        out.policy.init_hidden(init_rng);
    }
    const bool online = cfg.algo == Algo::GrpoReturn;
    if (online ? data.tasks.empty() : data.states.empty()) throw Error("trainer", "empty training set");
    for (const auto& s : data.states)
        if (s.features.dim != cfg.features.dim()) throw Error("digest", "training features do not match the feature config");

    Rng rng(derive_seed(seed, 10));
    Adam adam(out.policy.params().size(), cfg.lr);
    const std::uint64_t probe_seed = derive_seed(seed, 20);
    for (int it = 0; it < cfg.iterations; ++it) {
        MetricsRow row;
        row.iteration = it;
        const std::uint64_t iter_seed = derive_seed(derive_seed(seed, 11), static_cast<std::uint64_t>(it));
        if (cfg.algo == Algo::Bc) {
            std::vector<std::size_t> batch(static_cast<std::size_t>(cfg.batch));
            for (auto& b : batch) b = uniform_index(rng, data.states.size());
            for (int e = 0; e < cfg.inner_epochs; ++e) {
                ObjectiveResult r = bc_objective(data, batch, out.policy);
                row.objective = r.value;
                adam.step(out.policy.params(), r.grad);
            }
        } else {
            std::vector<AdvantageGroup> groups;
            if (online) {
                groups = online_groups(cfg, data, out.policy, rng, iter_seed);
            } else {
                std::vector<std::size_t> batch(static_cast<std::size_t>(cfg.batch));
                for (auto& b : batch) b = uniform_index(rng, data.states.size());
                groups = offline_groups(cfg, data, batch, out.policy, catalog, iter_seed);
            }
            double abs_sum = 0.0;
            std::size_t n = 0;
            for (const auto& g : groups)
                for (double a : g.centered) {
                    abs_sum += std::abs(a);
                    ++n;
                }
            row.mean_abs_adv = n ? abs_sum / static_cast<double>(n) : 0.0;
            for (int e = 0; e < cfg.inner_epochs && !groups.empty(); ++e) {
                ObjectiveResult r = surrogate_parallel(groups, out.policy, cfg.epsilon);
                row.objective = r.value;
                row.clip_fraction = r.clip_fraction;
                adam.step(out.policy.params(), r.grad);
            }
        }
        if (!probe.empty() && ((it + 1) % cfg.probe_every == 0 || it + 1 == cfg.iterations)) {
            row.probe_sr = probe_success_rate(out.policy, probe, cfg.probe_p_og, cfg.probe_p_es, probe_seed);
            out.final_probe_sr = *row.probe_sr;
        }
        out.metrics.push_back(row);
    }
    if (cfg.iterations == 0 && !probe.empty())
        out.final_probe_sr = probe_success_rate(out.policy, probe, cfg.probe_p_og, cfg.probe_p_es, probe_seed);
    return out;
}

}  // namespace capita
