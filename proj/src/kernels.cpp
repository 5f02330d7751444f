#include "capita/kernels.hpp"

#include <cmath>
#include <exception>

#include <omp.h>

namespace capita {

int worker_count() { return omp_get_max_threads(); }

std::vector<EpisodeResult> run_episodes_serial(const std::vector<TaskSpec>& tasks, const std::vector<EpisodeJob>& jobs,
                                               const PolicyFactory& make_policy, const CapabilitySuite& backends,
                                               const LimitsFn& limits, const RunOptions& options) {
    std::vector<EpisodeResult> out;
    out.reserve(jobs.size());
    for (const auto& j : jobs) {
        const TaskSpec& t = tasks.at(j.task);
        auto policy = make_policy();
        out.push_back(run_episode(t, *policy, backends, limits(t), j.seed, options));
    }
    return out;
}

std::vector<EpisodeResult> run_episodes_parallel(const std::vector<TaskSpec>& tasks, const std::vector<EpisodeJob>& jobs,
                                                 const PolicyFactory& make_policy, const CapabilitySuite& backends,
                                                 const LimitsFn& limits, const RunOptions& options) {
    std::vector<EpisodeResult> out(jobs.size());
    std::exception_ptr failure;
    const long n = static_cast<long>(jobs.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (long i = 0; i < n; ++i) {
        try {
            const EpisodeJob& j = jobs[static_cast<std::size_t>(i)];
            const TaskSpec& t = tasks.at(j.task);
            auto policy = make_policy();
            out[static_cast<std::size_t>(i)] = run_episode(t, *policy, backends, limits(t), j.seed, options);
        } catch (...) {
#pragma omp critical(capita_episode_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

namespace {

struct Partial {
    double value = 0.0;
    std::vector<double> grad;
    int clipped = 0;
    int skipped = 0;
    int samples = 0;
};

void accumulate_group(const AdvantageGroup& g, const ParametricPolicy& policy, double epsilon, Partial& p) {
    if (g.actions.size() != g.old_logprob.size() || g.actions.size() != g.centered.size())
        throw Error("trainer", "advantage group fields differ in length");
    std::vector<double> lp = policy.log_probs(g.features);
    for (std::size_t i = 0; i < g.actions.size(); ++i) {
        int a = g.actions[i];
        if (a < 0 || static_cast<std::size_t>(a) >= lp.size()) throw Error("policy", "action index outside catalog");
        double r = std::exp(lp[static_cast<std::size_t>(a)] - g.old_logprob[i]);
        if (!std::isfinite(r)) {
            ++p.skipped;
            continue;
        }
        double A = g.centered[i];
        double un = r * A;
        double term = clipped_term(r, A, epsilon);
        ++p.samples;
        p.value += term;
        // The clipped branch is constant in theta.
        if (un <= term) {
            if (A != 0.0) policy.accumulate_grad_logprob(g.features, a, A * r, p.grad);
        } else {
            ++p.clipped;
        }
    }
}

ObjectiveResult finish(Partial& p, std::size_t n_params) {
    ObjectiveResult r;
    r.samples = p.samples;
    r.skipped = p.skipped;
    r.grad = std::move(p.grad);
    if (r.grad.size() != n_params) r.grad.assign(n_params, 0.0);
    if (p.samples > 0) {
        double inv = 1.0 / p.samples;
        r.value = p.value * inv;
        r.clip_fraction = p.clipped * inv;
        for (auto& g : r.grad) g *= inv;
    }
    return r;
}

}  // namespace

ObjectiveResult surrogate_serial(const std::vector<AdvantageGroup>& groups, const ParametricPolicy& policy, double epsilon) {
    Partial p;
    p.grad.assign(policy.params().size(), 0.0);
    for (const auto& g : groups) accumulate_group(g, policy, epsilon, p);
    return finish(p, policy.params().size());
}

ObjectiveResult surrogate_parallel(const std::vector<AdvantageGroup>& groups, const ParametricPolicy& policy,
                                   double epsilon) {
    constexpr std::size_t kChunks = 16;
    const std::size_t n = groups.size();
    const std::size_t chunks = std::min(kChunks, std::max<std::size_t>(n, 1));
    std::vector<Partial> parts(chunks);
    std::exception_ptr failure;
#pragma omp parallel for schedule(static, 1)
    for (long c = 0; c < static_cast<long>(chunks); ++c) {
        try {
            Partial& p = parts[static_cast<std::size_t>(c)];
            p.grad.assign(policy.params().size(), 0.0);
            std::size_t lo = n * static_cast<std::size_t>(c) / chunks;
            std::size_t hi = n * (static_cast<std::size_t>(c) + 1) / chunks;
            for (std::size_t i = lo; i < hi; ++i) accumulate_group(groups[i], policy, epsilon, p);
        } catch (...) {
#pragma omp critical(capita_surrogate_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    Partial total;
    total.grad.assign(policy.params().size(), 0.0);
    for (auto& p : parts) {
        total.value += p.value;
        total.clipped += p.clipped;
        total.skipped += p.skipped;
        total.samples += p.samples;
        for (std::size_t i = 0; i < total.grad.size(); ++i) total.grad[i] += p.grad[i];
    }
    return finish(total, policy.params().size());
}

}  // namespace capita
