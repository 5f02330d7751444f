#include <benchmark/benchmark.h>

#include "capita/datagen.hpp"
#include "capita/kernels.hpp"

using namespace capita;

namespace {

const std::vector<TaskSpec>& tasks() {
    static const std::vector<TaskSpec> t = generate_tasks(0, 4, {ActionProfile::Atomic, ActionProfile::Composite}, true, 1);
    return t;
}

std::vector<EpisodeJob> jobs() {
    std::vector<EpisodeJob> j;
    for (std::size_t i = 0; i < tasks().size(); ++i) j.push_back({i, derive_seed(9, i)});
    return j;
}

RunOptions quiet() {
    RunOptions o;
    o.record_transcript = false;
    return o;
}

PolicyFactory expert() {
    return [] { return std::make_unique<ExpertScheduler>(); };
}

LimitsFn limits() {
    return [](const TaskSpec& t) { return default_limits(t); };
}

void BM_EpisodesSerial(benchmark::State& state) {
    auto j = jobs();
    auto backends = CapabilitySuite::noisy(0.0, 0.2, 0.1);
    for (auto _ : state) benchmark::DoNotOptimize(run_episodes_serial(tasks(), j, expert(), backends, limits(), quiet()));
    state.SetItemsProcessed(state.iterations() * static_cast<long>(j.size()));
}

void BM_EpisodesParallel(benchmark::State& state) {
    auto j = jobs();
    auto backends = CapabilitySuite::noisy(0.0, 0.2, 0.1);
    for (auto _ : state) benchmark::DoNotOptimize(run_episodes_parallel(tasks(), j, expert(), backends, limits(), quiet()));
    state.SetItemsProcessed(state.iterations() * static_cast<long>(j.size()));
}

struct SurrogateFixture {
    ParametricPolicy policy;
    std::vector<AdvantageGroup> groups;
    SurrogateFixture() : policy(FeatureConfig{}, static_cast<int>(TemplateCatalog(6).size())) {
        Rng rng(4);
        for (auto& w : policy.params()) w = 0.01 * (uniform01(rng) - 0.5);
        Dataset d = build_stage3(tasks(), {}, 2);
        TrainingSet set = to_training_set(d, policy.config(), false);
        for (std::size_t i = 0; i < 256 && i < set.states.size(); ++i) {
            AdvantageGroup g;
            g.features = set.states[i].features;
            auto lp = policy.log_probs(g.features);
            std::vector<double> adv;
            for (int k = 0; k < 8; ++k) {
                int a = policy.sample(g.features, rng);
                g.actions.push_back(a);
                g.old_logprob.push_back(lp[static_cast<std::size_t>(a)] + 0.1 * (uniform01(rng) - 0.5));
                adv.push_back(a == set.states[i].expert ? 0.0 : -0.05);
            }
            g.advantages = adv;
            g.centered = center_group(adv);
            groups.push_back(std::move(g));
        }
    }
};

const SurrogateFixture& fixture() {
    static const SurrogateFixture f;
    return f;
}

void BM_SurrogateSerial(benchmark::State& state) {
    const auto& f = fixture();
    for (auto _ : state) benchmark::DoNotOptimize(surrogate_serial(f.groups, f.policy, 0.2));
    state.SetItemsProcessed(state.iterations() * static_cast<long>(f.groups.size()));
}

void BM_SurrogateParallel(benchmark::State& state) {
    const auto& f = fixture();
    for (auto _ : state) benchmark::DoNotOptimize(surrogate_parallel(f.groups, f.policy, 0.2));
    state.SetItemsProcessed(state.iterations() * static_cast<long>(f.groups.size()));
}

}  // namespace

BENCHMARK(BM_EpisodesSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EpisodesParallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_SurrogateSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SurrogateParallel)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
