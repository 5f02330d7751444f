#include <doctest.h>

#include <cmath>
#include <map>

#include "capita/capabilities.hpp"
#include "capita/policy.hpp"
#include "capita/scheduler.hpp"
#include "test_util.hpp"

using namespace capita;

namespace {

SceneGraph room() {
    SceneGraph s;
    s.add("CounterTop", std::string(kFloor));
    s.add("Cabinet", std::string(kFloor));
    s.add("Cabinet", std::string(kFloor));
    s.add("Fridge", std::string(kFloor));
    s.add("Desk", std::string(kFloor));
    s.add("Mug", "Cabinet 2");
    s.add("Apple", "Fridge 1");
    s.add("Laptop", "Desk 1");
    s.add("Bowl", "CounterTop 1");
    return s;
}

AgentKnowledge knowledge_of(const SceneGraph& s) {
    AgentKnowledge k;
    k.receptacles = s.receptacles();
    return k;
}

Observation at(SceneGraph& s, const std::string& where, bool open = false) {
    AgentState a;
    step(s, a, Action::go_to(where), ActionProfile::Atomic);
    if (open) step(s, a, Action::open(where), ActionProfile::Atomic);
    return observe(s, a);
}

}  // namespace

TEST_CASE("EG points at the object's receptacle and skips tried directions") {
    SceneGraph s = room();
    auto cands = eg_candidates(s, ActionProfile::Atomic);
    EgMemory mem;
    Rng rng(0);
    auto first = eg("mug", cands, mem, CapabilitySuite::oracle(), s, ActionProfile::Atomic, rng);
    REQUIRE(first.direction);
    CHECK(render(*first.direction) == "in Cabinet 2");
    auto second = eg("mug", cands, mem, CapabilitySuite::oracle(), s, ActionProfile::Atomic, rng);
    REQUIRE(second.direction);
    CHECK(second.direction->object != "Cabinet 2");
}

TEST_CASE("EG reports exhaustion once every candidate was tried") {
    SceneGraph s = room();
    auto cands = eg_candidates(s, ActionProfile::Atomic);
    EgMemory mem;
    Rng rng(0);
    for (std::size_t i = 0; i < cands.size(); ++i)
        REQUIRE(eg("mug", cands, mem, CapabilitySuite::oracle(), s, ActionProfile::Atomic, rng).direction);
    CHECK_FALSE(eg("mug", cands, mem, CapabilitySuite::oracle(), s, ActionProfile::Atomic, rng).direction);
}

TEST_CASE("EG with p_eg = 1 is uniform over untried candidates") {
    SceneGraph s = room();
    auto cands = eg_candidates(s, ActionProfile::Atomic);
    Rng rng(42);
    std::map<std::string, int> hits;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        EgMemory mem;
        hits[eg("mug", cands, mem, CapabilitySuite::noisy(1.0, 0, 0), s, ActionProfile::Atomic, rng).direction->object]++;
    }
    REQUIRE(hits.size() == cands.size());
    double expected = static_cast<double>(n) / cands.size();
    double chi2 = 0.0;
    for (auto& [k, v] : hits) chi2 += (v - expected) * (v - expected) / expected;
    // 99.9% quantile of chi-square with 4 degrees of freedom.
    CHECK(cands.size() == 5);
    CHECK(chi2 < 18.47);
}

TEST_CASE("OG grounds classes, synonyms and descriptions") {
    SceneGraph s = room();
    Rng rng(0);
    Observation desk = at(s, "CounterTop 1");
    Grounding bowl = og("something for serving soup", desk, CapabilitySuite::oracle(), s, rng);
    CHECK(bowl.found);
    CHECK(bowl.label == "Bowl");
    CHECK(render(bowl).find("\"label\":\"bowl\"") != std::string::npos);
    CHECK_FALSE(og("knife", desk, CapabilitySuite::oracle(), s, rng).found);
    Grounding flipped = og("bowl", desk, CapabilitySuite::noisy(0, 1.0, 0), s, rng);
    CHECK_FALSE(flipped.found);
    CHECK(flipped.injected);
    CHECK(render(flipped) == "[]");
}

TEST_CASE("SD facts") {
    SceneGraph s = room();
    s.find("Laptop 1")->state.open = true;
    Observation desk = at(s, "Desk 1");
    auto facts = sd("Laptop", desk, s);
    CHECK(render_facts(facts) == "There is a laptop on the desk. The laptop is open.");

    Observation fridge = at(s, "Fridge 1", true);
    s.find("Apple 1")->state.temperature = Temperature::Cold;
    CHECK(render_facts(sd("Apple", fridge, s)) == "There is a apple in the fridge. The apple is cold.");

    SceneGraph closed = room();
    Observation elsewhere = at(closed, "Desk 1");
    CHECK(sd("Apple", elsewhere, closed).empty());
}

TEST_CASE("AD-explore") {
    SceneGraph s = room();
    AgentKnowledge k = knowledge_of(s);
    CHECK(ad_explore({Relation::In, "Cabinet 2"}, k, ActionProfile::Atomic) ==
          std::vector<Action>{Action::go_to("Cabinet 2"), Action::open("Cabinet 2")});
    CHECK(ad_explore({Relation::On, "CounterTop 1"}, k, ActionProfile::Atomic) ==
          std::vector<Action>{Action::go_to("CounterTop 1")});
    CHECK(ad_explore({Relation::Target, "Laptop 1"}, k, ActionProfile::Composite) ==
          std::vector<Action>{Action::go_to("Laptop 1")});
    CHECK(ad_explore({Relation::On, "Moon 1"}, k, ActionProfile::Atomic).front().type == ActionType::Invalid);
}

TEST_CASE("AD-manip cool") {
    SceneGraph s = room();
    AgentKnowledge k = knowledge_of(s);
    k.location = "Fridge 1";
    k.inventory = "Apple 1";
    std::vector<Fact> facts = {{Fact::Property, "Apple 1", "location", "inventory"}};
    ManipCommand cool{ManipCategory::CoolWith, {"Apple", "Fridge"}};
    auto atomic = ad_manip(cool, facts, k, ActionProfile::Atomic, s.tools());
    CHECK(atomic == std::vector<Action>{Action::cool("Apple 1", "Fridge 1")});
    auto composite = ad_manip(cool, facts, k, ActionProfile::Composite, s.tools());
    CHECK(composite == std::vector<Action>{Action::open("Fridge 1"), Action::put("Apple 1", "Fridge 1"),
                                           Action::close("Fridge 1"), Action::open("Fridge 1"),
                                           Action::pick("Apple 1", "Fridge 1"), Action::close("Fridge 1")});
}

TEST_CASE("ES summaries") {
    Rng rng(0);
    std::vector<ExecutedAction> ok = {{Action::pick("SoapBar 1", "CounterTop 1"), {}}};
    auto s = es("grasp soapbar", ok, CapabilitySuite::oracle(), rng);
    CHECK(s.success);
    CHECK(s.text == "You successfully grasp SoapBar 1.");
    std::vector<ExecutedAction> bad = {{Action::pick("SoapBar 1", "CounterTop 1"), {false, Reason::InventoryFull}}};
    auto f = es("grasp soapbar", bad, CapabilitySuite::oracle(), rng);
    CHECK_FALSE(f.success);
    CHECK(f.reason == Reason::InventoryFull);
    auto forced = es("grasp soapbar", ok, CapabilitySuite::noisy(0, 0, 1.0), rng);
    CHECK_FALSE(forced.success);
    CHECK(forced.injected);
    CHECK(forced.reason != Reason::Ok);
    CHECK(es("grasp soapbar", {}, CapabilitySuite::oracle(), rng).success);
}

TEST_CASE("scheduler output grammar round trips") {
    for (auto a : {SchedulerAction::explore("mug"), SchedulerAction::manipulate("cool apple with fridge"),
                   SchedulerAction::halt()}) {
        auto p = parse_scheduler_output(render_scheduler_output(a));
        REQUIRE(p);
        CHECK(*p == a);
    }
    SchedulerAction bad;
    bad.chain = {{InvocationKind::OG, "mug"}};
    CHECK(classify(bad) == ChainKind::Illegal);
}

TEST_CASE("episodes: oracle expert succeeds, blind OG fails, early stop fails") {
    for (std::size_t i = 0; i < testing::small_tasks().size(); i += 7) {
        const TaskSpec& t = testing::small_tasks()[i];
        ExpertScheduler ex;
        auto r = run_episode(t, ex, CapabilitySuite::oracle(), default_limits(t), i);
        CHECK(r.success);
        CHECK(r.ssr == 1.0);

        ExpertScheduler blind;
        auto b = run_episode(t, blind, CapabilitySuite::noisy(0, 1.0, 0), default_limits(t), i);
        CHECK_FALSE(b.success);
        CHECK((b.terminal == TerminalReason::ExplorationExhausted || b.terminal == TerminalReason::StepBudget));
    }
}

namespace {
struct Stopper : SchedulerPolicy {
    SchedulerAction act(const SchedulerState&, const TaskSpec&, Rng&) override { return SchedulerAction::halt(); }
    Json descriptor() const override { return Json{{"kind", "stop"}}; }
};
}  // namespace

TEST_CASE("immediate stop") {
    const TaskSpec& t = testing::small_tasks().front();
    Stopper p;
    auto r = run_episode(t, p, CapabilitySuite::oracle(), default_limits(t), 0);
    CHECK_FALSE(r.success);
    CHECK(r.terminal == TerminalReason::Stopped);
    CHECK(r.steps == 0);
    CHECK(r.ssr == check_goals(scene_for(t), t.goals).ssr);
}

TEST_CASE("serial and parallel episode kernels agree") {
    std::vector<EpisodeJob> jobs;
    for (std::size_t i = 0; i < testing::small_tasks().size(); ++i) jobs.push_back({i, derive_seed(5, i)});
    PolicyFactory f = [] { return std::make_unique<ExpertScheduler>(); };
    LimitsFn lim = [](const TaskSpec& t) { return default_limits(t); };
    auto noisy = CapabilitySuite::noisy(0.1, 0.2, 0.1);
    auto a = run_episodes_serial(testing::small_tasks(), jobs, f, noisy, lim);
    auto b = run_episodes_parallel(testing::small_tasks(), jobs, f, noisy, lim);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].transcript.to_jsonl() == b[i].transcript.to_jsonl());
}

TEST_CASE("features") {
    const TaskSpec& t = testing::small_tasks().front();
    FeatureConfig cfg;
    const int K = cfg.slots;
    SchedulerState s;
    s.instruction = t.instruction;
    FeatureVector x = featurize(s, t, cfg);
    CHECK(x.dim == cfg.dim());
    CHECK(x.at(feat::bias(K)) == 1.0);
    CHECK(x.at(feat::turn(K)) == 0.0);
    for (int c = 0; c < kManipCategories; ++c) CHECK(x.at(feat::kEsSuccess + c) == 0.0);

    ChainOutcome miss;
    miss.kind = ChainKind::Exploration;
    miss.query = "mug";
    SchedulerAction look = SchedulerAction::explore("mug");
    apply_chain(s, look, miss);
    apply_chain(s, look, miss);
    CHECK(featurize(s, t, cfg).at(feat::notfound_streak(K)) == 2.0 / 4.0);

    ChainOutcome ok;
    ok.kind = ChainKind::Manipulation;
    ok.query = "grasp mug";
    ok.es_success = true;
    apply_chain(s, SchedulerAction::manipulate("grasp mug"), ok);
    FeatureVector y = featurize(s, t, cfg);
    CHECK(y.at(feat::kEsSuccess + static_cast<int>(ManipCategory::Grasp)) == 1.0 / 4.0);
    CHECK(y.finite());
}
