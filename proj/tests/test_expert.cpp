#include <doctest.h>

#include "capita/expert.hpp"
#include "capita/trainer.hpp"
#include "test_util.hpp"

using namespace capita;

namespace {

TaskSpec cool_apple_task() {
    SceneGraph s;
    s.add("CounterTop", std::string(kFloor));
    s.add("Fridge", std::string(kFloor));
    s.add("Cabinet", std::string(kFloor));
    s.add("Apple", "Fridge 1");
    Rng rng(0);
    TaskOverrides ov;
    ov.object = "Apple";
    ov.receptacle = "CounterTop";
    return instantiate_task(Category::Cool, s, rng, ActionProfile::Atomic, ov);
}

ProgressTracker tracker_of(std::vector<SubPlan> steps, std::size_t head = 0) {
    ProgressTracker t(std::move(steps));
    t.head = head;
    return t;
}

}  // namespace

TEST_CASE("cool task decomposes into explore, grasp, cool, explore, put") {
    ExpertPlan p = decompose(cool_apple_task());
    std::vector<SubPlan> want = {
        SubPlan::explore("Apple"),
        SubPlan::manip(ManipCategory::Grasp, {"Apple"}),
        SubPlan::manip(ManipCategory::CoolWith, {"Apple", "Fridge"}),
        SubPlan::explore("CounterTop"),
        SubPlan::manip(ManipCategory::Put, {"Apple", "CounterTop"}),
    };
    CHECK(p.steps == want);
}

TEST_CASE("examine plans end by turning on the lamp") {
    for (const auto& t : testing::small_tasks()) {
        if (t.category != Category::Examine) continue;
        ExpertPlan p = decompose(t);
        REQUIRE(p.steps.back().kind == SubPlanKind::Manipulation);
        CHECK(p.steps.back().command.category == ManipCategory::TurnOn);
    }
}

TEST_CASE("expert scheduler step") {
    ProgressTracker t = tracker_of({SubPlan::explore("Mug"), SubPlan::manip(ManipCategory::Grasp, {"Mug"})});
    SchedulerAction a = expert_scheduler_step(t, nullptr, nullptr);
    CHECK(render_scheduler_output(a) ==
          "1. exploration_guidance(mug)\n2. exploration_planner()\n3. object_grounding(mug)");

    ChainOutcome miss;
    miss.kind = ChainKind::Exploration;
    miss.og_found = false;
    CHECK(expert_scheduler_step(t, &a, &miss) == a);
    CHECK(t.head == 0);

    ChainOutcome hit = miss;
    hit.og_found = true;
    SchedulerAction g = expert_scheduler_step(t, &a, &hit);
    CHECK(classify(g) == ChainKind::Manipulation);
    CHECK(g.chain[1].query == "grasp mug");

    ChainOutcome ok;
    ok.kind = ChainKind::Manipulation;
    ok.es_success = true;
    CHECK(expert_scheduler_step(t, &g, &ok).stop);
    CHECK(optimal_action_set(t) == std::vector<SchedulerAction>{SchedulerAction::halt()});
}

TEST_CASE("ES failures roll back to the object's exploration when the object is lost") {
    ProgressTracker t = tracker_of({SubPlan::explore("Mug"), SubPlan::manip(ManipCategory::Grasp, {"Mug"})}, 1);
    SchedulerAction g = expert_action(t);
    ChainOutcome fail;
    fail.kind = ChainKind::Manipulation;
    fail.es_success = false;
    fail.es_reason = Reason::TargetNotVisible;
    ProgressTracker a = t;
    advance(a, g, fail);
    CHECK(a.head == 0);
    fail.es_reason = Reason::WrongTool;
    ProgressTracker b = t;
    advance(b, g, fail);
    CHECK(b.head == 1);
}

TEST_CASE("expert value") {
    auto two = tracker_of({SubPlan::explore("Mug"), SubPlan::explore("Apple")});
    CHECK(expert_value(two, 0.5, RewardMode::AllSubplans) == 1.5);
    auto three = tracker_of({SubPlan::explore("Mug"), SubPlan::explore("Apple"), SubPlan::explore("Bowl")});
    CHECK(expert_value(three, 1.0, RewardMode::AllSubplans) == 3.0);
    auto mixed = tracker_of({SubPlan::explore("Mug"), SubPlan::manip(ManipCategory::Grasp, {"Mug"})});
    CHECK(expert_value(mixed, 0.5, RewardMode::ManipOnly) == 0.5);
    CHECK_THROWS_AS(expert_value(mixed, 0.0, RewardMode::ManipOnly), Error);
}

TEST_CASE("expert advantage hand cases") {
    auto t = tracker_of({SubPlan::manip(ManipCategory::Grasp, {"Mug"}), SubPlan::manip(ManipCategory::Put, {"Mug", "Desk"})});
    REQUIRE(expert_value(t, 0.5, RewardMode::ManipOnly) == 1.5);
    for (double g : {0.3, 0.5, 0.95, 1.0}) CHECK(expert_advantage(t, expert_action(t), g, RewardMode::ManipOnly) == 0.0);
    SchedulerAction other = SchedulerAction::explore("apple");
    CHECK(expert_advantage(t, other, 0.5, RewardMode::ManipOnly) == -0.75);
    CHECK(expert_advantage(t, other, 1.0, RewardMode::ManipOnly) == 0.0);
    CHECK(expert_advantage(t, SchedulerAction::halt(), 0.5, RewardMode::ManipOnly) == -0.75);
}

TEST_CASE("property: expert actions have zero advantage, the rest are non-positive") {
    const auto& data = testing::small_states();
    REQUIRE(data.states.size() >= 100);
    TemplateCatalog cat(6);
    for (std::size_t i = 0; i < 100; ++i) {
        const auto& s = data.states[i * data.states.size() / 100];
        const auto& keys = data.plans[s.task].key_objects;
        for (double g : {0.5, 0.95}) {
            double v = expert_value(s.tracker, g, RewardMode::ManipOnly);
            CHECK(expert_advantage(s.tracker, expert_action(s.tracker), g, RewardMode::ManipOnly) == 0.0);
            for (std::size_t a = 0; a < cat.size(); ++a) {
                if (static_cast<int>(a) == s.expert) continue;
                double adv = expert_advantage(s.tracker, cat.bind(a, keys), g, RewardMode::ManipOnly);
                if (v > 0.0) CHECK(adv < 0.0);
                else CHECK(adv <= 0.0);
            }
        }
    }
}

TEST_CASE("tracker json round trip") {
    ProgressTracker t = tracker_of(decompose(cool_apple_task()).steps, 2);
    CHECK(tracker_from_json(to_json(t)) == t);
    Json bad = to_json(t);
    bad["head"] = 99;
    CHECK_THROWS_AS(tracker_from_json(bad), Error);
}

TEST_CASE("property: all-subplans value strictly decreases along oracle expert episodes") {
    for (std::size_t i = 0; i < testing::small_tasks().size(); i += 3) {
        const TaskSpec& t = testing::small_tasks()[i];
        ExpertScheduler ex;
        auto r = run_episode(t, ex, CapabilitySuite::oracle(), default_limits(t), i);
        REQUIRE(r.success);
        ExpertPlan plan = decompose(t);
        double prev = 1e300;
        for (const auto& turn : r.turn_log) {
            double v = expert_value(replay_tracker(plan.steps, turn.state), 0.9, RewardMode::AllSubplans);
            CHECK(v < prev);
            prev = v;
        }
        CHECK(expert_value(ex.tracker(), 0.9, RewardMode::AllSubplans) == 0.0);
    }
}
