#include <doctest.h>

#include <algorithm>

#include "capita/env.hpp"

using namespace capita;

namespace {

SceneGraph kitchen() {
    SceneGraph s;
    s.add("CounterTop", std::string(kFloor));
    s.add("Fridge", std::string(kFloor));
    s.add("Cabinet", std::string(kFloor));
    s.add("Cabinet", std::string(kFloor));
    s.add("Apple", "Fridge 1");
    s.add("Mug", "CounterTop 1");
    return s;
}

std::string prop(const Observation& o, const std::string& id, const std::string& key) {
    for (const auto& v : o.visible)
        if (v.id == id)
            for (const auto& [k, val] : v.props)
                if (k == key) return val;
    return "";
}

}  // namespace

TEST_CASE("scene generation is deterministic per seed") {
    CHECK(build_scene(0).serialize() == build_scene(0).serialize());
    CHECK(build_scene(0).serialize() != build_scene(1).serialize());
    build_scene(7).check_invariants();
}

TEST_CASE("scene config rejects too few receptacles") {
    SceneConfig c;
    c.receptacles = 0;
    CHECK_THROWS_AS(build_scene(0, c), Error);
}

TEST_CASE("pick while holding fails with inventory-full and changes nothing") {
    SceneGraph s = kitchen();
    s.add("Apple", "CounterTop 1");
    AgentState a;
    a.location = "CounterTop 1";
    REQUIRE(step(s, a, Action::pick("Mug 1", "CounterTop 1"), ActionProfile::Atomic).success);
    SceneGraph before = s;
    AgentState agent_before = a;
    auto fb = step(s, a, Action::pick("Apple 2", "CounterTop 1"), ActionProfile::Atomic);
    CHECK_FALSE(fb.success);
    CHECK(fb.reason == Reason::InventoryFull);
    CHECK(s == before);
    CHECK(a == agent_before);
}

TEST_CASE("atomic cool sets the temperature") {
    SceneGraph s = kitchen();
    AgentState a;
    CHECK(step(s, a, Action::go_to("Fridge 1"), ActionProfile::Atomic).success);
    CHECK(step(s, a, Action::open("Fridge 1"), ActionProfile::Atomic).success);
    CHECK(step(s, a, Action::pick("Apple 1", "Fridge 1"), ActionProfile::Atomic).success);
    CHECK(step(s, a, Action::cool("Apple 1", "Fridge 1"), ActionProfile::Atomic).success);
    CHECK(s.find("Apple 1")->state.temperature == Temperature::Cold);
}

TEST_CASE("composite profile cools by storing in the fridge") {
    SceneGraph s = kitchen();
    s.find("Apple 1")->location = "CounterTop 1";
    AgentState a;
    const auto P = ActionProfile::Composite;
    CHECK(step(s, a, Action::go_to("CounterTop 1"), P).success);
    CHECK(step(s, a, Action::pick("Apple 1", "CounterTop 1"), P).success);
    CHECK(step(s, a, Action::go_to("Fridge 1"), P).success);
    CHECK(step(s, a, Action::open("Fridge 1"), P).success);
    CHECK(step(s, a, Action::put("Apple 1", "Fridge 1"), P).success);
    CHECK(step(s, a, Action::pick("Apple 1", "Fridge 1"), P).success);
    CHECK(s.find("Apple 1")->state.temperature == Temperature::Cold);
    // The atomic verb does not exist in this profile.
    auto fb = step(s, a, Action::cool("Apple 1", "Fridge 1"), P);
    CHECK_FALSE(fb.success);
}

TEST_CASE("visibility follows open state") {
    SceneGraph s = kitchen();
    AgentState a;
    CHECK(observe(s, a).visible.empty());
    step(s, a, Action::go_to("Fridge 1"), ActionProfile::Atomic);
    CHECK_FALSE(observe(s, a).sees("Apple 1"));
    step(s, a, Action::open("Fridge 1"), ActionProfile::Atomic);
    s.find("Apple 1")->state.temperature = Temperature::Cold;
    Observation o = observe(s, a);
    CHECK(o.sees("Apple 1"));
    CHECK(prop(o, "Apple 1", "temperature") == "cold");
}

TEST_CASE("goal checks report partial progress") {
    SceneGraph s = kitchen();
    std::vector<GoalCondition> goals = {GoalCondition::in("Apple", "Fridge"), GoalCondition::on("Apple", "CounterTop")};
    auto c = check_goals(s, goals);
    CHECK_FALSE(c.success);
    CHECK(c.ssr == doctest::Approx(0.5));
    CHECK(check_goals(s, {GoalCondition::on("Mug", "Cabinet")}).ssr == 0.0);
    std::vector<GoalCondition> four = {GoalCondition::in("Apple", "Fridge"), GoalCondition::on("Mug", "CounterTop"),
                                       GoalCondition::count_in("Apple", "Fridge", 1),
                                       GoalCondition::prop("Apple", "temperature", "room")};
    auto all = check_goals(s, four);
    CHECK(all.success);
    CHECK(all.ssr == 1.0);
}

TEST_CASE("action text round trips") {
    std::vector<Action> acts = {Action::go_to("Fridge 1"), Action::open("Fridge 1"), Action::pick("Apple 1", "Fridge 1"),
                                Action::put("Apple 1", "CounterTop 1"), Action::cool("Apple 1", "Fridge 1"),
                                Action::turn_on("DeskLamp 1"), Action::slice("Apple 1")};
    for (const auto& a : acts) CHECK(parse_action(render(a)) == a);
    CHECK(parse_action_list(render_action_list(acts)) == acts);
    CHECK(parse_action("dance wildly").type == ActionType::Invalid);
}

TEST_CASE("task instantiation") {
    SceneGraph s = kitchen();
    Rng rng(1);
    TaskOverrides ov;
    ov.object = "Apple";
    ov.receptacle = "CounterTop";
    TaskSpec t = instantiate_task(Category::Cool, s, rng, ActionProfile::Atomic, ov);
    REQUIRE(t.goals.size() == 2);
    CHECK(t.goals[0] == GoalCondition::prop("Apple", "temperature", "cold"));
    CHECK(t.goals[1] == GoalCondition::in("Apple", "CounterTop"));
    CHECK(t.instruction == "cool some apple and put it in countertop");

    TaskOverrides two;
    two.object = "Mug";
    CHECK_THROWS_AS(instantiate_task(Category::PickTwo, s, rng, ActionProfile::Atomic, two), Error);
}

TEST_CASE("examine tasks target the lamp") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        SceneGraph s = build_scene(seed);
        Rng rng(seed);
        TaskSpec t;
        try {
            t = instantiate_task(Category::Examine, s, rng, ActionProfile::Atomic);
        } catch (const Error&) {
            continue;
        }
        REQUIRE(t.goals.size() == 1);
        CHECK(t.goals[0].kind == GoalKind::ExaminedUnderLamp);
        return;
    }
    FAIL("no scene supports an examine task");
}

TEST_CASE("composition") {
    SceneGraph s = build_scene(3);
    Rng rng(3);
    TaskSpec a = instantiate_task(Category::PickPlace, s, rng, ActionProfile::Atomic);
    CHECK_THROWS_AS(compose_tasks(a, a), Error);
    TaskOverrides ov;
    ov.exclude_instances = a.components[0].instances;
    TaskSpec b = instantiate_task(Category::PickPlace, s, rng, ActionProfile::Atomic, ov);
    TaskSpec c = compose_tasks(a, b);
    CHECK(c.category == Category::Composite);
    CHECK(c.goals.size() == a.goals.size() + b.goals.size());
    CHECK(task_from_json(to_json(c)) == c);
}
