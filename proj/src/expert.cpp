#include "capita/expert.hpp"

#include <algorithm>

#include "capita/scheduler.hpp"

namespace capita {

std::string to_string(const SubPlan& s) {
    if (s.kind == SubPlanKind::Exploration) return "Explore(" + s.query() + ")";
    return "Manip(" + render(s.command) + ")";
}

Json to_json(const SubPlan& s) {
    if (s.kind == SubPlanKind::Exploration) return Json{{"kind", "explore"}, {"class", s.target_class}};
    return Json{{"kind", "manip"}, {"category", to_string(s.command.category)}, {"args", s.command.args}};
}

SubPlan subplan_from_json(const Json& j) {
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "explore") return SubPlan::explore(j.at("class").get<std::string>());
    if (kind != "manip") throw Error("parse", "unknown sub-plan kind: " + kind);
    std::string cat = j.at("category").get<std::string>();
    for (int c = 0; c < kManipCategories; ++c)
        if (to_string(static_cast<ManipCategory>(c)) == cat)
            return SubPlan::manip(static_cast<ManipCategory>(c), j.at("args").get<std::vector<std::string>>());
    throw Error("parse", "unknown manipulation category: " + cat);
}

Json to_json(const ExpertPlan& p) {
    Json steps = Json::array();
    for (const auto& s : p.steps) steps.push_back(to_json(s));
    return Json{{"steps", steps}, {"key_objects", p.key_objects}};
}

ExpertPlan plan_from_json(const Json& j) {
    ExpertPlan p;
    for (const auto& s : j.at("steps")) p.steps.push_back(subplan_from_json(s));
    p.key_objects = j.at("key_objects").get<std::vector<std::string>>();
    return p;
}

namespace {

void append_component(const TaskComponent& c, std::vector<SubPlan>& out) {
    using M = ManipCategory;
    const std::string& o = c.object;
    const std::string& r = c.receptacle;
    auto fetch = [&] {
        out.push_back(SubPlan::explore(o));
        out.push_back(SubPlan::manip(M::Grasp, {o}));
    };
    auto deliver = [&](const std::string& what) {
        out.push_back(SubPlan::explore(r));
        out.push_back(SubPlan::manip(M::Put, {what, r}));
    };
    switch (c.category) {
        case Category::PickPlace:
            fetch();
            deliver(o);
            break;
        case Category::PickTwo:
            fetch();
            deliver(o);
            fetch();
            deliver(o);
            break;
        case Category::StackPlace:
            fetch();
            out.push_back(SubPlan::explore(c.container));
            out.push_back(SubPlan::manip(M::PutAndGrasp, {o, c.container}));
            deliver(c.container);
            break;
        case Category::Clean:
        case Category::Heat:
        case Category::Cool: {
            M m = c.category == Category::Clean ? M::CleanWith : c.category == Category::Heat ? M::HeatWith : M::CoolWith;
            fetch();
            out.push_back(SubPlan::manip(m, {o, c.tool}));
            deliver(o);
            break;
        }
        case Category::Examine:
            fetch();
            out.push_back(SubPlan::explore(c.tool));
            out.push_back(SubPlan::manip(M::TurnOn, {c.tool}));
            break;
        case Category::Composite: throw Error("planning", "nested composite component");
    }
}

}  // namespace

ExpertPlan decompose(const TaskSpec& task) {
    ExpertPlan p;
    for (const auto& c : task.components) append_component(c, p.steps);
    auto add_key = [&](const std::string& cls) {
        if (std::find(p.key_objects.begin(), p.key_objects.end(), cls) == p.key_objects.end()) p.key_objects.push_back(cls);
    };
    for (const auto& s : p.steps) {
        if (s.kind == SubPlanKind::Exploration) add_key(s.target_class);
        else
            for (const auto& a : s.command.args) add_key(a);
    }
    if (p.steps.empty()) throw Error("planning", "task " + task.id + " has no components");
    return p;
}

ExpertPlan plan(const TaskSpec& task, const SceneGraph& scene) {
    ExpertPlan p = decompose(task);
    for (const auto& s : p.steps) {
        if (s.kind != SubPlanKind::Manipulation) continue;
        for (const auto& a : s.command.args)
            if (scene.count_class(a) == 0) throw Error("planning", "plan references absent class " + a);
    }
    ExpertScheduler expert(p);
    EpisodeResult r = run_episode(task, expert, CapabilitySuite::oracle(), default_limits(task), 0);
    if (!r.success)
        throw Error("planning", "expert plan for " + task.id + " fails under oracle capabilities (" +
                                    to_string(r.terminal) + ")");
    return p;
}

Json task_with_plan_json(const TaskSpec& task, const ExpertPlan& plan) {
    Json j = to_json(task);
    j["expert_plan"] = to_json(plan);
    return j;
}

std::string to_string(RewardMode m) { return m == RewardMode::ManipOnly ? "manip-only" : "all-subplans"; }

RewardMode parse_reward_mode(std::string_view s) {
    if (s == "manip-only") return RewardMode::ManipOnly;
    if (s == "all-subplans") return RewardMode::AllSubplans;
    throw Error("config", "unknown reward mode: " + std::string(s));
}

// ---------------------------------------------------------------- tracker

std::vector<std::size_t> ProgressTracker::completed() const {
    std::vector<std::size_t> v;
    for (std::size_t i = 0; i < head && i < plan.size(); ++i) v.push_back(i);
    return v;
}

std::vector<std::size_t> ProgressTracker::remaining() const {
    std::vector<std::size_t> v;
    for (std::size_t i = head; i < plan.size(); ++i) v.push_back(i);
    return v;
}

std::vector<std::size_t> ProgressTracker::remaining_manip_rounds() const {
    std::vector<std::size_t> v;
    for (std::size_t i = head; i < plan.size(); ++i)
        if (plan[i].kind == SubPlanKind::Manipulation) v.push_back(i - head);
    return v;
}

void ProgressTracker::check() const {
    if (head > plan.size()) throw Error("tracker", "tracker head beyond plan end");
}

Json to_json(const ProgressTracker& t) {
    Json steps = Json::array();
    for (const auto& s : t.plan) steps.push_back(to_json(s));
    return Json{{"plan", steps}, {"head", t.head}};
}

ProgressTracker tracker_from_json(const Json& j) {
    std::vector<SubPlan> steps;
    for (const auto& s : j.at("plan")) steps.push_back(subplan_from_json(s));
    ProgressTracker t(std::move(steps));
    t.head = j.at("head").get<std::size_t>();
    t.check();
    return t;
}

SchedulerAction expert_action(const ProgressTracker& tracker) {
    tracker.check();
    if (tracker.done()) return SchedulerAction::halt();
    const SubPlan& s = tracker.plan[tracker.head];
    if (s.kind == SubPlanKind::Exploration) return SchedulerAction::explore(s.query());
    return SchedulerAction::manipulate(render(s.command));
}

std::vector<SchedulerAction> optimal_action_set(const ProgressTracker& tracker) { return {expert_action(tracker)}; }

bool is_optimal(const ProgressTracker& tracker, const SchedulerAction& action, const Lexicon& lex) {
    for (const auto& a : optimal_action_set(tracker))
        if (canonical_equal(a, action, lex)) return true;
    return false;
}

std::size_t rollback_target(const ProgressTracker& tracker, Reason reason) {
    if (tracker.done()) return tracker.head;
    const SubPlan& s = tracker.plan[tracker.head];
    if (s.kind != SubPlanKind::Manipulation) return tracker.head;
    const bool lost_object =
        reason == Reason::InventoryEmpty || reason == Reason::TargetNotVisible || reason == Reason::NotAtLocation;
    if (!lost_object) return tracker.head;
    const std::string& cls = s.primary_class();
    for (std::size_t i = tracker.head + 1; i-- > 0;)
        if (tracker.plan[i].kind == SubPlanKind::Exploration && tracker.plan[i].target_class == cls) return i;
    return tracker.head;
}

void advance(ProgressTracker& tracker, const SchedulerAction& taken, const ChainOutcome& outcome, const Lexicon& lex) {
    tracker.check();
    if (tracker.done() || taken.stop) return;
    if (!is_optimal(tracker, taken, lex)) return;
    const SubPlan& s = tracker.plan[tracker.head];
    if (s.kind == SubPlanKind::Exploration) {
        if (outcome.og_found) ++tracker.head;
        return;
    }
    if (outcome.es_success) ++tracker.head;
    else tracker.head = rollback_target(tracker, outcome.es_reason);
}

SchedulerAction expert_scheduler_step(ProgressTracker& tracker, const SchedulerAction* last_action,
                                      const ChainOutcome* last_feedback) {
    if (last_action && last_feedback) advance(tracker, *last_action, *last_feedback);
    return expert_action(tracker);
}

double expert_value(const ProgressTracker& tracker, double gamma, RewardMode mode) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw Error("config", "gamma must lie in (0, 1]");
    tracker.check();
    double v = 0.0;
    for (std::size_t i = tracker.plan.size(); i-- > tracker.head;) {
        double r = (mode == RewardMode::AllSubplans || tracker.plan[i].kind == SubPlanKind::Manipulation) ? 1.0 : 0.0;
        v = r + gamma * v;
    }
    return v;
}

}  // namespace capita
