#include <algorithm>
#include <set>

#include "capita/env.hpp"

namespace capita {

// ---------------------------------------------------------------- goals

std::string to_string(const GoalCondition& g) {
    switch (g.kind) {
        case GoalKind::In: return "In(" + g.cls + ", " + g.receptacle + ")";
        case GoalKind::On: return "On(" + g.cls + ", " + g.receptacle + ")";
        case GoalKind::Prop: return "Prop(" + g.cls + ", " + g.property + ", " + g.value + ")";
        case GoalKind::CountIn: return "CountIn(" + g.cls + ", " + g.receptacle + ", " + std::to_string(g.count) + ")";
        case GoalKind::ExaminedUnderLamp: return "ExaminedUnderLamp(" + g.cls + ")";
    }
    return {};
}

namespace {
const char* goal_kind_name(GoalKind k) {
    switch (k) {
        case GoalKind::In: return "in";
        case GoalKind::On: return "on";
        case GoalKind::Prop: return "prop";
        case GoalKind::CountIn: return "count-in";
        case GoalKind::ExaminedUnderLamp: return "examined-under-lamp";
    }
    return "in";
}
}  // namespace

Json to_json(const GoalCondition& g) {
    Json j;
    j["kind"] = goal_kind_name(g.kind);
    j["class"] = g.cls;
    if (g.kind == GoalKind::In || g.kind == GoalKind::On || g.kind == GoalKind::CountIn) j["receptacle"] = g.receptacle;
    if (g.kind == GoalKind::Prop) {
        j["property"] = g.property;
        j["value"] = g.value;
    }
    if (g.kind == GoalKind::CountIn) j["count"] = g.count;
    return j;
}

GoalCondition goal_from_json(const Json& j) {
    GoalCondition g;
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "in") g.kind = GoalKind::In;
    else if (kind == "on") g.kind = GoalKind::On;
    else if (kind == "prop") g.kind = GoalKind::Prop;
    else if (kind == "count-in") g.kind = GoalKind::CountIn;
    else if (kind == "examined-under-lamp") g.kind = GoalKind::ExaminedUnderLamp;
    else throw Error("parse", "unknown goal kind: " + kind);
    g.cls = j.at("class").get<std::string>();
    g.receptacle = j.value("receptacle", "");
    g.property = j.value("property", "");
    g.value = j.value("value", "");
    g.count = j.value("count", 0);
    return g;
}

namespace {
std::string prop_value(const ObjectInstance& o, const std::string& property) {
    if (property == "temperature") return to_string(o.state.temperature);
    bool v = false;
    if (property == "clean") v = o.state.clean;
    else if (property == "sliced") v = o.state.sliced;
    else if (property == "open") v = o.state.open;
    else if (property == "powered") v = o.state.powered;
    else if (property == "examined") v = o.state.examined;
    else return {};
    return v ? "true" : "false";
}

int count_in(const SceneGraph& scene, const std::string& cls, const std::string& rcls) {
    int n = 0;
    for (const auto& o : scene.objects()) {
        if (o.cls != cls) continue;
        if (o.location == kInventory || o.location == kFloor) continue;
        if (class_of_id(o.location) == rcls) ++n;
    }
    return n;
}
}  // namespace

bool goal_satisfied(const SceneGraph& scene, const GoalCondition& g) {
    switch (g.kind) {
        case GoalKind::In:
        case GoalKind::On: return count_in(scene, g.cls, g.receptacle) >= 1;
        case GoalKind::CountIn: return count_in(scene, g.cls, g.receptacle) >= g.count;
        case GoalKind::Prop:
            for (const auto& o : scene.objects())
                if (o.cls == g.cls && prop_value(o, g.property) == g.value) return true;
            return false;
        case GoalKind::ExaminedUnderLamp:
            for (const auto& o : scene.objects())
                if (o.cls == g.cls && o.state.examined) return true;
            return false;
    }
    return false;
}

GoalCheck check_goals(const SceneGraph& scene, const std::vector<GoalCondition>& goals) {
    GoalCheck r;
    for (std::size_t i = 0; i < goals.size(); ++i)
        if (goal_satisfied(scene, goals[i])) r.satisfied.push_back(i);
    r.success = !goals.empty() && r.satisfied.size() == goals.size();
    r.ssr = goals.empty() ? 0.0 : static_cast<double>(r.satisfied.size()) / static_cast<double>(goals.size());
    return r;
}

// ---------------------------------------------------------------- categories

std::string to_string(Category c) {
    switch (c) {
        case Category::PickPlace: return "pick&place";
        case Category::PickTwo: return "pick-two";
        case Category::StackPlace: return "stack&place";
        case Category::Clean: return "clean";
        case Category::Heat: return "heat";
        case Category::Cool: return "cool";
        case Category::Examine: return "examine";
        case Category::Composite: return "composite";
    }
    return {};
}

Category parse_category(std::string_view s) {
    for (int i = 0; i <= kBaseCategories; ++i)
        if (to_string(static_cast<Category>(i)) == s) return static_cast<Category>(i);
    throw Error("config", "unknown task category: " + std::string(s));
}

const std::vector<Category>& base_categories() {
    static const std::vector<Category> cs = {Category::PickPlace, Category::PickTwo, Category::StackPlace,
                                             Category::Clean,     Category::Heat,    Category::Cool,
                                             Category::Examine};
    return cs;
}

// ---------------------------------------------------------------- instantiation

std::vector<std::string> ordered_instances(const SceneGraph& scene, const std::string& cls,
                                           const std::vector<std::string>& exclude, bool include_moved) {
    std::vector<std::string> out;
    for (const auto& r : scene.receptacles())
        for (const auto& o : scene.objects()) {
            if (o.cls != cls || (o.state.moved && !include_moved)) continue;
            if (std::find(exclude.begin(), exclude.end(), o.id) != exclude.end()) continue;
            if (o.id != r && scene.top_level(o.id) == r) out.push_back(o.id);
        }
    return out;
}

void apply_profile_budget(TaskSpec& task) {
    if (task.profile == ActionProfile::Atomic) {
        task.step_budget = 50;
        task.invalid_budget.reset();
    } else {
        task.step_budget = 30;
        task.invalid_budget = 10;
    }
}

namespace {

const std::vector<std::string>& destination_classes() {
    static const std::vector<std::string> d = {"CounterTop", "DiningTable", "SideTable", "Desk",    "Shelf",
                                               "Dresser",    "Cabinet",     "Drawer",    "Bed",     "Sofa",
                                               "Armchair"};
    return d;
}

std::vector<std::string> present_classes(const SceneGraph& scene, bool (*pred)(const ClassInfo&)) {
    std::vector<std::string> out;
    for (const auto& c : class_table())
        if (pred(c) && scene.count_class(c.name) > 0) out.push_back(c.name);
    return out;
}

std::string pick_one(const std::vector<std::string>& v, Rng& rng) { return v[uniform_index(rng, v.size())]; }

[[noreturn]] void missing(const std::string& what) { throw Error("instantiation", "missing class: " + what); }

std::string task_id(const std::string& prefix, const Json& body) {
    return prefix + hex64(fnv1a(body.dump())).substr(0, 12);
}

}  // namespace

TaskSpec instantiate_task(Category category, const SceneGraph& scene, Rng& rng, ActionProfile profile,
                          const TaskOverrides& ov) {
    if (category == Category::Composite) throw Error("instantiation", "composite tasks come from compose_tasks");
    TaskComponent comp;
    comp.category = category;

    auto require_tool = [&](const std::string& cls) {
        if (scene.count_class(cls) == 0) missing(cls);
        return cls;
    };
    switch (category) {
        case Category::Clean: comp.tool = require_tool(scene.tools().clean); break;
        case Category::Heat: comp.tool = require_tool(scene.tools().heat); break;
        case Category::Cool: comp.tool = require_tool(scene.tools().cool); break;
        case Category::Examine: comp.tool = require_tool("DeskLamp"); break;
        default: break;
    }

    auto eligible = [&](const ClassInfo& c) -> bool {
        if (!c.pickupable) return false;
        switch (category) {
            case Category::StackPlace: return c.stackable;
            case Category::Clean: return c.cleanable;
            case Category::Heat: return c.heatable;
            case Category::Cool: return c.coolable;
            case Category::Examine: return c.examinable;
            default: return true;
        }
    };
    const std::size_t need = category == Category::PickTwo ? 2 : 1;
    auto available = [&](const std::string& cls) { return ordered_instances(scene, cls, ov.exclude_instances).size() >= need; };

    if (!ov.object.empty()) {
        const ClassInfo* info = find_class(ov.object);
        if (!info || !eligible(*info)) throw Error("instantiation", ov.object + " cannot serve as " + to_string(category) + " object");
        if (scene.count_class(ov.object) == 0) missing(ov.object);
        if (!available(ov.object)) {
            if (need == 2) throw Error("instantiation", to_string(category) + " needs two instances of " + ov.object);
            missing(ov.object);
        }
        comp.object = ov.object;
    } else {
        std::vector<std::string> objs;
        for (const auto& c : class_table())
            if (eligible(c) && available(c.name)) objs.push_back(c.name);
        if (objs.empty()) missing(to_string(category) + " object");
        comp.object = pick_one(objs, rng);
    }

    if (category == Category::StackPlace) {
        std::vector<std::string> conts;
        for (const auto& c : present_classes(scene, [](const ClassInfo& c) { return c.container; }))
            if (c != comp.object && !ordered_instances(scene, c, ov.exclude_instances).empty()) conts.push_back(c);
        if (conts.empty()) missing("container");
        comp.container = pick_one(conts, rng);
    }

    if (category != Category::Examine) {
        const std::string carried = category == Category::StackPlace ? comp.container : comp.object;
        auto dest_ok = [&](const std::string& r) {
            return scene.count_class(r) > 0 && count_in(scene, carried, r) == 0;
        };
        if (!ov.receptacle.empty()) {
            if (scene.count_class(ov.receptacle) == 0) missing(ov.receptacle);
            if (!dest_ok(ov.receptacle))
                throw Error("instantiation", ov.receptacle + " already holds " + carried);
            comp.receptacle = ov.receptacle;
        } else {
            std::vector<std::string> dests;
            for (const auto& r : destination_classes())
                if (dest_ok(r)) dests.push_back(r);
            if (dests.empty()) missing("destination receptacle");
            comp.receptacle = pick_one(dests, rng);
        }
    }

    auto inst = ordered_instances(scene, comp.object, ov.exclude_instances);
    comp.instances.assign(inst.begin(), inst.begin() + static_cast<std::ptrdiff_t>(need));
    if (!comp.container.empty()) comp.instances.push_back(ordered_instances(scene, comp.container, ov.exclude_instances).front());

    const std::string o = display_name(comp.object);
    const std::string r = display_name(comp.receptacle);
    switch (category) {
        case Category::PickPlace:
            comp.instruction = "put some " + o + " in " + r;
            comp.goals = {GoalCondition::in(comp.object, comp.receptacle)};
            break;
        case Category::PickTwo:
            comp.instruction = "put two " + o + " in " + r;
            comp.goals = {GoalCondition::count_in(comp.object, comp.receptacle, 2)};
            break;
        case Category::StackPlace:
            comp.instruction = "put some " + o + " in a " + display_name(comp.container) + " and put it in " + r;
            comp.goals = {GoalCondition::in(comp.object, comp.container), GoalCondition::in(comp.container, comp.receptacle)};
            break;
        case Category::Clean:
            comp.instruction = "clean some " + o + " and put it in " + r;
            comp.goals = {GoalCondition::prop(comp.object, "clean", "true"), GoalCondition::in(comp.object, comp.receptacle)};
            break;
        case Category::Heat:
            comp.instruction = "heat some " + o + " and put it in " + r;
            comp.goals = {GoalCondition::prop(comp.object, "temperature", "hot"), GoalCondition::in(comp.object, comp.receptacle)};
            break;
        case Category::Cool:
            comp.instruction = "cool some " + o + " and put it in " + r;
            comp.goals = {GoalCondition::prop(comp.object, "temperature", "cold"), GoalCondition::in(comp.object, comp.receptacle)};
            break;
        case Category::Examine:
            comp.instruction = "look at " + o + " under the desklamp";
            comp.goals = {GoalCondition::examined(comp.object)};
            break;
        default: break;
    }

    TaskSpec task;
    task.category = category;
    task.instruction = comp.instruction;
    task.goals = comp.goals;
    task.scene_seed = scene.seed();
    task.scene_config = scene.config();
    task.profile = profile;
    apply_profile_budget(task);
    task.components = {comp};
    Json body = to_json(task);
    body.erase("id");
    task.id = task_id("t-", body);
    return task;
}

TaskSpec compose_tasks(const TaskSpec& a, const TaskSpec& b) {
    if (a.scene_seed != b.scene_seed || !(a.scene_config == b.scene_config))
        throw Error("composition", "tasks do not share a scene");
    if (a.profile != b.profile) throw Error("composition", "tasks use different action profiles");
    std::set<std::string> used;
    for (const auto& c : a.components) used.insert(c.instances.begin(), c.instances.end());
    for (const auto& c : b.components)
        for (const auto& id : c.instances)
            if (used.count(id)) throw Error("composition", "conflicting goals on instance " + id);
    TaskSpec t;
    t.category = Category::Composite;
    t.instruction = a.instruction + " and " + b.instruction;
    t.goals = a.goals;
    t.goals.insert(t.goals.end(), b.goals.begin(), b.goals.end());
    t.scene_seed = a.scene_seed;
    t.scene_config = a.scene_config;
    t.profile = a.profile;
    t.step_budget = a.step_budget + b.step_budget;
    if (a.invalid_budget || b.invalid_budget) t.invalid_budget = a.invalid_budget.value_or(0) + b.invalid_budget.value_or(0);
    t.components = a.components;
    t.components.insert(t.components.end(), b.components.begin(), b.components.end());
    Json body = to_json(t);
    body.erase("id");
    t.id = task_id("c-", body);
    return t;
}

SceneGraph scene_for(const TaskSpec& task) { return build_scene(task.scene_seed, task.scene_config); }

// ---------------------------------------------------------------- serialization

Json to_json(const TaskSpec& task) {
    Json j;
    j["schema"] = "capita/task@1";
    j["id"] = task.id;
    j["category"] = to_string(task.category);
    j["instruction"] = task.instruction;
    Json goals = Json::array();
    for (const auto& g : task.goals) goals.push_back(to_json(g));
    j["goals"] = goals;
    j["scene_seed"] = task.scene_seed;
    j["scene_config"] = {{"receptacles", task.scene_config.receptacles}, {"objects", task.scene_config.objects}};
    j["profile"] = to_string(task.profile);
    j["step_budget"] = task.step_budget;
    j["invalid_budget"] = task.invalid_budget ? Json(*task.invalid_budget) : Json(nullptr);
    Json comps = Json::array();
    for (const auto& c : task.components) {
        Json cj;
        cj["category"] = to_string(c.category);
        cj["object"] = c.object;
        cj["container"] = c.container;
        cj["tool"] = c.tool;
        cj["receptacle"] = c.receptacle;
        cj["instances"] = c.instances;
        cj["instruction"] = c.instruction;
        Json cg = Json::array();
        for (const auto& g : c.goals) cg.push_back(to_json(g));
        cj["goals"] = cg;
        comps.push_back(cj);
    }
    j["components"] = comps;
    return j;
}

TaskSpec task_from_json(const Json& j) {
    if (j.value("schema", "") != "capita/task@1") throw Error("schema", "not a capita/task@1 record");
    TaskSpec t;
    t.id = j.at("id").get<std::string>();
    t.category = parse_category(j.at("category").get<std::string>());
    t.instruction = j.at("instruction").get<std::string>();
    for (const auto& g : j.at("goals")) t.goals.push_back(goal_from_json(g));
    t.scene_seed = j.at("scene_seed").get<std::uint64_t>();
    t.scene_config.receptacles = j.at("scene_config").at("receptacles").get<int>();
    t.scene_config.objects = j.at("scene_config").at("objects").get<int>();
    t.profile = parse_profile(j.at("profile").get<std::string>());
    t.step_budget = j.at("step_budget").get<int>();
    if (!j.at("invalid_budget").is_null()) t.invalid_budget = j.at("invalid_budget").get<int>();
    for (const auto& cj : j.at("components")) {
        TaskComponent c;
        c.category = parse_category(cj.at("category").get<std::string>());
        c.object = cj.at("object").get<std::string>();
        c.container = cj.at("container").get<std::string>();
        c.tool = cj.at("tool").get<std::string>();
        c.receptacle = cj.at("receptacle").get<std::string>();
        c.instances = cj.at("instances").get<std::vector<std::string>>();
        c.instruction = cj.at("instruction").get<std::string>();
        for (const auto& g : cj.at("goals")) c.goals.push_back(goal_from_json(g));
        t.components.push_back(std::move(c));
    }
    if (t.goals.empty()) throw Error("schema", "task without goals");
    return t;
}

}  // namespace capita
