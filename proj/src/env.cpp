#include "capita/env.hpp"

#include <algorithm>
#include <set>

namespace capita {

std::string to_string(Temperature t) {
    switch (t) {
        case Temperature::Hot: return "hot";
        case Temperature::Cold: return "cold";
        default: return "room";
    }
}

std::string to_string(ActionProfile p) { return p == ActionProfile::Atomic ? "atomic" : "composite"; }

ActionProfile parse_profile(std::string_view s) {
    if (s == "atomic") return ActionProfile::Atomic;
    if (s == "composite") return ActionProfile::Composite;
    throw Error("config", "unknown action profile: " + std::string(s));
}

// ---------------------------------------------------------------- scene

const ObjectInstance* SceneGraph::find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &objects_[it->second];
}

ObjectInstance* SceneGraph::find(std::string_view id) {
    auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &objects_[it->second];
}

bool SceneGraph::is_receptacle_id(std::string_view id) const {
    return std::find(receptacles_.begin(), receptacles_.end(), id) != receptacles_.end();
}

std::string SceneGraph::top_level(std::string_view id) const {
    std::string cur(id);
    for (int guard = 0; guard < 8; ++guard) {
        const ObjectInstance* o = find(cur);
        if (!o || o->location == kFloor) return cur;
        if (o->location == kInventory) return std::string(kInventory);
        cur = o->location;
    }
    return cur;
}

std::vector<const ObjectInstance*> SceneGraph::contents(std::string_view id) const {
    std::vector<const ObjectInstance*> out;
    for (const auto& o : objects_)
        if (o.location == id) out.push_back(&o);
    return out;
}

std::vector<const ObjectInstance*> SceneGraph::instances_of(std::string_view cls) const {
    std::vector<const ObjectInstance*> out;
    for (const auto& o : objects_)
        if (o.cls == cls) out.push_back(&o);
    return out;
}

std::size_t SceneGraph::count_class(std::string_view cls) const {
    return static_cast<std::size_t>(
        std::count_if(objects_.begin(), objects_.end(), [&](const ObjectInstance& o) { return o.cls == cls; }));
}

ObjectInstance& SceneGraph::add(const std::string& cls, const std::string& location) {
    int next = 1;
    for (const auto& o : objects_) {
        if (o.cls != cls) continue;
        int idx = std::stoi(o.id.substr(o.id.rfind(' ') + 1));
        next = std::max(next, idx + 1);
    }
    ObjectInstance inst;
    inst.cls = cls;
    inst.id = cls + " " + std::to_string(next);
    inst.location = location;
    objects_.push_back(std::move(inst));
    index_[objects_.back().id] = objects_.size() - 1;
    const ClassInfo& info = class_info(cls);
    if (location == kFloor && info.receptacle && !info.pickupable) receptacles_.push_back(objects_.back().id);
    return objects_.back();
}

void SceneGraph::remove(std::string_view id) {
    auto it = std::find_if(objects_.begin(), objects_.end(), [&](const ObjectInstance& o) { return o.id == id; });
    if (it == objects_.end()) return;
    objects_.erase(it);
    reindex();
}

void SceneGraph::reindex() {
    index_.clear();
    for (std::size_t i = 0; i < objects_.size(); ++i) index_[objects_[i].id] = i;
}

void SceneGraph::check_invariants() const {
    int in_inventory = 0;
    for (const auto& o : objects_) {
        const ClassInfo& info = o.info();
        if (o.state.open && !info.openable) throw Error("invariant", o.id + " open but not openable");
        if (o.state.powered && !info.toggleable) throw Error("invariant", o.id + " powered but not toggleable");
        if (o.state.sliced && !info.sliceable) throw Error("invariant", o.id + " sliced but not sliceable");
        if (info.receptacle && !info.pickupable && o.location != kFloor)
            throw Error("invariant", o.id + " receptacle off the floor");
        if (o.location == kInventory) {
            ++in_inventory;
        } else if (o.location != kFloor) {
            const ObjectInstance* parent = find(o.location);
            if (!parent) throw Error("invariant", o.id + " located in missing " + o.location);
            if (!parent->info().receptacle && parent->cls != "DeskLamp")
                throw Error("invariant", o.id + " located in non-receptacle " + o.location);
            int depth = 1;
            for (const ObjectInstance* p = parent; p && p->location != kFloor && p->location != kInventory;
                 p = find(p->location))
                ++depth;
            if (depth > 2) throw Error("invariant", o.id + " nested deeper than 2");
        }
    }
    if (in_inventory > 1) throw Error("invariant", "more than one object in inventory");
}

namespace {
Json state_json(const ObjectState& s) {
    Json j;
    j["open"] = s.open;
    j["powered"] = s.powered;
    j["temperature"] = to_string(s.temperature);
    j["clean"] = s.clean;
    j["sliced"] = s.sliced;
    j["examined"] = s.examined;
    j["moved"] = s.moved;
    return j;
}
}  // namespace

Json SceneGraph::to_json() const {
    Json j;
    j["schema"] = "capita/scene@1";
    j["seed"] = seed_;
    j["config"] = {{"receptacles", config_.receptacles}, {"objects", config_.objects}};
    j["receptacles"] = receptacles_;
    j["tools"] = {{"heat", tools_.heat}, {"cool", tools_.cool}, {"clean", tools_.clean}};
    Json objs = Json::array();
    for (const auto& o : objects_) {
        objs.push_back({{"id", o.id}, {"class", o.cls}, {"location", o.location}, {"state", state_json(o.state)}});
    }
    j["objects"] = std::move(objs);
    return j;
}

SceneGraph build_scene(std::uint64_t seed, const SceneConfig& config) {
    if (config.receptacles < 3)
        throw Error("config", "scene needs at least 3 receptacles, got " + std::to_string(config.receptacles));
    if (config.objects < 5)
        throw Error("config", "scene needs at least 5 objects, got " + std::to_string(config.objects));

    Rng rng(derive_seed(seed, 0x5CE7E));
    SceneGraph scene(seed, config);

    static const std::vector<std::string> mandatory = {"CounterTop", "Fridge",     "Microwave", "SinkBasin",
                                                       "Desk",       "DiningTable", "SideTable", "Cabinet"};
    static const std::vector<std::string> pool = {"Cabinet", "Drawer", "CounterTop", "Shelf",    "Dresser",
                                                  "Bed",     "Sofa",   "Armchair",   "GarbageCan", "SideTable",
                                                  "Drawer",  "Cabinet"};
    std::vector<std::string> classes;
    for (std::size_t i = 0; i < mandatory.size() && static_cast<int>(classes.size()) < config.receptacles; ++i)
        classes.push_back(mandatory[i]);
    while (static_cast<int>(classes.size()) < config.receptacles) classes.push_back(pool[uniform_index(rng, pool.size())]);
    for (const auto& c : classes) scene.add(c, std::string(kFloor));

    std::string desk;
    for (const auto& r : scene.receptacles())
        if (class_of_id(r) == "Desk") {
            desk = r;
            break;
        }
    if (!desk.empty()) scene.add("DeskLamp", desk);

    std::vector<std::string> pickups;
    for (const auto& c : class_table())
        if (c.pickupable) pickups.push_back(c.name);

    const std::set<std::string> tools = {"Microwave", "GarbageCan"};
    for (int i = 0; i < config.objects; ++i) {
        const std::string& cls = pickups[uniform_index(rng, pickups.size())];
        const ClassInfo& info = class_info(cls);
        std::vector<std::string> spots;
        for (const auto& r : scene.receptacles()) {
            std::string rc = class_of_id(r);
            if (std::find(info.placements.begin(), info.placements.end(), rc) != info.placements.end())
                spots.push_back(r);
        }
        if (spots.empty())
            for (const auto& r : scene.receptacles())
                if (!tools.count(class_of_id(r))) spots.push_back(r);
        ObjectInstance& o = scene.add(cls, spots[uniform_index(rng, spots.size())]);
        o.state.clean = !info.cleanable;
    }
    scene.check_invariants();
    return scene;
}

// ---------------------------------------------------------------- actions

std::string render(const Action& a) {
    switch (a.type) {
        case ActionType::GoTo: return "go to " + a.target;
        case ActionType::Open: return "open " + a.target;
        case ActionType::Close: return "close " + a.target;
        case ActionType::TurnOn: return "turn on " + a.target;
        case ActionType::Pick: return "pick up " + a.target + " from " + a.other;
        case ActionType::Put: return "put " + a.target + " to " + a.other;
        case ActionType::Slice: return "slice " + a.target;
        case ActionType::Heat: return "heat " + a.target + " with " + a.other;
        case ActionType::Cool: return "cool " + a.target + " with " + a.other;
        case ActionType::Clean: return "clean " + a.target + " with " + a.other;
        case ActionType::Invalid: return a.target;
    }
    return a.target;
}

namespace {
bool split_pair(std::string_view rest, std::string_view sep, std::string& a, std::string& b) {
    auto pos = rest.find(sep);
    if (pos == std::string_view::npos) return false;
    a = trim(rest.substr(0, pos));
    b = trim(rest.substr(pos + sep.size()));
    return !a.empty() && !b.empty();
}
}  // namespace

Action parse_action(std::string_view text) {
    std::string t = trim(text);
    std::string_view s(t);
    auto single = [&](std::string_view prefix, ActionType type) -> std::optional<Action> {
        if (!starts_with(s, prefix)) return std::nullopt;
        std::string arg = trim(s.substr(prefix.size()));
        if (arg.empty()) return std::nullopt;
        return Action{type, arg, {}};
    };
    auto pair = [&](std::string_view prefix, std::string_view sep, ActionType type) -> std::optional<Action> {
        if (!starts_with(s, prefix)) return std::nullopt;
        std::string a, b;
        if (!split_pair(s.substr(prefix.size()), sep, a, b)) return std::nullopt;
        return Action{type, a, b};
    };
    if (auto a = single("go to ", ActionType::GoTo)) return *a;
    if (auto a = single("open ", ActionType::Open)) return *a;
    if (auto a = single("close ", ActionType::Close)) return *a;
    if (auto a = single("turn on ", ActionType::TurnOn)) return *a;
    if (auto a = pair("pick up ", " from ", ActionType::Pick)) return *a;
    if (auto a = pair("put ", " to ", ActionType::Put)) return *a;
    if (auto a = single("slice ", ActionType::Slice)) return *a;
    if (auto a = pair("heat ", " with ", ActionType::Heat)) return *a;
    if (auto a = pair("cool ", " with ", ActionType::Cool)) return *a;
    if (auto a = pair("clean ", " with ", ActionType::Clean)) return *a;
    return Action::invalid(t);
}

std::string render_action_list(const std::vector<Action>& actions) {
    std::string out = "[";
    for (std::size_t i = 0; i < actions.size(); ++i) {
        if (i) out += ", ";
        out += render(actions[i]);
    }
    return out + "]";
}

std::vector<Action> parse_action_list(std::string_view text) {
    std::string t = trim(text);
    if (t.size() < 2 || t.front() != '[' || t.back() != ']') throw Error("parse", "action list must be bracketed: " + t);
    std::vector<Action> out;
    std::string body = trim(std::string_view(t).substr(1, t.size() - 2));
    if (body.empty()) return out;
    for (const auto& part : split(body, ',')) out.push_back(parse_action(part));
    return out;
}

std::string to_string(Reason r) {
    switch (r) {
        case Reason::Ok: return "ok";
        case Reason::NotAtLocation: return "not-at-location";
        case Reason::TargetNotVisible: return "target-not-visible";
        case Reason::ReceptacleClosed: return "receptacle-closed";
        case Reason::InventoryFull: return "inventory-full";
        case Reason::InventoryEmpty: return "inventory-empty";
        case Reason::WrongTool: return "wrong-tool";
        case Reason::PreconditionViolated: return "precondition-violated";
        case Reason::UnknownAction: return "unknown-action";
    }
    return "ok";
}

Reason parse_reason(std::string_view s) {
    if (s == "ok") return Reason::Ok;
    for (Reason r : failure_reasons())
        if (to_string(r) == s) return r;
    throw Error("parse", "unknown reason code: " + std::string(s));
}

const std::vector<Reason>& failure_reasons() {
    static const std::vector<Reason> rs = {Reason::NotAtLocation,   Reason::TargetNotVisible, Reason::ReceptacleClosed,
                                           Reason::InventoryFull,   Reason::InventoryEmpty,   Reason::WrongTool,
                                           Reason::PreconditionViolated, Reason::UnknownAction};
    return rs;
}

// ---------------------------------------------------------------- observation

namespace {

bool interior_visible(const ObjectInstance& o) { return !o.info().openable || o.state.open; }

void collect_contents(const SceneGraph& scene, const std::string& id, std::vector<const ObjectInstance*>& out) {
    for (const ObjectInstance* c : scene.contents(id)) {
        out.push_back(c);
        if (interior_visible(*c)) collect_contents(scene, c->id, out);
    }
}

std::vector<const ObjectInstance*> visible_objects(const SceneGraph& scene, const AgentState& agent) {
    std::vector<const ObjectInstance*> out;
    if (const ObjectInstance* here = scene.find(agent.location)) {
        out.push_back(here);
        if (interior_visible(*here)) collect_contents(scene, here->id, out);
    }
    if (agent.inventory) {
        if (const ObjectInstance* held = scene.find(*agent.inventory)) {
            out.push_back(held);
            if (interior_visible(*held)) collect_contents(scene, held->id, out);
        }
    }
    return out;
}

bool is_visible(const SceneGraph& scene, const AgentState& agent, std::string_view id) {
    for (const ObjectInstance* o : visible_objects(scene, agent))
        if (o->id == id) return true;
    return false;
}

std::vector<std::pair<std::string, std::string>> surfaced(const ObjectInstance& o) {
    std::vector<std::pair<std::string, std::string>> p;
    const ClassInfo& info = o.info();
    if (info.openable) p.emplace_back("open", o.state.open ? "true" : "false");
    if (info.toggleable) p.emplace_back("powered", o.state.powered ? "true" : "false");
    if (info.pickupable) {
        p.emplace_back("temperature", to_string(o.state.temperature));
        if (info.cleanable) p.emplace_back("clean", o.state.clean ? "true" : "false");
        if (info.sliceable) p.emplace_back("sliced", o.state.sliced ? "true" : "false");
    }
    return p;
}

}  // namespace

bool Observation::sees(std::string_view id) const {
    return std::any_of(visible.begin(), visible.end(), [&](const VisibleObject& v) { return v.id == id; });
}

Observation observe(const SceneGraph& scene, const AgentState& agent) {
    Observation obs;
    obs.location = agent.location;
    obs.inventory = agent.inventory;
    for (const ObjectInstance* o : visible_objects(scene, agent)) obs.visible.push_back({o->id, surfaced(*o)});
    return obs;
}

// ---------------------------------------------------------------- transition

namespace {

ActionFeedback fail(Reason r) { return {false, r}; }
constexpr ActionFeedback kOk{true, Reason::Ok};

// Agent is "at" a receptacle when standing there; objects are reachable when visible.
Reason reach(const SceneGraph& scene, const AgentState& agent, const ObjectInstance& o) {
    if (is_visible(scene, agent, o.id)) return Reason::Ok;
    if (scene.is_receptacle_id(o.id)) return Reason::NotAtLocation;
    return Reason::TargetNotVisible;
}

void apply_tool_effects(SceneGraph& scene, ObjectInstance& placed, const ObjectInstance& into) {
    if (into.cls == scene.tools().cool) placed.state.temperature = Temperature::Cold;
    if (into.cls == scene.tools().heat && into.state.powered) placed.state.temperature = Temperature::Hot;
    if (into.cls == scene.tools().clean && into.state.powered) placed.state.clean = true;
}

void mark_moved(SceneGraph& scene, const std::string& id) {
    if (ObjectInstance* o = scene.find(id)) o->state.moved = true;
    for (const ObjectInstance* c : scene.contents(id)) scene.find(c->id)->state.moved = true;
}

ActionFeedback do_step(SceneGraph& scene, AgentState& agent, const Action& a, ActionProfile profile) {
    const bool composite = profile == ActionProfile::Composite;
    switch (a.type) {
        case ActionType::Invalid: return fail(Reason::UnknownAction);

        case ActionType::GoTo: {
            const ObjectInstance* t = scene.find(a.target);
            if (!t) return fail(Reason::UnknownAction);
            if (scene.is_receptacle_id(a.target)) {
                agent.location = a.target;
                return kOk;
            }
            if (!composite) return fail(Reason::PreconditionViolated);
            std::string top = scene.top_level(a.target);
            if (top == kInventory) return kOk;
            agent.location = top;
            return kOk;
        }

        case ActionType::Open:
        case ActionType::Close: {
            ObjectInstance* t = scene.find(a.target);
            if (!t) return fail(Reason::UnknownAction);
            if (!t->info().openable) return fail(Reason::PreconditionViolated);
            if (Reason r = reach(scene, agent, *t); r != Reason::Ok) return fail(r);
            bool want = a.type == ActionType::Open;
            if (t->state.open == want) return fail(Reason::PreconditionViolated);
            t->state.open = want;
            return kOk;
        }

        case ActionType::TurnOn: {
            ObjectInstance* t = scene.find(a.target);
            if (!t) return fail(Reason::UnknownAction);
            if (!t->info().toggleable) return fail(Reason::PreconditionViolated);
            if (Reason r = reach(scene, agent, *t); r != Reason::Ok) return fail(r);
            if (t->cls == scene.tools().heat && t->state.open) return fail(Reason::PreconditionViolated);
            t->state.powered = true;
            if (t->cls == "DeskLamp" && agent.inventory) scene.find(*agent.inventory)->state.examined = true;
            if (composite) {
                const bool heats = t->cls == scene.tools().heat;
                const bool cleans = t->cls == scene.tools().clean;
                for (const ObjectInstance* c : scene.contents(t->id)) {
                    ObjectInstance* m = scene.find(c->id);
                    if (heats) m->state.temperature = Temperature::Hot;
                    if (cleans) m->state.clean = true;
                }
            }
            return kOk;
        }

        case ActionType::Pick: {
            ObjectInstance* o = scene.find(a.target);
            const ObjectInstance* from = scene.find(a.other);
            if (!o || !from) return fail(Reason::UnknownAction);
            if (agent.inventory) return fail(Reason::InventoryFull);
            if (scene.top_level(from->id) != agent.location && from->id != agent.location)
                return fail(Reason::NotAtLocation);
            if (from->info().openable && !from->state.open) return fail(Reason::ReceptacleClosed);
            if (o->location != from->id || !is_visible(scene, agent, o->id)) return fail(Reason::TargetNotVisible);
            if (!o->info().pickupable) return fail(Reason::PreconditionViolated);
            o->location = std::string(kInventory);
            agent.inventory = o->id;
            mark_moved(scene, o->id);
            return kOk;
        }

        case ActionType::Put: {
            ObjectInstance* o = scene.find(a.target);
            const ObjectInstance* to = scene.find(a.other);
            if (!o || !to) return fail(Reason::UnknownAction);
            if (!agent.inventory) return fail(Reason::InventoryEmpty);
            if (*agent.inventory != o->id) return fail(Reason::PreconditionViolated);
            if (!to->info().receptacle || to->id == o->id) return fail(Reason::PreconditionViolated);
            if (scene.is_receptacle_id(to->id)) {
                if (to->id != agent.location) return fail(Reason::NotAtLocation);
            } else {
                if (scene.top_level(to->id) == kInventory) return fail(Reason::PreconditionViolated);
                if (!is_visible(scene, agent, to->id)) return fail(Reason::TargetNotVisible);
                if (o->info().container) return fail(Reason::PreconditionViolated);
                if (to->location != kFloor && !scene.is_receptacle_id(to->location))
                    return fail(Reason::PreconditionViolated);
            }
            if (to->info().openable && !to->state.open) return fail(Reason::ReceptacleClosed);
            o->location = to->id;
            agent.inventory.reset();
            mark_moved(scene, o->id);
            if (composite) apply_tool_effects(scene, *o, *to);
            return kOk;
        }

        case ActionType::Slice: {
            if (!composite) return fail(Reason::UnknownAction);
            const ObjectInstance* o = scene.find(a.target);
            if (!o) return fail(Reason::UnknownAction);
            if (!o->info().sliceable || o->state.sliced) return fail(Reason::PreconditionViolated);
            if (!agent.inventory || class_of_id(*agent.inventory) != "Knife") return fail(Reason::PreconditionViolated);
            if (o->location == kInventory) return fail(Reason::PreconditionViolated);
            if (!is_visible(scene, agent, o->id)) return fail(Reason::TargetNotVisible);
            ObjectInstance base = *o;
            scene.remove(base.id);
            for (int k = 0; k < 2; ++k) {
                ObjectInstance& piece = scene.add(base.cls, base.location);
                piece.state = base.state;
                piece.state.sliced = true;
                piece.state.moved = true;
            }
            return kOk;
        }

        case ActionType::Heat:
        case ActionType::Cool:
        case ActionType::Clean: {
            if (composite) return fail(Reason::UnknownAction);
            ObjectInstance* o = scene.find(a.target);
            const ObjectInstance* tool = scene.find(a.other);
            if (!o || !tool) return fail(Reason::UnknownAction);
            if (!agent.inventory) return fail(Reason::InventoryEmpty);
            if (*agent.inventory != o->id) return fail(Reason::PreconditionViolated);
            const ToolRegistry& reg = scene.tools();
            const std::string& want = a.type == ActionType::Heat ? reg.heat : a.type == ActionType::Cool ? reg.cool : reg.clean;
            if (tool->cls != want) return fail(Reason::WrongTool);
            if (agent.location != tool->id) return fail(Reason::NotAtLocation);
            const ClassInfo& info = o->info();
            bool able = a.type == ActionType::Heat ? info.heatable : a.type == ActionType::Cool ? info.coolable : info.cleanable;
            if (!able) return fail(Reason::PreconditionViolated);
            if (a.type == ActionType::Heat) o->state.temperature = Temperature::Hot;
            if (a.type == ActionType::Cool) o->state.temperature = Temperature::Cold;
            if (a.type == ActionType::Clean) o->state.clean = true;
            return kOk;
        }
    }
    return fail(Reason::UnknownAction);
}

}  // namespace

ActionFeedback step(SceneGraph& scene, AgentState& agent, const Action& action, ActionProfile profile) {
    return do_step(scene, agent, action, profile);
}

}  // namespace capita
