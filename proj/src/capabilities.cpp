#include "capita/capabilities.hpp"

#include <algorithm>
#include <set>

namespace capita {

std::string to_string(Relation r) {
    switch (r) {
        case Relation::Target: return "target";
        case Relation::In: return "in";
        case Relation::On: return "on";
        case Relation::Near: return "near";
    }
    return {};
}

std::string render(const Direction& d) { return to_string(d.relation) + " " + d.object; }

std::optional<Direction> parse_direction(std::string_view text) {
    std::string t = trim(text);
    auto sp = t.find(' ');
    if (sp == std::string::npos) return std::nullopt;
    std::string rel = to_lower(t.substr(0, sp));
    std::string obj = trim(t.substr(sp + 1));
    if (obj.empty()) return std::nullopt;
    for (auto r : {Relation::Target, Relation::In, Relation::On, Relation::Near})
        if (to_string(r) == rel) return Direction{r, obj};
    return std::nullopt;
}

bool EgMemory::was_tried(const std::string& object) const {
    return std::any_of(tried.begin(), tried.end(), [&](const Direction& d) { return d.object == object; });
}

void EgMemory::observe_query(const std::string& query) {
    if (query != current_query) {
        current_query = query;
        tried.clear();
    }
}

std::string to_string(BackendKind k) {
    switch (k) {
        case BackendKind::Oracle: return "oracle";
        case BackendKind::NoisyOracle: return "noisy-oracle";
        case BackendKind::Learned: return "learned";
    }
    return {};
}

CapabilitySuite CapabilitySuite::noisy(double p_eg, double p_og, double p_es) {
    CapabilitySuite s;
    s.kind = BackendKind::NoisyOracle;
    s.p_eg = p_eg;
    s.p_og = p_og;
    s.p_es = p_es;
    s.validate();
    return s;
}

void CapabilitySuite::validate() const {
    for (double p : {p_eg, p_og, p_es})
        if (!(p >= 0.0 && p <= 1.0)) throw Error("config", "capability noise probability outside [0,1]");
    if (kind == BackendKind::Learned && !learned_eg) throw Error("config", "learned backend without a policy handle");
}

Json CapabilitySuite::to_json() const {
    return Json{{"kind", to_string(kind)}, {"p_eg", p_eg}, {"p_og", p_og}, {"p_es", p_es}};
}

bool AgentKnowledge::known_open(const std::string& id) const {
    auto it = open.find(id);
    return it != open.end() && it->second;
}

void AgentKnowledge::record(const Action& a, const ActionFeedback& fb, const AgentState& agent) {
    location = agent.location;
    inventory = agent.inventory;
    if (!fb.success) return;
    if (a.type == ActionType::Open) open[a.target] = true;
    if (a.type == ActionType::Close) open[a.target] = false;
}

std::vector<std::string> eg_candidates(const SceneGraph& scene, ActionProfile profile) {
    std::vector<std::string> c = scene.receptacles();
    if (profile == ActionProfile::Composite)
        for (const auto& o : scene.objects())
            if (!scene.is_receptacle_id(o.id)) c.push_back(o.id);
    return c;
}

// ---------------------------------------------------------------- EG

namespace {

Relation canonical_relation(const std::string& id, const SceneGraph& scene) {
    if (!scene.is_receptacle_id(id)) return Relation::Near;
    return class_info(class_of_id(id)).openable ? Relation::In : Relation::On;
}

std::vector<Direction> true_directions(const std::string& query, const std::vector<std::string>& candidates,
                                       const SceneGraph& scene, ActionProfile profile, const Lexicon& lex) {
    std::vector<Direction> out;
    auto is_candidate = [&](const std::string& id) {
        return std::find(candidates.begin(), candidates.end(), id) != candidates.end();
    };
    auto push = [&](Direction d) {
        if (!is_candidate(d.object)) return;
        for (const auto& e : out)
            if (e.object == d.object) return;
        out.push_back(std::move(d));
    };
    for (const auto& cls : lex.canonicalize(query)) {
        for (const auto& r : scene.receptacles())
            if (class_of_id(r) == cls) push({Relation::Target, r});
        auto inst = ordered_instances(scene, cls);
        auto moved = ordered_instances(scene, cls, {}, true);
        for (const auto& m : moved)
            if (std::find(inst.begin(), inst.end(), m) == inst.end()) inst.push_back(m);
        for (const auto& id : inst) {
            if (scene.is_receptacle_id(id)) continue;
            std::string top = scene.top_level(id);
            if (top == kInventory) continue;
            const ObjectInstance* t = scene.find(top);
            bool enclosed = t && t->info().openable && !t->state.open;
            if (profile == ActionProfile::Composite && !enclosed && is_candidate(id)) {
                push({Relation::Target, id});
            } else {
                push({canonical_relation(top, scene), top});
            }
        }
    }
    return out;
}

}  // namespace

EgResult eg(const std::string& query, const std::vector<std::string>& candidates, EgMemory& memory,
            const CapabilitySuite& backend, const SceneGraph& scene, ActionProfile profile, Rng& rng,
            const Lexicon& lex) {
    if (candidates.empty()) throw Error("capability", "EG called without candidates");
    memory.observe_query(query);
    std::vector<std::size_t> untried;
    for (std::size_t i = 0; i < candidates.size(); ++i)
        if (!memory.was_tried(candidates[i])) untried.push_back(i);
    EgResult res;
    if (untried.empty()) return res;

    if (backend.kind == BackendKind::NoisyOracle && bernoulli(rng, backend.p_eg)) {
        const std::string& c = candidates[untried[uniform_index(rng, untried.size())]];
        res.direction = Direction{canonical_relation(c, scene), c};
        res.injected = true;
    } else if (backend.kind == BackendKind::Learned && backend.learned_eg) {
        EgRequest req{query, &candidates, &memory};
        if (auto idx = backend.learned_eg(req); idx && *idx < candidates.size() && !memory.was_tried(candidates[*idx]))
            res.direction = Direction{canonical_relation(candidates[*idx], scene), candidates[*idx]};
    }
    if (!res.direction) {
        for (auto& d : true_directions(query, candidates, scene, profile, lex))
            if (!memory.was_tried(d.object)) {
                res.direction = d;
                break;
            }
    }
    if (!res.direction) {
        const std::string& c = candidates[untried.front()];
        res.direction = Direction{canonical_relation(c, scene), c};
    }
    memory.tried.push_back(*res.direction);
    return res;
}

// ---------------------------------------------------------------- OG

Box synthetic_box(std::uint64_t scene_seed, const std::string& id) {
    std::uint64_t h = splitmix64(fnv1a(id) ^ splitmix64(scene_seed));
    Box b;
    b.x1 = static_cast<int>(h % 400);
    b.y1 = static_cast<int>((h >> 16) % 400);
    b.x2 = std::min(500, b.x1 + 20 + static_cast<int>((h >> 32) % 80));
    b.y2 = std::min(500, b.y1 + 20 + static_cast<int>((h >> 48) % 80));
    return b;
}

std::string render(const Grounding& g) {
    if (!g.found) return "[]";
    Json j = Json::array();
    j.push_back({{"bbox_2d", {g.box.x1, g.box.y1, g.box.x2, g.box.y2}}, {"label", display_name(g.label)}});
    return j.dump();
}

Grounding og(const std::string& query, const Observation& obs, const CapabilitySuite& backend, const SceneGraph& scene,
             Rng& rng, const Lexicon& lex) {
    Grounding g;
    auto classes = lex.canonicalize(query);
    for (const auto& v : obs.visible) {
        std::string cls = class_of_id(v.id);
        if (std::find(classes.begin(), classes.end(), cls) == classes.end()) continue;
        g.found = true;
        g.label = cls;
        g.instance = v.id;
        g.box = synthetic_box(scene.seed(), v.id);
        break;
    }
    if (g.found && backend.kind == BackendKind::NoisyOracle && bernoulli(rng, backend.p_og)) {
        g = Grounding{};
        g.injected = true;
    }
    return g;
}

Observation grounding_view(const Observation& obs, const SceneGraph& scene) {
    Observation view = obs;
    view.visible.clear();
    for (const auto& v : obs.visible) {
        const ObjectInstance* o = scene.find(v.id);
        if (o && o->state.moved && obs.inventory != v.id && !ordered_instances(scene, o->cls).empty()) continue;
        view.visible.push_back(v);
    }
    return view;
}

// ---------------------------------------------------------------- SD

std::vector<Fact> sd(const std::string& target_class, const Observation& obs, const SceneGraph& scene) {
    std::vector<Fact> facts;
    const ObjectInstance* chosen = nullptr;
    for (const auto& v : obs.visible) {
        if (class_of_id(v.id) != target_class) continue;
        const ObjectInstance* o = scene.find(v.id);
        if (!o) continue;
        if (!chosen || (chosen->state.moved && !o->state.moved)) chosen = o;
    }
    if (!chosen) return facts;
    auto relation = [&](const ObjectInstance& o) {
        if (o.location == kFloor || o.location == kInventory) return;
        const ObjectInstance* parent = scene.find(o.location);
        if (!parent) return;
        bool inside = parent->info().openable || parent->info().container;
        facts.push_back({inside ? Fact::RelIn : Fact::RelOn, o.id, parent->id, {}});
    };
    relation(*chosen);
    if (const ObjectInstance* parent = scene.find(chosen->location); parent && !scene.is_receptacle_id(parent->id))
        relation(*parent);
    const ClassInfo& info = chosen->info();
    if (info.openable && chosen->state.open) facts.push_back({Fact::Property, chosen->id, "open", "true"});
    if (info.toggleable && chosen->state.powered) facts.push_back({Fact::Property, chosen->id, "powered", "true"});
    if (chosen->state.temperature != Temperature::Room)
        facts.push_back({Fact::Property, chosen->id, "temperature", to_string(chosen->state.temperature)});
    if (info.cleanable && chosen->state.clean) facts.push_back({Fact::Property, chosen->id, "clean", "true"});
    if (chosen->state.sliced) facts.push_back({Fact::Property, chosen->id, "sliced", "true"});
    if (scene.is_receptacle_id(chosen->id) || chosen->location == kInventory)
        facts.push_back({Fact::Property, chosen->id, "location", chosen->location == kInventory ? "inventory" : "here"});
    return facts;
}

std::string render_facts(const std::vector<Fact>& facts) {
    std::string out;
    auto noun = [](const std::string& id) { return display_name(class_of_id(id)); };
    for (const auto& f : facts) {
        if (!out.empty()) out += " ";
        switch (f.kind) {
            case Fact::RelIn: out += "There is a " + noun(f.subject) + " in the " + noun(f.object) + "."; break;
            case Fact::RelOn: out += "There is a " + noun(f.subject) + " on the " + noun(f.object) + "."; break;
            case Fact::Property:
                if (f.object == "location") {
                    out += f.value == "inventory" ? "You are holding the " + noun(f.subject) + "."
                                                  : "You are at the " + noun(f.subject) + ".";
                } else if (f.object == "temperature") {
                    out += "The " + noun(f.subject) + " is " + f.value + ".";
                } else if (f.object == "powered") {
                    out += "The " + noun(f.subject) + " is on.";
                } else {
                    out += "The " + noun(f.subject) + " is " + f.object + ".";
                }
                break;
        }
    }
    return out;
}

// ---------------------------------------------------------------- AD

std::vector<Action> ad_explore(const Direction& direction, const AgentKnowledge& knowledge, ActionProfile profile) {
    const auto& recs = knowledge.receptacles;
    bool is_receptacle = std::find(recs.begin(), recs.end(), direction.object) != recs.end();
    if (is_receptacle) {
        std::vector<Action> out{Action::go_to(direction.object)};
        const ClassInfo* info = find_class(class_of_id(direction.object));
        if (info && info->openable && !knowledge.known_open(direction.object)) out.push_back(Action::open(direction.object));
        return out;
    }
    const ClassInfo* info = find_class(class_of_id(direction.object));
    if (profile == ActionProfile::Composite && info) return {Action::go_to(direction.object)};
    return {Action::invalid("go to " + direction.object)};
}

namespace {

struct ManipBuilder {
    const std::vector<Fact>& facts;
    AgentKnowledge k;
    std::vector<Action> out;

    bool is_receptacle(const std::string& id) const {
        return std::find(k.receptacles.begin(), k.receptacles.end(), id) != k.receptacles.end();
    }

    std::string instance_for(const std::string& cls) const {
        for (const auto& f : facts)
            if (class_of_id(f.subject) == cls) return f.subject;
        for (const auto& f : facts)
            if (f.kind != Fact::Property && class_of_id(f.object) == cls) return f.object;
        if (k.inventory && class_of_id(*k.inventory) == cls) return *k.inventory;
        if (class_of_id(k.location) == cls) return k.location;
        for (const auto& r : k.receptacles)
            if (class_of_id(r) == cls) return r;
        return cls + " 1";
    }

    std::string location_of(const std::string& id) const {
        if (k.inventory && *k.inventory == id) return std::string(kInventory);
        for (const auto& f : facts)
            if (f.kind != Fact::Property && f.subject == id) return f.object;
        if (is_receptacle(id)) return id;
        return k.location;
    }

    std::string top_of(const std::string& id) const {
        std::string cur = id;
        for (int i = 0; i < 3 && !is_receptacle(cur); ++i) {
            std::string next = location_of(cur);
            if (next == cur || next == kInventory) break;
            cur = next;
        }
        return cur;
    }

    void emit(Action a) {
        switch (a.type) {
            case ActionType::GoTo:
                if (is_receptacle(a.target)) k.location = a.target;
                break;
            case ActionType::Open: k.open[a.target] = true; break;
            case ActionType::Close: k.open[a.target] = false; break;
            case ActionType::Pick: k.inventory = a.target; break;
            case ActionType::Put: k.inventory.reset(); break;
            default: break;
        }
        out.push_back(std::move(a));
    }

    void go(const std::string& top) {
        if (k.location != top && is_receptacle(top)) emit(Action::go_to(top));
    }

    void ensure_open(const std::string& id) {
        const ClassInfo* info = find_class(class_of_id(id));
        if (info && info->openable && !k.known_open(id)) emit(Action::open(id));
    }

    void put_down() {
        if (!k.inventory) return;
        std::string here = k.location;
        if (!is_receptacle(here)) {
            if (k.receptacles.empty()) return;
            here = k.receptacles.front();
            go(here);
        }
        ensure_open(here);
        emit(Action::put(*k.inventory, here));
    }

    bool holding(const std::string& cls) const { return k.inventory && class_of_id(*k.inventory) == cls; }

    void grasp(const std::string& cls) {
        if (holding(cls)) return;
        std::string x = instance_for(cls);
        std::string from = location_of(x);
        std::string top = top_of(x);
        put_down();
        go(top);
        ensure_open(top);
        if (from != top) ensure_open(from);
        if (from == kInventory) from = k.location;
        emit(Action::pick(x, from));
    }

    void put(const std::string& obj_cls, const std::string& rec_cls) {
        if (!holding(obj_cls)) grasp(obj_cls);
        std::string held = k.inventory ? *k.inventory : obj_cls + " 1";
        std::string r = instance_for(rec_cls);
        std::string top = top_of(r);
        go(top);
        ensure_open(top);
        if (r != top) ensure_open(r);
        emit(Action::put(held, r));
    }
};

}  // namespace

std::vector<Action> ad_manip(const ManipCommand& command, const std::vector<Fact>& facts,
                             const AgentKnowledge& knowledge, ActionProfile profile, const ToolRegistry& tools) {
    (void)tools;
    ManipBuilder b{facts, knowledge, {}};
    const auto& args = command.args;
    if (static_cast<int>(args.size()) != arity(command.category)) return {Action::invalid(render(command))};
    switch (command.category) {
        case ManipCategory::Grasp: b.grasp(args[0]); break;
        case ManipCategory::Put: b.put(args[0], args[1]); break;
        case ManipCategory::PutAndGrasp: {
            b.put(args[0], args[1]);
            std::string c = b.instance_for(args[1]);
            b.emit(Action::pick(c, b.location_of(c)));
            break;
        }
        case ManipCategory::TurnOn: {
            std::string x = b.instance_for(args[0]);
            if (!(b.k.inventory && *b.k.inventory == x)) b.go(b.top_of(x));
            b.emit(Action::turn_on(x));
            break;
        }
        case ManipCategory::Slice: {
            std::string x = b.instance_for(args[0]);
            b.go(b.top_of(x));
            b.emit(Action::slice(x));
            break;
        }
        case ManipCategory::HeatWith:
        case ManipCategory::CoolWith:
        case ManipCategory::CleanWith: {
            if (!b.holding(args[0])) b.grasp(args[0]);
            std::string held = b.k.inventory ? *b.k.inventory : args[0] + " 1";
            std::string u = b.instance_for(args[1]);
            b.go(b.top_of(u));
            if (profile == ActionProfile::Atomic) {
                if (command.category == ManipCategory::HeatWith) b.emit(Action::heat(held, u));
                if (command.category == ManipCategory::CoolWith) b.emit(Action::cool(held, u));
                if (command.category == ManipCategory::CleanWith) b.emit(Action::clean(held, u));
                break;
            }
            if (command.category == ManipCategory::CleanWith) {
                b.ensure_open(u);
                b.emit(Action::put(held, u));
                b.emit(Action::turn_on(u));
                b.emit(Action::pick(held, u));
                break;
            }
            b.ensure_open(u);
            b.emit(Action::put(held, u));
            b.emit(Action::close(u));
            if (command.category == ManipCategory::HeatWith) b.emit(Action::turn_on(u));
            b.emit(Action::open(u));
            b.emit(Action::pick(held, u));
            b.emit(Action::close(u));
            break;
        }
    }
    return b.out;
}

// ---------------------------------------------------------------- ES

EsSummary es(const std::string& command, const std::vector<ExecutedAction>& history, const CapabilitySuite& backend,
             Rng& rng) {
    EsSummary s;
    for (const auto& h : history)
        if (!h.feedback.success) {
            s.success = false;
            s.reason = h.feedback.reason;
            break;
        }
    if (s.success && backend.kind == BackendKind::NoisyOracle && bernoulli(rng, backend.p_es)) {
        s.success = false;
        const auto& rs = failure_reasons();
        s.reason = rs[uniform_index(rng, rs.size())];
        s.injected = true;
    }
    // Refer to the concrete instances the actions touched ("grasp SoapBar 1").
    std::map<std::string, std::string> ids;
    for (const auto& h : history)
        for (const std::string* id : {&h.action.target, &h.action.other})
            if (!id->empty() && h.action.type != ActionType::Invalid) ids.emplace(display_name(class_of_id(*id)), *id);
    std::string phrase;
    for (const auto& word : split(command, ' ')) {
        if (!phrase.empty()) phrase.push_back(' ');
        auto it = ids.find(word);
        phrase += it == ids.end() ? word : it->second;
    }
    s.text = s.success ? "You successfully " + phrase + "."
                       : "You failed to " + phrase + ": " + to_string(s.reason) + ".";
    return s;
}

}  // namespace capita
