#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "capita/common.hpp"
#include "capita/vocab.hpp"

namespace capita {

using Json = nlohmann::json;

inline constexpr std::string_view kInventory = "agent-inventory";
inline constexpr std::string_view kFloor = "floor";
inline constexpr std::string_view kStart = "start";

enum class Temperature { Room, Hot, Cold };
enum class ActionProfile { Atomic, Composite };

std::string to_string(Temperature t);
std::string to_string(ActionProfile p);
ActionProfile parse_profile(std::string_view s);

struct ObjectState {
    bool open = false;
    bool powered = false;
    Temperature temperature = Temperature::Room;
    bool clean = false;
    bool sliced = false;
    bool examined = false;
    bool moved = false;  // touched by the agent during the episode
    bool operator==(const ObjectState&) const = default;
};

struct ObjectInstance {
    std::string id;
    std::string cls;
    ObjectState state;
    std::string location;
    const ClassInfo& info() const { return class_info(cls); }
    bool operator==(const ObjectInstance&) const = default;
};

struct ToolRegistry {
    std::string heat = "Microwave";
    std::string cool = "Fridge";
    std::string clean = "SinkBasin";
    bool operator==(const ToolRegistry&) const = default;
};

struct SceneConfig {
    int receptacles = 12;
    int objects = 14;
    bool operator==(const SceneConfig&) const = default;
};

class SceneGraph {
public:
    SceneGraph() = default;
    SceneGraph(std::uint64_t seed, SceneConfig config) : seed_(seed), config_(config) {}

    const std::vector<ObjectInstance>& objects() const { return objects_; }
    const ObjectInstance* find(std::string_view id) const;
    ObjectInstance* find(std::string_view id);
    const std::vector<std::string>& receptacles() const { return receptacles_; }
    const ToolRegistry& tools() const { return tools_; }
    std::uint64_t seed() const { return seed_; }
    const SceneConfig& config() const { return config_; }

    bool is_receptacle_id(std::string_view id) const;
    // Follows locations up to a fixed receptacle (or the inventory).
    std::string top_level(std::string_view id) const;
    std::vector<const ObjectInstance*> contents(std::string_view id) const;
    std::vector<const ObjectInstance*> instances_of(std::string_view cls) const;
    std::size_t count_class(std::string_view cls) const;

    ObjectInstance& add(const std::string& cls, const std::string& location);
    void remove(std::string_view id);
    void check_invariants() const;

    Json to_json() const;
    std::string serialize() const { return to_json().dump(); }
    bool operator==(const SceneGraph& o) const {
        return objects_ == o.objects_ && receptacles_ == o.receptacles_ && tools_ == o.tools_;
    }

private:
    void reindex();
    std::vector<ObjectInstance> objects_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::string> receptacles_;
    ToolRegistry tools_;
    std::uint64_t seed_ = 0;
    SceneConfig config_;
};

SceneGraph build_scene(std::uint64_t seed, const SceneConfig& config = {});

struct AgentState {
    std::string location = std::string(kStart);
    std::optional<std::string> inventory;
    bool operator==(const AgentState&) const = default;
};

enum class ActionType { GoTo, Open, Close, TurnOn, Pick, Put, Slice, Heat, Cool, Clean, Invalid };

struct Action {
    ActionType type = ActionType::Invalid;
    std::string target;  // object / receptacle; free text for Invalid
    std::string other;   // from / to / tool
    bool operator==(const Action&) const = default;

    static Action go_to(std::string r) { return {ActionType::GoTo, std::move(r), {}}; }
    static Action open(std::string o) { return {ActionType::Open, std::move(o), {}}; }
    static Action close(std::string o) { return {ActionType::Close, std::move(o), {}}; }
    static Action turn_on(std::string o) { return {ActionType::TurnOn, std::move(o), {}}; }
    static Action pick(std::string o, std::string from) { return {ActionType::Pick, std::move(o), std::move(from)}; }
    static Action put(std::string o, std::string to) { return {ActionType::Put, std::move(o), std::move(to)}; }
    static Action slice(std::string o) { return {ActionType::Slice, std::move(o), {}}; }
    static Action heat(std::string o, std::string t) { return {ActionType::Heat, std::move(o), std::move(t)}; }
    static Action cool(std::string o, std::string t) { return {ActionType::Cool, std::move(o), std::move(t)}; }
    static Action clean(std::string o, std::string t) { return {ActionType::Clean, std::move(o), std::move(t)}; }
    static Action invalid(std::string text) { return {ActionType::Invalid, std::move(text), {}}; }
};

std::string render(const Action& a);
// Inverse of render; unparseable text becomes Invalid(text).
Action parse_action(std::string_view text);
std::string render_action_list(const std::vector<Action>& actions);
std::vector<Action> parse_action_list(std::string_view text);

enum class Reason {
    Ok, NotAtLocation, TargetNotVisible, ReceptacleClosed, InventoryFull, InventoryEmpty,
    WrongTool, PreconditionViolated, UnknownAction,
};
std::string to_string(Reason r);
Reason parse_reason(std::string_view s);
const std::vector<Reason>& failure_reasons();

struct ActionFeedback {
    bool success = true;
    Reason reason = Reason::Ok;
    bool operator==(const ActionFeedback&) const = default;
};

// Applies action in place. Failed actions leave scene and agent untouched.
ActionFeedback step(SceneGraph& scene, AgentState& agent, const Action& action, ActionProfile profile);

struct VisibleObject {
    std::string id;
    std::vector<std::pair<std::string, std::string>> props;
};

struct Observation {
    std::vector<VisibleObject> visible;
    std::string location;
    std::optional<std::string> inventory;
    bool sees(std::string_view id) const;
};

Observation observe(const SceneGraph& scene, const AgentState& agent);

enum class GoalKind { In, On, Prop, CountIn, ExaminedUnderLamp };

struct GoalCondition {
    GoalKind kind = GoalKind::In;
    std::string cls;
    std::string receptacle;  // In / On / CountIn
    std::string property;    // Prop
    std::string value;       // Prop
    int count = 0;           // CountIn
    bool operator==(const GoalCondition&) const = default;

    static GoalCondition in(std::string c, std::string r) { return {GoalKind::In, std::move(c), std::move(r), {}, {}, 0}; }
    static GoalCondition on(std::string c, std::string r) { return {GoalKind::On, std::move(c), std::move(r), {}, {}, 0}; }
    static GoalCondition prop(std::string c, std::string p, std::string v) {
        return {GoalKind::Prop, std::move(c), {}, std::move(p), std::move(v), 0};
    }
    static GoalCondition count_in(std::string c, std::string r, int n) { return {GoalKind::CountIn, std::move(c), std::move(r), {}, {}, n}; }
    static GoalCondition examined(std::string c) { return {GoalKind::ExaminedUnderLamp, std::move(c), {}, {}, {}, 0}; }
};

std::string to_string(const GoalCondition& g);
Json to_json(const GoalCondition& g);
GoalCondition goal_from_json(const Json& j);

struct GoalCheck {
    std::vector<std::size_t> satisfied;
    bool success = false;
    double ssr = 0.0;
};

bool goal_satisfied(const SceneGraph& scene, const GoalCondition& g);
GoalCheck check_goals(const SceneGraph& scene, const std::vector<GoalCondition>& goals);

enum class Category { PickPlace, PickTwo, StackPlace, Clean, Heat, Cool, Examine, Composite };
inline constexpr int kBaseCategories = 7;
std::string to_string(Category c);
Category parse_category(std::string_view s);
const std::vector<Category>& base_categories();

struct TaskComponent {
    Category category = Category::PickPlace;
    std::string object;
    std::string container;   // stack&place
    std::string tool;        // heat / cool / clean / examine lamp
    std::string receptacle;  // destination
    std::vector<std::string> instances;  // bound object instances
    std::string instruction;
    std::vector<GoalCondition> goals;
    bool operator==(const TaskComponent&) const = default;
};

struct TaskSpec {
    std::string id;
    Category category = Category::PickPlace;
    std::string instruction;
    std::vector<GoalCondition> goals;
    std::uint64_t scene_seed = 0;
    SceneConfig scene_config;
    ActionProfile profile = ActionProfile::Atomic;
    int step_budget = 50;
    std::optional<int> invalid_budget;
    std::vector<TaskComponent> components;
    bool operator==(const TaskSpec&) const = default;
};

struct TaskOverrides {
    std::string object;
    std::string receptacle;
    std::vector<std::string> exclude_instances;
};

// Instances of cls ordered by (receptacle order, object order); moved ones skipped unless asked.
std::vector<std::string> ordered_instances(const SceneGraph& scene, const std::string& cls,
                                           const std::vector<std::string>& exclude = {}, bool include_moved = false);

void apply_profile_budget(TaskSpec& task);
TaskSpec instantiate_task(Category category, const SceneGraph& scene, Rng& rng, ActionProfile profile,
                          const TaskOverrides& overrides = {});
TaskSpec compose_tasks(const TaskSpec& a, const TaskSpec& b);
// Scene regenerated from the task's seed/config.
SceneGraph scene_for(const TaskSpec& task);

Json to_json(const TaskSpec& task);
TaskSpec task_from_json(const Json& j);

}  // namespace capita
