#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "capita/env.hpp"
#include "capita/invocation.hpp"

namespace capita {

enum class Relation { Target, In, On, Near };
std::string to_string(Relation r);

struct Direction {
    Relation relation = Relation::On;
    std::string object;
    bool operator==(const Direction&) const = default;
};

std::string render(const Direction& d);  // "on CounterTop 1"
std::optional<Direction> parse_direction(std::string_view text);

struct EgMemory {
    std::string current_query;
    std::vector<Direction> tried;
    bool was_tried(const std::string& object) const;
    // Clears the history when the query changes.
    void observe_query(const std::string& query);
    void reset() { tried.clear(); }
};

struct Box {
    int x1 = 0, y1 = 0, x2 = 0, y2 = 0;
    bool operator==(const Box&) const = default;
};

struct Grounding {
    bool found = false;
    std::string label;
    std::string instance;  // matched instance, empty when not found
    Box box;
    bool injected = false;  // noisy flip Found -> NotFound
};

std::string render(const Grounding& g);  // JSON box list or "no"

struct Fact {
    enum Kind { RelIn, RelOn, Property } kind = Property;
    std::string subject;
    std::string object;  // related id or property name
    std::string value;   // property value
    bool operator==(const Fact&) const = default;
};

std::string render_facts(const std::vector<Fact>& facts);

struct EsSummary {
    bool success = true;
    Reason reason = Reason::Ok;
    std::string text;
    bool injected = false;
};

struct ExecutedAction {
    Action action;
    ActionFeedback feedback;
};

enum class BackendKind { Oracle, NoisyOracle, Learned };
std::string to_string(BackendKind k);

struct EgRequest {
    std::string query;
    const std::vector<std::string>* candidates = nullptr;
    const EgMemory* memory = nullptr;
};

// Noise probabilities apply only to NoisyOracle backends; Oracle is NoisyOracle with zeros.
struct CapabilitySuite {
    BackendKind kind = BackendKind::Oracle;
    double p_eg = 0.0;
    double p_og = 0.0;
    double p_es = 0.0;
    // Learned EG override: returns a candidate index, or nullopt to defer to the oracle.
    std::function<std::optional<std::size_t>(const EgRequest&)> learned_eg;

    static CapabilitySuite oracle() { return {}; }
    static CapabilitySuite noisy(double p_eg, double p_og, double p_es);
    void validate() const;
    Json to_json() const;
};

// What the agent knows about the world without privileged access.
struct AgentKnowledge {
    std::string location = std::string(kStart);
    std::optional<std::string> inventory;
    std::vector<std::string> receptacles;
    std::map<std::string, bool> open;  // last observed open state per id
    bool known_open(const std::string& id) const;
    void record(const Action& a, const ActionFeedback& fb, const AgentState& agent);
};

std::vector<std::string> eg_candidates(const SceneGraph& scene, ActionProfile profile);

struct EgResult {
    std::optional<Direction> direction;  // nullopt means every candidate was tried
    bool injected = false;
};

EgResult eg(const std::string& query, const std::vector<std::string>& candidates, EgMemory& memory,
            const CapabilitySuite& backend, const SceneGraph& scene, ActionProfile profile, Rng& rng,
            const Lexicon& lex = default_lexicon());

Grounding og(const std::string& query, const Observation& obs, const CapabilitySuite& backend, const SceneGraph& scene,
             Rng& rng, const Lexicon& lex = default_lexicon());

// Observation handed to OG during an episode: instances the agent already moved
// are dropped unless held or no untouched instance of their class remains.
Observation grounding_view(const Observation& obs, const SceneGraph& scene);

Box synthetic_box(std::uint64_t scene_seed, const std::string& id);

std::vector<Fact> sd(const std::string& target_class, const Observation& obs, const SceneGraph& scene);

std::vector<Action> ad_explore(const Direction& direction, const AgentKnowledge& knowledge, ActionProfile profile);

std::vector<Action> ad_manip(const ManipCommand& command, const std::vector<Fact>& facts,
                             const AgentKnowledge& knowledge, ActionProfile profile, const ToolRegistry& tools);

EsSummary es(const std::string& command, const std::vector<ExecutedAction>& history, const CapabilitySuite& backend,
             Rng& rng);

}  // namespace capita
