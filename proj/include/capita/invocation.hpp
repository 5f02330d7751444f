#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "capita/env.hpp"
#include "capita/vocab.hpp"

namespace capita {

enum class ManipCategory { Grasp, Put, TurnOn, Slice, HeatWith, CoolWith, CleanWith, PutAndGrasp };
inline constexpr int kManipCategories = 8;
std::string to_string(ManipCategory c);
int arity(ManipCategory c);

// Class-level manipulation command, e.g. "cool apple with fridge".
struct ManipCommand {
    ManipCategory category = ManipCategory::Grasp;
    std::vector<std::string> args;  // vocabulary class names
    bool operator==(const ManipCommand&) const = default;
};

std::string render(const ManipCommand& c);
std::optional<ManipCommand> parse_command(std::string_view text, const Lexicon& lex);

enum class InvocationKind { EG, OG, SD, ADExplore, ADManip, ES };
std::string to_string(InvocationKind k);
InvocationKind parse_invocation_kind(std::string_view s);

struct Invocation {
    InvocationKind kind = InvocationKind::EG;
    std::string query;
    bool operator==(const Invocation&) const = default;
};

struct SchedulerAction {
    bool stop = false;
    std::vector<Invocation> chain;
    bool operator==(const SchedulerAction&) const = default;

    static SchedulerAction explore(const std::string& query);
    static SchedulerAction manipulate(const std::string& command);
    static SchedulerAction halt() { return {true, {}}; }
};

enum class ChainKind { Exploration, Manipulation, Stop, Illegal };
std::string to_string(ChainKind k);

// Checks the closed chain grammar.
ChainKind classify(const SchedulerAction& a);
// "1. exploration_guidance(apple)\n2. exploration_planner()\n3. object_grounding(apple)" / "stop()"
std::string render_scheduler_output(const SchedulerAction& a);
std::optional<SchedulerAction> parse_scheduler_output(std::string_view text);
Json to_json(const SchedulerAction& a);
SchedulerAction scheduler_action_from_json(const Json& j);

// Comparison after query canonicalization through the lexicon.
bool canonical_equal(const SchedulerAction& a, const SchedulerAction& b, const Lexicon& lex);

// What the scheduler learns from one executed chain.
struct ChainOutcome {
    ChainKind kind = ChainKind::Illegal;
    std::string query;
    bool og_found = false;
    std::string og_label;
    bool og_injected = false;
    bool es_success = false;
    Reason es_reason = Reason::Ok;
    bool es_injected = false;
    bool exhausted = false;
};

}  // namespace capita
