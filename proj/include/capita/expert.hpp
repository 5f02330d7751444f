#pragma once

#include <string>
#include <vector>

#include "capita/env.hpp"
#include "capita/invocation.hpp"

namespace capita {

enum class SubPlanKind { Exploration, Manipulation };

struct SubPlan {
    SubPlanKind kind = SubPlanKind::Exploration;
    std::string target_class;  // Exploration
    ManipCommand command;      // Manipulation
    bool operator==(const SubPlan&) const = default;

    static SubPlan explore(const std::string& cls) { return {SubPlanKind::Exploration, cls, {}}; }
    static SubPlan manip(ManipCategory c, std::vector<std::string> args) {
        return {SubPlanKind::Manipulation, {}, ManipCommand{c, std::move(args)}};
    }
    std::string query() const { return display_name(target_class); }
    // Class whose exploration a manipulation depends on.
    const std::string& primary_class() const { return kind == SubPlanKind::Exploration ? target_class : command.args.front(); }
};

std::string to_string(const SubPlan& s);
Json to_json(const SubPlan& s);
SubPlan subplan_from_json(const Json& j);

struct ExpertPlan {
    std::vector<SubPlan> steps;
    std::vector<std::string> key_objects;  // slot order used by learned policies
    bool operator==(const ExpertPlan&) const = default;
};

Json to_json(const ExpertPlan& p);
ExpertPlan plan_from_json(const Json& j);

// Sub-plan decomposition from the task's components, without verification.
ExpertPlan decompose(const TaskSpec& task);
// Decomposition verified by running the expert with oracle capabilities.
ExpertPlan plan(const TaskSpec& task, const SceneGraph& scene);

// Task JSON with the plan under "expert_plan".
Json task_with_plan_json(const TaskSpec& task, const ExpertPlan& plan);

enum class RewardMode { ManipOnly, AllSubplans };
std::string to_string(RewardMode m);
RewardMode parse_reward_mode(std::string_view s);

// Plan position: steps [0, head) are completed, [head, end) remain.
struct ProgressTracker {
    std::vector<SubPlan> plan;
    std::size_t head = 0;
    bool operator==(const ProgressTracker&) const = default;

    explicit ProgressTracker(std::vector<SubPlan> steps = {}) : plan(std::move(steps)) {}
    std::size_t remaining_count() const { return plan.size() - head; }
    bool done() const { return head >= plan.size(); }
    std::vector<std::size_t> completed() const;
    std::vector<std::size_t> remaining() const;
    // Round index t_k of each remaining manipulation relative to the current state.
    std::vector<std::size_t> remaining_manip_rounds() const;
    void check() const;
};

Json to_json(const ProgressTracker& t);
ProgressTracker tracker_from_json(const Json& j);

SchedulerAction expert_action(const ProgressTracker& tracker);
std::vector<SchedulerAction> optimal_action_set(const ProgressTracker& tracker);
bool is_optimal(const ProgressTracker& tracker, const SchedulerAction& action, const Lexicon& lex = default_lexicon());

// Applies the outcome of an executed chain. Only chains matching the expert
// action move the tracker; ES failures roll back per the failure reason.
void advance(ProgressTracker& tracker, const SchedulerAction& taken, const ChainOutcome& outcome,
             const Lexicon& lex = default_lexicon());

// advance() on the previous chain (when given) followed by expert_action().
SchedulerAction expert_scheduler_step(ProgressTracker& tracker, const SchedulerAction* last_action,
                                      const ChainOutcome* last_feedback);

double expert_value(const ProgressTracker& tracker, double gamma, RewardMode mode);

// Index the tracker returns to after an ES failure with this reason.
std::size_t rollback_target(const ProgressTracker& tracker, Reason reason);

}  // namespace capita
