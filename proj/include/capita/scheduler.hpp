#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "capita/capabilities.hpp"
#include "capita/env.hpp"
#include "capita/expert.hpp"
#include "capita/invocation.hpp"

namespace capita {

struct RetainedFeedback {
    bool success = false;
    std::string label;          // OG: grounded class
    Reason reason = Reason::Ok;  // ES
    bool operator==(const RetainedFeedback&) const = default;
};

struct MemoryEntry {
    InvocationKind kind = InvocationKind::EG;
    std::string query;
    std::optional<RetainedFeedback> feedback;  // only OG and ES keep feedback
    bool operator==(const MemoryEntry&) const = default;
};

struct SchedulerState {
    std::string instruction;
    std::vector<MemoryEntry> memory;
    int step_count = 0;
    int invalid_count = 0;
    int turn = 0;
    bool operator==(const SchedulerState&) const = default;
};

Json to_json(const SchedulerState& s);
SchedulerState scheduler_state_from_json(const Json& j);

// Folds one executed invocation into the scheduler context.
void apply_feedback(SchedulerState& state, const Invocation& invocation, const std::optional<RetainedFeedback>& feedback);
// Appends the memory entries of a whole chain.
void apply_chain(SchedulerState& state, const SchedulerAction& action, const ChainOutcome& outcome);

class SchedulerPolicy {
public:
    virtual ~SchedulerPolicy() = default;
    virtual void begin(const TaskSpec& task) { (void)task; }
    virtual SchedulerAction act(const SchedulerState& state, const TaskSpec& task, Rng& rng) = 0;
    virtual void observe(const SchedulerAction& action, const ChainOutcome& outcome) {
        (void)action;
        (void)outcome;
    }
    virtual Json descriptor() const = 0;
};

class ExpertScheduler : public SchedulerPolicy {
public:
    ExpertScheduler() = default;
    explicit ExpertScheduler(ExpertPlan plan) : fixed_(std::move(plan)), has_fixed_(true) {}
    void begin(const TaskSpec& task) override;
    SchedulerAction act(const SchedulerState& state, const TaskSpec& task, Rng& rng) override;
    void observe(const SchedulerAction& action, const ChainOutcome& outcome) override;
    Json descriptor() const override { return Json{{"kind", "expert"}}; }
    const ProgressTracker& tracker() const { return tracker_; }

private:
    ExpertPlan fixed_;
    bool has_fixed_ = false;
    ProgressTracker tracker_;
};

struct EpisodeLimits {
    int step_budget = 50;
    std::optional<int> invalid_budget;
    int max_turns = 110;
    int max_sweeps = 3;  // passes over the candidate list before exploration is exhausted
    Json to_json() const;
    static EpisodeLimits from_json(const Json& j);
};

EpisodeLimits default_limits(const TaskSpec& task);

enum class TerminalReason { Stopped, StepBudget, InvalidBudget, ExplorationExhausted };
std::string to_string(TerminalReason r);

struct TranscriptLine {
    int t = 0;
    std::string actor;  // scheduler | capability | env
    Json payload;
};

struct Transcript {
    std::vector<TranscriptLine> lines;
    void add(const std::string& actor, Json payload);
    std::string to_jsonl() const;
    static Transcript from_jsonl(const std::string& text);
};

struct TurnRecord {
    SchedulerState state;  // before the action
    SchedulerAction action;
    ChainOutcome outcome;
};

struct EpisodeResult {
    bool success = false;
    double ssr = 0.0;
    int steps = 0;
    int invalid = 0;
    int turns = 0;
    TerminalReason terminal = TerminalReason::Stopped;
    Transcript transcript;
    std::vector<TurnRecord> turn_log;
    std::vector<ExecutedAction> last_manipulation;  // env history of the final manipulation chain
};

// One capability call as seen by a data collector. Pointers are valid only
// during the callback.
struct CapabilityEvent {
    InvocationKind kind = InvocationKind::EG;
    int turn = 0;
    std::string query;
    Json inputs;
    std::string output;
    ActionProfile profile = ActionProfile::Atomic;
    const SceneGraph* scene = nullptr;
    const AgentKnowledge* knowledge = nullptr;
    const std::vector<std::string>* candidates = nullptr;  // EG
    const EgMemory* memory = nullptr;                      // EG, before the call
    const Observation* observation = nullptr;              // OG (grounding view), SD
    const std::vector<Fact>* facts = nullptr;              // AD-manip
    const std::vector<ExecutedAction>* history = nullptr;  // ES
};

struct RunOptions {
    bool record_transcript = true;
    Json policy_descriptor;  // overrides policy.descriptor() in the transcript header
    std::function<void(const CapabilityEvent&)> on_capability;
};

// Tracker implied by the scheduler memory: chains are replayed through advance().
ProgressTracker replay_tracker(const std::vector<SubPlan>& plan, const SchedulerState& state,
                               const Lexicon& lex = default_lexicon());

EpisodeResult run_episode(const TaskSpec& task, SchedulerPolicy& policy, const CapabilitySuite& backends,
                          const EpisodeLimits& limits, std::uint64_t rng_seed, const RunOptions& options = {});

}  // namespace capita
