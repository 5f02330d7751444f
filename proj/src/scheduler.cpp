#include "capita/scheduler.hpp"

#include <sstream>

namespace capita {

Json to_json(const SchedulerState& s) {
    Json mem = Json::array();
    for (const auto& e : s.memory) {
        Json j{{"kind", to_string(e.kind)}, {"query", e.query}};
        if (e.feedback) {
            Json f{{"success", e.feedback->success}};
            if (e.kind == InvocationKind::OG) f["label"] = e.feedback->label;
            if (e.kind == InvocationKind::ES) f["reason"] = to_string(e.feedback->reason);
            j["feedback"] = f;
        }
        mem.push_back(j);
    }
    return Json{{"instruction", s.instruction}, {"memory", mem},     {"step_count", s.step_count},
                {"invalid_count", s.invalid_count}, {"turn", s.turn}};
}

SchedulerState scheduler_state_from_json(const Json& j) {
    SchedulerState s;
    s.instruction = j.at("instruction").get<std::string>();
    s.step_count = j.at("step_count").get<int>();
    s.invalid_count = j.at("invalid_count").get<int>();
    s.turn = j.at("turn").get<int>();
    for (const auto& m : j.at("memory")) {
        MemoryEntry e;
        e.kind = parse_invocation_kind(m.at("kind").get<std::string>());
        e.query = m.at("query").get<std::string>();
        if (m.contains("feedback")) {
            RetainedFeedback f;
            const auto& fj = m.at("feedback");
            f.success = fj.at("success").get<bool>();
            f.label = fj.value("label", "");
            f.reason = parse_reason(fj.value("reason", "ok"));
            e.feedback = f;
        }
        s.memory.push_back(std::move(e));
    }
    return s;
}

void apply_feedback(SchedulerState& state, const Invocation& invocation, const std::optional<RetainedFeedback>& feedback) {
    MemoryEntry e{invocation.kind, invocation.query, std::nullopt};
    if (invocation.kind == InvocationKind::OG || invocation.kind == InvocationKind::ES) e.feedback = feedback;
    state.memory.push_back(std::move(e));
}

void apply_chain(SchedulerState& state, const SchedulerAction& action, const ChainOutcome& outcome) {
    for (const auto& inv : action.chain) {
        std::optional<RetainedFeedback> fb;
        if (inv.kind == InvocationKind::OG) fb = RetainedFeedback{outcome.og_found, outcome.og_label, Reason::Ok};
        if (inv.kind == InvocationKind::ES) fb = RetainedFeedback{outcome.es_success, {}, outcome.es_reason};
        apply_feedback(state, inv, fb);
    }
}

// ---------------------------------------------------------------- expert policy

void ExpertScheduler::begin(const TaskSpec& task) {
    tracker_ = ProgressTracker(has_fixed_ ? fixed_.steps : decompose(task).steps);
}

SchedulerAction ExpertScheduler::act(const SchedulerState&, const TaskSpec&, Rng&) { return expert_action(tracker_); }

void ExpertScheduler::observe(const SchedulerAction& action, const ChainOutcome& outcome) {
    advance(tracker_, action, outcome);
}

ProgressTracker replay_tracker(const std::vector<SubPlan>& plan, const SchedulerState& state, const Lexicon& lex) {
    ProgressTracker t(plan);
    const auto& m = state.memory;
    for (std::size_t i = 0; i + 2 < m.size(); i += 3) {
        ChainOutcome out;
        SchedulerAction a;
        if (m[i].kind == InvocationKind::EG) {
            a = SchedulerAction::explore(m[i].query);
            out.kind = ChainKind::Exploration;
            if (m[i + 2].feedback) {
                out.og_found = m[i + 2].feedback->success;
                out.og_label = m[i + 2].feedback->label;
            }
        } else {
            a = SchedulerAction::manipulate(m[i + 1].query);
            out.kind = ChainKind::Manipulation;
            if (m[i + 2].feedback) {
                out.es_success = m[i + 2].feedback->success;
                out.es_reason = m[i + 2].feedback->reason;
            }
        }
        advance(t, a, out, lex);
    }
    return t;
}

// ---------------------------------------------------------------- limits / transcript

Json EpisodeLimits::to_json() const {
    return Json{{"step_budget", step_budget},
                {"invalid_budget", invalid_budget ? Json(*invalid_budget) : Json(nullptr)},
                {"max_turns", max_turns},
                {"max_sweeps", max_sweeps}};
}

EpisodeLimits EpisodeLimits::from_json(const Json& j) {
    EpisodeLimits l;
    l.step_budget = j.at("step_budget").get<int>();
    if (!j.at("invalid_budget").is_null()) l.invalid_budget = j.at("invalid_budget").get<int>();
    l.max_turns = j.at("max_turns").get<int>();
    l.max_sweeps = j.at("max_sweeps").get<int>();
    return l;
}

EpisodeLimits default_limits(const TaskSpec& task) {
    EpisodeLimits l;
    l.step_budget = task.step_budget;
    l.invalid_budget = task.invalid_budget;
    l.max_turns = 2 * task.step_budget + 10;
    return l;
}

std::string to_string(TerminalReason r) {
    switch (r) {
        case TerminalReason::Stopped: return "stopped";
        case TerminalReason::StepBudget: return "step-budget";
        case TerminalReason::InvalidBudget: return "invalid-budget";
        case TerminalReason::ExplorationExhausted: return "exploration-exhausted";
    }
    return {};
}

void Transcript::add(const std::string& actor, Json payload) {
    lines.push_back({static_cast<int>(lines.size()), actor, std::move(payload)});
}

std::string Transcript::to_jsonl() const {
    std::string out;
    for (const auto& l : lines) {
        out += Json{{"t", l.t}, {"actor", l.actor}, {"payload", l.payload}}.dump();
        out += '\n';
    }
    return out;
}

Transcript Transcript::from_jsonl(const std::string& text) {
    Transcript tr;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        Json j = Json::parse(line);
        tr.lines.push_back({j.at("t").get<int>(), j.at("actor").get<std::string>(), j.at("payload")});
    }
    return tr;
}

// ---------------------------------------------------------------- episode loop

namespace {

struct Episode {
    const TaskSpec& task;
    const CapabilitySuite& backends;
    const EpisodeLimits& limits;
    const RunOptions& options;
    bool record;
    SceneGraph scene;
    AgentState agent;
    AgentKnowledge knowledge;
    std::vector<std::string> candidates;
    EgMemory eg_memory;
    int sweeps = 1;
    Rng cap_rng;
    SchedulerState state;
    EpisodeResult result;

    Episode(const TaskSpec& t, const CapabilitySuite& b, const EpisodeLimits& l, std::uint64_t seed, const RunOptions& o)
        : task(t), backends(b), limits(l), options(o), record(o.record_transcript), scene(scene_for(t)), cap_rng(derive_seed(seed, 1)) {
        knowledge.receptacles = scene.receptacles();
        candidates = eg_candidates(scene, task.profile);
        state.instruction = task.instruction;
    }

    void log(const std::string& actor, Json payload) {
        if (record) result.transcript.add(actor, std::move(payload));
    }

    bool out_of_steps() const { return state.step_count >= limits.step_budget; }
    bool out_of_invalid() const { return limits.invalid_budget && state.invalid_count >= *limits.invalid_budget; }

    std::vector<ExecutedAction> execute(const std::vector<Action>& actions) {
        std::vector<ExecutedAction> history;
        for (const auto& a : actions) {
            if (out_of_steps() || out_of_invalid()) break;
            ActionFeedback fb = step(scene, agent, a, task.profile);
            ++state.step_count;
            if (!fb.success) ++state.invalid_count;
            knowledge.record(a, fb, agent);
            history.push_back({a, fb});
            if (record) log("env", Json{{"action", render(a)}, {"success", fb.success}, {"reason", to_string(fb.reason)}});
            if (!fb.success) break;
        }
        return history;
    }

    std::string digest(const Json& inputs) const { return hex64(fnv1a(inputs.dump())); }

    CapabilityEvent event(InvocationKind kind, const std::string& query, Json inputs, std::string output) const {
        CapabilityEvent e;
        e.kind = kind;
        e.turn = state.turn;
        e.query = query;
        e.inputs = std::move(inputs);
        e.output = std::move(output);
        e.profile = task.profile;
        e.scene = &scene;
        e.knowledge = &knowledge;
        return e;
    }

    ChainOutcome explore(const SchedulerAction& action) {
        ChainOutcome out;
        out.kind = ChainKind::Exploration;
        const std::string& q = action.chain[0].query;
        out.query = q;
        if (q != eg_memory.current_query) sweeps = 1;
        EgMemory before = eg_memory;
        EgResult r = eg(q, candidates, eg_memory, backends, scene, task.profile, cap_rng);
        while (!r.direction && sweeps < limits.max_sweeps) {
            eg_memory.reset();
            ++sweeps;
            before = eg_memory;
            r = eg(q, candidates, eg_memory, backends, scene, task.profile, cap_rng);
        }
        if (options.on_capability) {
            Json tried = Json::array();
            for (const auto& d : before.tried) tried.push_back(render(d));
            CapabilityEvent e = event(InvocationKind::EG, q, Json{{"query", q}, {"candidates", candidates}, {"tried", tried}},
                                      r.direction ? render(*r.direction) : std::string("exhausted"));
            e.candidates = &candidates;
            e.memory = &before;
            options.on_capability(e);
        }
        if (record) log("capability", Json{{"kind", "EG"},
                               {"query", q},
                               {"inputs_digest", digest(Json{{"candidates", candidates}, {"tried", eg_memory.tried.size()}})},
                               {"output", r.direction ? render(*r.direction) : std::string("exhausted")},
                               {"injected", r.injected}});
        if (!r.direction) {
            out.exhausted = true;
            return out;
        }
        std::vector<Action> acts = ad_explore(*r.direction, knowledge, task.profile);
        if (options.on_capability)
            options.on_capability(event(InvocationKind::ADExplore, "",
                                        Json{{"direction", render(*r.direction)}, {"location", knowledge.location}},
                                        render_action_list(acts)));
        if (record) log("capability", Json{{"kind", "AD-explore"},
                               {"query", ""},
                               {"inputs_digest", digest(Json{{"direction", render(*r.direction)}, {"location", knowledge.location}})},
                               {"output", render_action_list(acts)},
                               {"injected", false}});
        execute(acts);
        Observation obs = observe(scene, agent);
        Observation view = grounding_view(obs, scene);
        Grounding g = og(q, view, backends, scene, cap_rng);
        Json vis = Json::array();
        for (const auto& v : obs.visible) vis.push_back(v.id);
        if (options.on_capability) {
            Json seen = Json::array();
            for (const auto& v : view.visible) seen.push_back(v.id);
            CapabilityEvent e = event(InvocationKind::OG, q, Json{{"query", q}, {"visible", seen}}, render(g));
            e.observation = &view;
            options.on_capability(e);
        }
        if (record) log("capability", Json{{"kind", "OG"},
                               {"query", q},
                               {"inputs_digest", digest(vis)},
                               {"output", render(g)},
                               {"injected", g.injected},
                               {"classes", default_lexicon().canonicalize(q)}});
        out.og_found = g.found;
        out.og_label = g.label;
        out.og_injected = g.injected;
        if (g.found) eg_memory.reset();
        return out;
    }

    std::string latest_label() const {
        for (auto it = state.memory.rbegin(); it != state.memory.rend(); ++it)
            if (it->kind == InvocationKind::OG && it->feedback && it->feedback->success) return it->feedback->label;
        return {};
    }

    ChainOutcome manipulate(const SchedulerAction& action) {
        ChainOutcome out;
        out.kind = ChainKind::Manipulation;
        const std::string& cmd = action.chain[1].query;
        out.query = cmd;
        std::string label = latest_label();
        Observation obs = observe(scene, agent);
        std::vector<Fact> facts = label.empty() ? std::vector<Fact>{} : sd(label, obs, scene);
        if (options.on_capability) {
            Json seen = Json::array();
            for (const auto& v : obs.visible) seen.push_back(v.id);
            CapabilityEvent e = event(InvocationKind::SD, label, Json{{"label", label}, {"visible", seen}}, render_facts(facts));
            e.observation = &obs;
            options.on_capability(e);
        }
        if (record) log("capability", Json{{"kind", "SD"},
                               {"query", ""},
                               {"inputs_digest", digest(Json{{"label", label}, {"location", agent.location}})},
                               {"output", render_facts(facts)},
                               {"injected", false}});
        auto parsed = parse_command(cmd, default_lexicon());
        std::vector<Action> acts = parsed ? ad_manip(*parsed, facts, knowledge, task.profile, scene.tools())
                                          : std::vector<Action>{Action::invalid(cmd)};
        if (record) log("capability", Json{{"kind", "AD-manip"},
                               {"query", cmd},
                               {"inputs_digest", digest(Json{{"facts", render_facts(facts)}, {"location", knowledge.location},
                                                             {"inventory", knowledge.inventory.value_or("")}})},
                               {"output", render_action_list(acts)},
                               {"injected", false}});
        if (options.on_capability) {
            CapabilityEvent e = event(InvocationKind::ADManip, cmd,
                                      Json{{"command", cmd},
                                           {"facts", render_facts(facts)},
                                           {"location", knowledge.location},
                                           {"inventory", knowledge.inventory.value_or("")}},
                                      render_action_list(acts));
            e.facts = &facts;
            options.on_capability(e);
        }
        std::vector<ExecutedAction> history = execute(acts);
        EsSummary s = es(cmd, history, backends, cap_rng);
        if (options.on_capability) {
            Json hist = Json::array();
            for (const auto& h : history)
                hist.push_back({{"action", render(h.action)}, {"success", h.feedback.success}, {"reason", to_string(h.feedback.reason)}});
            CapabilityEvent e = event(InvocationKind::ES, cmd, Json{{"command", cmd}, {"history", hist}}, s.text);
            e.history = &history;
            options.on_capability(e);
        }
        if (record) log("capability", Json{{"kind", "ES"},
                               {"query", cmd},
                               {"inputs_digest", digest(Json{{"history", history.size()}})},
                               {"output", s.text},
                               {"success", s.success},
                               {"reason", to_string(s.reason)},
                               {"injected", s.injected}});
        out.es_success = s.success;
        out.es_reason = s.reason;
        out.es_injected = s.injected;
        result.last_manipulation = std::move(history);
        return out;
    }
};

}  // namespace

EpisodeResult run_episode(const TaskSpec& task, SchedulerPolicy& policy, const CapabilitySuite& backends,
                          const EpisodeLimits& limits, std::uint64_t rng_seed, const RunOptions& options) {
    backends.validate();
    Episode ep(task, backends, limits, rng_seed, options);
    Rng policy_rng(derive_seed(rng_seed, 2));
    policy.begin(task);
    if (ep.record) ep.log("scheduler", Json{{"event", "begin"},
                             {"task", to_json(task)},
                             {"policy", options.policy_descriptor.is_null() ? policy.descriptor() : options.policy_descriptor},
                             {"backends", backends.to_json()},
                             {"limits", limits.to_json()},
                             {"rng_seed", rng_seed}});

    TerminalReason terminal = TerminalReason::StepBudget;
    while (true) {
        if (ep.out_of_steps()) {
            terminal = TerminalReason::StepBudget;
            break;
        }
        if (ep.out_of_invalid()) {
            terminal = TerminalReason::InvalidBudget;
            break;
        }
        if (ep.state.turn >= limits.max_turns) {
            terminal = TerminalReason::StepBudget;
            break;
        }
        SchedulerAction action = policy.act(ep.state, task, policy_rng);
        ChainKind kind = classify(action);
        if (ep.record) ep.log("scheduler", Json{{"event", "act"}, {"turn", ep.state.turn}, {"kind", to_string(kind)}, {"action", to_json(action)}});
        TurnRecord rec{ep.state, action, {}};
        if (kind == ChainKind::Stop) {
            rec.outcome.kind = ChainKind::Stop;
            ep.result.turn_log.push_back(std::move(rec));
            terminal = TerminalReason::Stopped;
            break;
        }
        ChainOutcome outcome;
        if (kind == ChainKind::Illegal) {
            outcome.kind = ChainKind::Illegal;
            ++ep.state.invalid_count;
        } else if (kind == ChainKind::Exploration) {
            outcome = ep.explore(action);
        } else {
            outcome = ep.manipulate(action);
        }
        rec.outcome = outcome;
        ep.result.turn_log.push_back(std::move(rec));
        if (outcome.exhausted) {
            terminal = TerminalReason::ExplorationExhausted;
            break;
        }
        if (kind != ChainKind::Illegal) apply_chain(ep.state, action, outcome);
        ++ep.state.turn;
        policy.observe(action, outcome);
    }

    GoalCheck check = check_goals(ep.scene, task.goals);
    EpisodeResult& r = ep.result;
    r.success = check.success;
    r.ssr = check.ssr;
    r.steps = ep.state.step_count;
    r.invalid = ep.state.invalid_count;
    r.turns = ep.state.turn;
    r.terminal = terminal;
    if (ep.record) ep.log("scheduler", Json{{"event", "end"},
                             {"success", r.success},
                             {"ssr", r.ssr},
                             {"steps", r.steps},
                             {"invalid", r.invalid},
                             {"turns", r.turns},
                             {"terminal", to_string(terminal)}});
    return std::move(ep.result);
}

}  // namespace capita
