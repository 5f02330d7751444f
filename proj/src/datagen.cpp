#include "capita/datagen.hpp"

#include <algorithm>
#include <cctype>
#include <exception>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

namespace capita {

std::string to_string(Target t) {
    switch (t) {
        case Target::Scheduler: return "scheduler";
        case Target::EG: return "EG";
        case Target::OG: return "OG";
        case Target::SD: return "SD";
        case Target::AD: return "AD";
        case Target::ES: return "ES";
    }
    return {};
}

Target parse_target(std::string_view s) {
    for (Target t : {Target::Scheduler, Target::EG, Target::OG, Target::SD, Target::AD, Target::ES})
        if (to_string(t) == s) return t;
    throw Error("parse", "unknown sample target: " + std::string(s));
}

Json to_json(const Sample& s) {
    return Json{{"schema", "capita/sample@1"},
                {"stage", s.stage},
                {"target", to_string(s.target)},
                {"input", s.input},
                {"ground_truth", s.ground_truth},
                {"task_id", s.task_id},
                {"episode_id", s.episode_id},
                {"index", s.index},
                {"cot", s.cot ? Json(*s.cot) : Json(nullptr)},
                {"extra", s.extra}};
}

Sample sample_from_json(const Json& j) {
    if (j.value("schema", "") != "capita/sample@1") throw Error("schema", "not a capita/sample@1 record");
    Sample s;
    s.stage = j.at("stage").get<int>();
    if (s.stage < 1 || s.stage > 3) throw Error("schema", "sample stage outside 1..3");
    s.target = parse_target(j.at("target").get<std::string>());
    s.input = j.at("input");
    s.ground_truth = j.at("ground_truth").get<std::string>();
    s.task_id = j.at("task_id").get<std::string>();
    s.episode_id = j.at("episode_id").get<std::string>();
    s.index = j.at("index").get<int>();
    if (!j.at("cot").is_null()) s.cot = j.at("cot").get<std::string>();
    s.extra = j.value("extra", Json());
    return s;
}

bool is_validation(const std::string& task_id) { return fnv1a(task_id) % 5 == 0; }

// ---------------------------------------------------------------- output grammars

namespace {

bool parses_as_grounding(const std::string& text) {
    Json j = Json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_array()) return false;
    for (const auto& e : j) {
        if (!e.is_object() || !e.contains("bbox_2d") || !e.contains("label")) return false;
        const Json& b = e.at("bbox_2d");
        if (!b.is_array() || b.size() != 4) return false;
        for (const auto& x : b)
            if (!x.is_number_integer()) return false;
        if (!e.at("label").is_string() || e.at("label").get<std::string>().empty()) return false;
    }
    return true;
}

bool parses_as_facts(const std::string& text) {
    static const std::regex whole(
        R"(^((There is a [a-z]+ (in|on) the [a-z]+\.|You are holding the [a-z]+\.|You are at the [a-z]+\.|The [a-z]+ is [a-z]+\.)( |$))*$)");
    return std::regex_match(text, whole);
}

bool parses_as_summary(const std::string& text) {
    static const std::regex ok(R"(^You successfully \S.*\.$)");
    static const std::regex failed(R"(^You failed to \S.*: ([a-z-]+)\.$)");
    if (std::regex_match(text, ok)) return true;
    std::smatch m;
    if (!std::regex_match(text, m, failed)) return false;
    try {
        return parse_reason(m[1].str()) != Reason::Ok;
    } catch (const Error&) {
        return false;
    }
}

bool parses_as_actions(const std::string& text) {
    try {
        for (const auto& a : parse_action_list(text))
            if (a.type == ActionType::Invalid) return false;
        return true;
    } catch (const Error&) {
        return false;
    }
}

}  // namespace

bool ground_truth_parses(const Sample& s) {
    std::string truth = s.ground_truth;
    if (s.extra.is_object() && s.extra.contains("augment")) {
        const Json& a = s.extra.at("augment");
        if (a.at("kind") == "rephrase" && s.target == Target::AD)
            truth = derephrase_actions(truth, AugmentationTables::load_default(), a.at("variant").get<std::size_t>());
    }
    switch (s.target) {
        case Target::Scheduler: return parse_scheduler_output(truth).has_value();
        case Target::EG: return truth == "exhausted" || parse_direction(truth).has_value();
        case Target::OG: return parses_as_grounding(truth);
        case Target::SD: return parses_as_facts(truth);
        case Target::AD: return parses_as_actions(truth);
        case Target::ES: return parses_as_summary(truth);
    }
    return false;
}

// ---------------------------------------------------------------- dataset

std::map<std::string, int> Dataset::counts() const {
    std::map<std::string, int> c;
    for (const auto& s : samples) {
        ++c[to_string(s.target)];
        ++c["stage" + std::to_string(s.stage)];
        if (s.extra.is_object() && s.extra.contains("augment")) ++c["augmented"];
    }
    return c;
}

void Dataset::append(const Dataset& other) {
    samples.insert(samples.end(), other.samples.begin(), other.samples.end());
    std::set<std::string> have;
    for (const auto& t : tasks) have.insert(t.id);
    for (const auto& t : other.tasks)
        if (have.insert(t.id).second) tasks.push_back(t);
    dropped_tasks += other.dropped_tasks;
}

void write_dataset(const Dataset& d, const std::string& path, const FeatureConfig& features) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("io", "cannot write dataset: " + path);
    Json tasks = Json::array();
    for (const auto& t : d.tasks) tasks.push_back(to_json(t));
    Json header{{"schema", "capita/dataset@1"},
                {"feature_digest", features.digest()},
                {"features", features.to_json()},
                {"samples", d.samples.size()},
                {"dropped_tasks", d.dropped_tasks},
                {"tasks", tasks}};
    out << header.dump() << '\n';
    for (const auto& s : d.samples) out << to_json(s).dump() << '\n';
    if (!out) throw Error("io", "write failed: " + path);
}

Dataset read_dataset(const std::string& path, const FeatureConfig& expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io", "cannot read dataset: " + path);
    std::string line;
    if (!std::getline(in, line)) throw Error("schema", "empty dataset file: " + path);
    Json header = Json::parse(line, nullptr, false);
    if (header.is_discarded() || header.value("schema", "") != "capita/dataset@1")
        throw Error("schema", "missing capita/dataset@1 header: " + path);
    std::string digest = header.at("feature_digest").get<std::string>();
    if (digest != expected.digest())
        throw Error("digest", "dataset feature digest " + digest + " does not match " + expected.digest());
    Dataset d;
    d.dropped_tasks = header.value("dropped_tasks", 0);
    for (const auto& t : header.at("tasks")) d.tasks.push_back(task_from_json(t));
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        Json j = Json::parse(line, nullptr, false);
        if (j.is_discarded()) throw Error("schema", "malformed sample line in " + path);
        d.samples.push_back(sample_from_json(j));
    }
    if (d.samples.size() != header.value("samples", d.samples.size()))
        throw Error("schema", "dataset truncated: " + path);
    return d;
}

// ---------------------------------------------------------------- CoT

namespace {

std::string subplan_text(const SubPlan& s) {
    if (s.kind == SubPlanKind::Exploration) return "find the " + s.query();
    return render(s.command);
}

std::string restate(const std::string& instruction) {
    std::string t = trim(instruction);
    while (!t.empty() && t.back() == '.') t.pop_back();
    if (!t.empty()) t[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(t[0])));
    return t;
}

}  // namespace

std::string render_cot(const std::string& instruction, const ProgressTracker& tracker) {
    std::string out = "The task is to " + restate(instruction) + ". The plan is:";
    for (std::size_t i = 0; i < tracker.plan.size(); ++i)
        out += (i ? "; " : " ") + std::to_string(i + 1) + ". " + subplan_text(tracker.plan[i]);
    out += ". Completed:";
    if (tracker.head == 0) out += " none";
    for (std::size_t i = 0; i < tracker.head && i < tracker.plan.size(); ++i)
        out += (i ? ", " : " ") + std::to_string(i + 1);
    out += ". Next: ";
    if (tracker.done()) {
        out += "stop.";
    } else {
        out += std::to_string(tracker.head + 1) + ". " + subplan_text(tracker.plan[tracker.head]) + ".";
    }
    return out;
}

// ---------------------------------------------------------------- stage helpers

namespace {

Json scheduler_input(const SchedulerState& s) {
    Json j = to_json(s);
    j.erase("step_count");
    j.erase("invalid_count");
    return j;
}

SchedulerState scheduler_state_from_input(const Json& input) {
    Json j = input;
    j["step_count"] = 0;
    j["invalid_count"] = 0;
    return scheduler_state_from_json(j);
}

Sample scheduler_sample(int stage, const TaskSpec& task, const std::string& episode, const SchedulerState& state,
                        const ProgressTracker& tracker, const SchedulerAction& label, bool with_cot) {
    Sample s;
    s.stage = stage;
    s.target = Target::Scheduler;
    s.input = scheduler_input(state);
    s.ground_truth = render_scheduler_output(label);
    s.task_id = task.id;
    s.episode_id = episode;
    s.index = state.turn;
    if (with_cot) s.cot = render_cot(task.instruction, tracker);
    s.extra = Json{{"tracker", to_json(tracker)}};
    return s;
}

std::string oracle_eg(const std::string& query, const CapabilityEvent& e) {
    EgMemory memory = *e.memory;
    Rng unused(0);
    EgResult r = eg(query, *e.candidates, memory, CapabilitySuite::oracle(), *e.scene, e.profile, unused);
    return r.direction ? render(*r.direction) : std::string("exhausted");
}

std::string oracle_og(const std::string& query, const CapabilityEvent& e) {
    Rng unused(0);
    return render(og(query, *e.observation, CapabilitySuite::oracle(), *e.scene, unused));
}

std::string oracle_es(const CapabilityEvent& e) {
    Rng unused(0);
    return es(e.query, *e.history, CapabilitySuite::oracle(), unused).text;
}

Target target_of(InvocationKind k) {
    switch (k) {
        case InvocationKind::EG: return Target::EG;
        case InvocationKind::OG: return Target::OG;
        case InvocationKind::SD: return Target::SD;
        case InvocationKind::ADExplore:
        case InvocationKind::ADManip: return Target::AD;
        case InvocationKind::ES: return Target::ES;
    }
    return Target::AD;
}

// Collects capability samples of one episode. relabel returns nullopt to discard.
struct Collector {
    int stage;
    const TaskSpec& task;
    std::string episode;
    std::function<std::optional<std::string>(const CapabilityEvent&)> relabel;
    std::vector<Sample> samples;
    int index = 0;

    void operator()(const CapabilityEvent& e) {
        int idx = index++;
        std::optional<std::string> truth = relabel(e);
        if (!truth) return;
        Sample s;
        s.stage = stage;
        s.target = target_of(e.kind);
        s.input = e.inputs;
        s.input["invocation"] = to_string(e.kind);
        s.ground_truth = *truth;
        s.task_id = task.id;
        s.episode_id = episode;
        s.index = idx;
        samples.push_back(std::move(s));
    }
};

std::string episode_id(int stage, const TaskSpec& task, std::uint64_t seed) {
    return "s" + std::to_string(stage) + "-" + task.id + "-" + hex64(seed);
}

template <class Fn>
std::vector<Dataset> per_task(std::size_t n, Fn fn) {
    std::vector<Dataset> parts(n);
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
    for (long i = 0; i < static_cast<long>(n); ++i) {
        try {
            parts[static_cast<std::size_t>(i)] = fn(static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical(capita_datagen_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return parts;
}

Dataset merge(const std::vector<Dataset>& parts) {
    Dataset d;
    for (const auto& p : parts) d.append(p);
    return d;
}

}  // namespace

// ---------------------------------------------------------------- stage 1

Dataset build_stage1(const std::vector<TaskSpec>& tasks, double p_eg, std::uint64_t seed) {
    CapabilitySuite backends = p_eg > 0.0 ? CapabilitySuite::noisy(p_eg, 0.0, 0.0) : CapabilitySuite::oracle();
    backends.validate();
    return merge(per_task(tasks.size(), [&](std::size_t i) {
        const TaskSpec& task = tasks[i];
        const std::uint64_t ep_seed = derive_seed(seed, i);
        Dataset d;
        d.tasks.push_back(task);
        Collector c{1, task, episode_id(1, task, ep_seed), {}, {}};
        c.relabel = [](const CapabilityEvent& e) -> std::optional<std::string> {
            switch (e.kind) {
                case InvocationKind::EG: return oracle_eg(e.query, e);
                case InvocationKind::OG: return oracle_og(e.query, e);
                case InvocationKind::ES: return oracle_es(e);
                default: return e.output;
            }
        };
        RunOptions opts;
        opts.record_transcript = false;
        opts.on_capability = [&](const CapabilityEvent& e) { c(e); };
        ExpertPlan plan = decompose(task);
        ExpertScheduler expert(plan);
        EpisodeResult r = run_episode(task, expert, backends, default_limits(task), ep_seed, opts);
        d.samples = std::move(c.samples);
        if (!r.success) {
            d.dropped_tasks = 1;
            return d;
        }
        for (const auto& turn : r.turn_log) {
            ProgressTracker tracker = replay_tracker(plan.steps, turn.state);
            d.samples.push_back(scheduler_sample(1, task, c.episode, turn.state, tracker, turn.action, true));
        }
        return d;
    }));
}

// ---------------------------------------------------------------- stage 2

Dataset build_stage2(const ParametricPolicy& policy, const std::vector<TaskSpec>& tasks, double tau,
                     const CapabilitySuite& backends, std::uint64_t seed, bool greedy) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw Error("config", "similarity threshold must lie in [0, 1]");
    backends.validate();
    const Lexicon& lex = default_lexicon();
    return merge(per_task(tasks.size(), [&](std::size_t i) {
        const TaskSpec& task = tasks[i];
        const std::uint64_t ep_seed = derive_seed(seed, i);
        const ExpertPlan plan = decompose(task);
        std::vector<std::string> targets;
        for (const auto& s : plan.steps)
            if (s.kind == SubPlanKind::Exploration) targets.push_back(s.query());
        auto match = [&](const std::string& query) -> std::optional<std::string> {
            auto q = lex.canonical_tokens(query);
            double best = -1.0;
            std::string hit;
            for (const auto& t : targets) {
                double sim = jaccard(q, lex.canonical_tokens(t));
                if (sim > best) {
                    best = sim;
                    hit = t;
                }
            }
            if (best < tau || hit.empty()) return std::nullopt;
            return hit;
        };
        Dataset d;
        d.tasks.push_back(task);
        Collector c{2, task, episode_id(2, task, ep_seed), {}, {}};
        c.relabel = [&](const CapabilityEvent& e) -> std::optional<std::string> {
            switch (e.kind) {
                case InvocationKind::EG:
                    if (auto m = match(e.query)) return oracle_eg(*m, e);
                    return std::nullopt;
                case InvocationKind::OG:
                    if (auto m = match(e.query)) return oracle_og(*m, e);
                    return std::nullopt;
                case InvocationKind::ES: return oracle_es(e);
                case InvocationKind::ADManip:
                    if (!parse_command(e.query, lex)) return std::nullopt;
                    return e.output;
                default: return e.output;
            }
        };
        RunOptions opts;
        opts.record_transcript = false;
        opts.on_capability = [&](const CapabilityEvent& e) { c(e); };
        LearnedScheduler sched(policy, greedy);
        EpisodeResult r = run_episode(task, sched, backends, default_limits(task), ep_seed, opts);
        d.samples = std::move(c.samples);
        for (const auto& turn : r.turn_log) {
            ProgressTracker tracker = replay_tracker(plan.steps, turn.state);
            d.samples.push_back(scheduler_sample(2, task, c.episode, turn.state, tracker, expert_action(tracker), true));
        }
        return d;
    }));
}

// ---------------------------------------------------------------- stage 3

Dataset build_stage3(const std::vector<TaskSpec>& tasks, const Stage3Config& config, std::uint64_t seed) {
    for (double p : {config.p_og, config.p_es})
        if (!(p >= 0.0 && p <= 1.0)) throw Error("config", "error probabilities must lie in [0, 1]");
    if (config.length_cap < 1) throw Error("config", "length cap must be positive");
    return merge(per_task(tasks.size(), [&](std::size_t i) {
        const TaskSpec& task = tasks[i];
        const std::uint64_t ep_seed = derive_seed(seed, i);
        const std::string episode = episode_id(3, task, ep_seed);
        Rng rng(ep_seed);
        const ExpertPlan plan = decompose(task);
        ProgressTracker tracker(plan.steps);
        SchedulerState state;
        state.instruction = task.instruction;
        Dataset d;
        d.tasks.push_back(task);
        const auto& reasons = failure_reasons();
        while (true) {
            if (state.turn >= config.length_cap) {
                d.dropped_tasks = 1;
                if (!d.samples.empty()) d.samples.back().extra["truncated"] = true;
                break;
            }
            SchedulerAction action = expert_action(tracker);
            d.samples.push_back(scheduler_sample(3, task, episode, state, tracker, action, false));
            if (action.stop) break;
            ChainOutcome out;
            const SubPlan& s = tracker.plan[tracker.head];
            out.kind = classify(action);
            if (s.kind == SubPlanKind::Exploration) {
                out.query = s.query();
                out.og_found = !bernoulli(rng, config.p_og);
                out.og_injected = !out.og_found;
                if (out.og_found) out.og_label = s.target_class;
            } else {
                out.query = render(s.command);
                out.es_success = !bernoulli(rng, config.p_es);
                out.es_injected = !out.es_success;
                out.es_reason = out.es_success ? Reason::Ok : reasons[uniform_index(rng, reasons.size())];
            }
            apply_chain(state, action, out);
            advance(tracker, action, out);
            ++state.turn;
        }
        return d;
    }));
}

// ---------------------------------------------------------------- augmentation

namespace {

std::vector<std::pair<std::string, std::string>> read_pairs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("io", "cannot read table: " + path);
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) throw Error("parse", "table line without tab in " + path);
        out.emplace_back(trim(line.substr(0, tab)), trim(line.substr(tab + 1)));
    }
    return out;
}

// Replaces whole alphabetic words.
std::string replace_words(const std::string& text, const std::map<std::string, std::string>& map) {
    std::string out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (!std::isalpha(static_cast<unsigned char>(text[i]))) {
            out.push_back(text[i++]);
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
        std::string word = text.substr(i, j - i);
        auto it = map.find(word);
        out += it == map.end() ? word : it->second;
        i = j;
    }
    return out;
}

Json replace_in_json(const Json& j, const std::map<std::string, std::string>& map) {
    if (j.is_string()) return replace_words(j.get<std::string>(), map);
    if (j.is_array()) {
        Json out = Json::array();
        for (const auto& e : j) out.push_back(replace_in_json(e, map));
        return out;
    }
    if (j.is_object()) {
        Json out = Json::object();
        for (auto it = j.begin(); it != j.end(); ++it)
            out[it.key()] = it.key() == "invocation" ? it.value() : replace_in_json(it.value(), map);
        return out;
    }
    return j;
}

std::string camel(const std::string& phrase) {
    std::string out;
    for (const auto& w : tokenize(phrase)) {
        if (w.empty()) continue;
        std::string t = w;
        t[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(t[0])));
        out += t;
    }
    return out;
}

bool all_alpha(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalpha(c); });
}

std::vector<std::string> verbs_longest_first(const AugmentationTables& t) {
    std::vector<std::string> v;
    for (const auto& [verb, _] : t.rephrase) v.push_back(verb);
    std::sort(v.begin(), v.end(), [](const std::string& a, const std::string& b) {
        return a.size() != b.size() ? a.size() > b.size() : a < b;
    });
    return v;
}

std::string map_leading(const std::string& action, const std::vector<std::pair<std::string, std::string>>& from_to) {
    for (const auto& [from, to] : from_to)
        if (action.size() > from.size() && starts_with(action, from) && action[from.size()] == ' ')
            return to + action.substr(from.size());
    return action;
}

std::string map_action_list(const std::string& list, const std::vector<std::pair<std::string, std::string>>& from_to) {
    std::string t = trim(list);
    if (t.size() < 2 || t.front() != '[' || t.back() != ']') throw Error("parse", "action list must be bracketed: " + t);
    std::string body = t.substr(1, t.size() - 2);
    if (trim(body).empty()) return t;
    std::string out = "[";
    bool first = true;
    for (const auto& part : split(body, ',')) {
        if (!first) out += ", ";
        first = false;
        out += map_leading(trim(part), from_to);
    }
    return out + "]";
}

std::vector<std::pair<std::string, std::string>> verb_pairs(const AugmentationTables& t, std::size_t variant, bool forward) {
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& verb : verbs_longest_first(t)) {
        const auto& vs = t.rephrase.at(verb);
        const std::string& alt = vs[variant % vs.size()];
        pairs.emplace_back(forward ? verb : alt, forward ? alt : verb);
    }
    if (!forward)
        std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
            return a.first.size() != b.first.size() ? a.first.size() > b.first.size() : a.first < b.first;
        });
    return pairs;
}

}  // namespace

AugmentationTables AugmentationTables::load_default() {
    static const AugmentationTables tables = [] {
        AugmentationTables t;
        for (const auto& [verb, alt] : read_pairs(data_dir() + "/action_rephrase.tsv")) t.rephrase[verb].push_back(alt);
        for (const auto& [cls, novel] : read_pairs(data_dir() + "/novel_classes.tsv")) t.novel[cls] = novel;
        t.lexicon = &default_lexicon();
        std::map<std::string, std::string> seen;
        for (const auto& [verb, alts] : t.rephrase)
            for (const auto& a : alts)
                if (!seen.emplace(a, verb).second || t.rephrase.count(a))
                    throw Error("config", "rephrase variant maps to more than one verb: " + a);
        return t;
    }();
    return tables;
}

std::size_t rephrase_variants(const AugmentationTables& t) {
    std::size_t n = 0;
    for (const auto& [_, vs] : t.rephrase) n = std::max(n, vs.size());
    return n;
}

std::string rephrase_actions(const std::string& actions, const AugmentationTables& t, std::size_t variant) {
    return map_action_list(actions, verb_pairs(t, variant, true));
}

std::string derephrase_actions(const std::string& actions, const AugmentationTables& t, std::size_t variant) {
    return map_action_list(actions, verb_pairs(t, variant, false));
}

namespace {

std::optional<Sample> rephrase_sample(const Sample& s, const AugmentationTables& t, Rng& rng) {
    std::size_t variant = uniform_index(rng, rephrase_variants(t));
    Sample out = s;
    if (s.target == Target::AD) {
        if (!parses_as_actions(s.ground_truth)) return std::nullopt;
        out.ground_truth = rephrase_actions(s.ground_truth, t, variant);
    } else if (s.target == Target::ES) {
        if (!s.input.contains("history")) return std::nullopt;
        auto pairs = verb_pairs(t, variant, true);
        for (auto& h : out.input["history"]) h["action"] = map_leading(h.at("action").get<std::string>(), pairs);
    } else {
        return std::nullopt;
    }
    out.extra["augment"] = Json{{"kind", "rephrase"}, {"variant", variant}};
    return out;
}

std::optional<Sample> synonym_sample(const Sample& s, const AugmentationTables& t, Rng& rng) {
    const Lexicon& lex = t.lexicon ? *t.lexicon : default_lexicon();
    Sample out = s;
    if (s.target == Target::OG) {
        auto classes = lex.canonicalize(s.input.at("query").get<std::string>());
        if (classes.size() != 1) return std::nullopt;
        std::vector<std::string> options;
        for (const auto& p : lex.phrases(classes[0])) {
            auto back = lex.canonicalize(p);
            if (back.size() == 1 && back[0] == classes[0]) options.push_back(p);
        }
        if (options.empty()) return std::nullopt;
        std::string q = options[uniform_index(rng, options.size())];
        out.input["query"] = q;
        out.extra["augment"] = Json{{"kind", "synonym"}, {"query", s.input.at("query")}};
        return out;
    }
    if (s.target != Target::EG || !s.input.contains("candidates")) return std::nullopt;
    std::set<std::string> present;
    for (const auto& c : s.input.at("candidates")) present.insert(class_of_id(c.get<std::string>()));
    auto query_classes = lex.canonicalize(s.input.at("query").get<std::string>());
    std::vector<std::pair<std::string, std::string>> options;  // class -> replacement
    for (const auto& cls : present) {
        if (std::find(query_classes.begin(), query_classes.end(), cls) != query_classes.end()) continue;
        for (const auto& p : lex.phrases(cls)) {
            std::string name = camel(p);
            if (!all_alpha(name) || name == cls || is_class(name) || present.count(name)) continue;
            options.emplace_back(cls, name);
        }
    }
    if (options.empty()) return std::nullopt;
    auto [cls, name] = options[uniform_index(rng, options.size())];
    std::map<std::string, std::string> map{{cls, name}};
    out.input = replace_in_json(s.input, map);
    out.ground_truth = replace_words(s.ground_truth, map);
    out.extra["augment"] = Json{{"kind", "synonym"}, {"map", Json{{name, cls}}}};
    return out;
}

std::optional<Sample> novel_sample(const Sample& s, const AugmentationTables& t) {
    if (s.target != Target::AD || !s.input.contains("command") || !parses_as_actions(s.ground_truth)) return std::nullopt;
    std::map<std::string, std::string> map;
    Json inverse = Json::object();
    for (const auto& a : parse_action_list(s.ground_truth))
        for (const std::string* id : {&a.target, &a.other}) {
            if (id->empty()) continue;
            std::string cls = class_of_id(*id);
            auto it = t.novel.find(cls);
            if (it == t.novel.end()) continue;
            map[cls] = it->second;
            map[display_name(cls)] = display_name(it->second);
            inverse[it->second] = cls;
        }
    if (map.empty()) return std::nullopt;
    Sample out = s;
    out.input = replace_in_json(s.input, map);
    out.ground_truth = replace_words(s.ground_truth, map);
    out.extra["augment"] = Json{{"kind", "novel"}, {"map", inverse}};
    out.extra["synthetic"] = true;
    return out;
}

}  // namespace

Dataset augment(const Dataset& d, const AugmentationTables& t, int factor, Rng& rng) {
    if (factor < 0) throw Error("config", "augmentation factor must be non-negative");
    Dataset out = d;
    for (const auto& s : d.samples) {
        if (s.extra.is_object() && s.extra.contains("augment")) continue;
        for (int k = 0; k < factor; ++k) {
            std::optional<Sample> a;
            switch (s.target) {
                case Target::EG:
                case Target::OG: a = synonym_sample(s, t, rng); break;
                case Target::ES: a = rephrase_sample(s, t, rng); break;
                case Target::AD:
                    a = bernoulli(rng, 0.5) ? novel_sample(s, t) : std::nullopt;
                    if (!a) a = rephrase_sample(s, t, rng);
                    break;
                default: break;
            }
            if (!a) break;
            a->index = s.index;
            a->extra["augment"]["copy"] = k;
            out.samples.push_back(std::move(*a));
        }
    }
    return out;
}

// ---------------------------------------------------------------- training set

TrainingSet to_training_set(const Dataset& d, const FeatureConfig& features, bool validation_split) {
    std::map<std::string, const TaskSpec*> by_id;
    for (const auto& t : d.tasks) by_id.emplace(t.id, &t);
    TrainingSet out;
    std::map<std::string, std::size_t> index;
    std::map<std::size_t, FeatureContext> contexts;
    TemplateCatalog catalog(features.slots);
    for (const auto& s : d.samples) {
        if (s.target != Target::Scheduler || is_validation(s.task_id) != validation_split) continue;
        auto it = by_id.find(s.task_id);
        if (it == by_id.end()) throw Error("schema", "sample references unknown task " + s.task_id);
        auto [slot, fresh] = index.emplace(s.task_id, 0);
        if (fresh) {
            slot->second = out.add_task(*it->second);
            contexts.emplace(slot->second, FeatureContext(out.plans[slot->second], features.slots));
        }
        const std::size_t ti = slot->second;
        StateRecord r;
        r.task = ti;
        r.state = scheduler_state_from_input(s.input);
        r.tracker = s.extra.is_object() && s.extra.contains("tracker") ? tracker_from_json(s.extra.at("tracker"))
                                                                       : replay_tracker(out.plans[ti].steps, r.state);
        r.features = featurize(r.state, out.tasks[ti], contexts.at(ti), r.tracker, features);
        auto label = parse_scheduler_output(s.ground_truth);
        if (!label) throw Error("schema", "unparseable scheduler label in task " + s.task_id);
        auto m = catalog.match(*label, out.plans[ti].key_objects);
        if (!m) throw Error("schema", "scheduler label outside the template catalog: " + s.ground_truth);
        r.expert = static_cast<int>(*m);
        out.states.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------- task generation

std::vector<TaskSpec> generate_tasks(std::uint64_t first_seed, int scenes, const std::vector<ActionProfile>& profiles,
                                     bool composites, std::uint64_t rng_seed) {
    if (scenes < 0) throw Error("config", "scene count must be non-negative");
    std::vector<TaskSpec> out;
    std::set<std::string> ids;
    auto keep = [&](const TaskSpec& t) {
        if (ids.insert(t.id).second) out.push_back(t);
    };
    for (int k = 0; k < scenes; ++k) {
        const std::uint64_t scene_seed = first_seed + static_cast<std::uint64_t>(k);
        SceneGraph scene = build_scene(scene_seed);
        for (std::size_t p = 0; p < profiles.size(); ++p) {
            Rng rng(derive_seed(rng_seed, scene_seed * 16 + p));
            for (Category c : base_categories()) {
                TaskSpec a;
                try {
                    a = instantiate_task(c, scene, rng, profiles[p]);
                } catch (const Error&) {
                    continue;
                }
                keep(a);
                if (!composites) continue;
                Category c2 = base_categories()[uniform_index(rng, base_categories().size())];
                TaskOverrides ov;
                ov.exclude_instances = a.components[0].instances;
                try {
                    keep(compose_tasks(a, instantiate_task(c2, scene, rng, profiles[p], ov)));
                } catch (const Error&) {
                }
            }
        }
    }
    return out;
}

}  // namespace capita
