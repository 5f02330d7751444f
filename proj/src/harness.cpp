#include "capita/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace capita {

// ---------------------------------------------------------------- config

Config Config::parse(const std::string& text) {
    Config c;
    std::istringstream in(text);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string t = trim(line);
        if (t.empty()) continue;
        auto eq = t.find('=');
        if (eq == std::string::npos) throw Error("config", "line " + std::to_string(n) + ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw Error("config", "line " + std::to_string(n) + ": empty key");
        if (c.values_.count(key)) throw Error("config", "line " + std::to_string(n) + ": duplicate key " + key);
        c.values_[key] = value;
    }
    return c;
}

Config Config::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("io", "cannot read config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

namespace {

template <class T, class Fn>
T typed(const std::map<std::string, std::string>& values, const std::string& key, T fallback, Fn convert) {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    try {
        std::size_t used = 0;
        T v = convert(it->second, used);
        if (used != it->second.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw Error("config", "bad value for " + key + ": " + it->second);
    }
}

}  // namespace

double Config::get_double(const std::string& key, double fallback) const {
    return typed(values_, key, fallback, [](const std::string& s, std::size_t& used) { return std::stod(s, &used); });
}

int Config::get_int(const std::string& key, int fallback) const {
    return typed(values_, key, fallback, [](const std::string& s, std::size_t& used) { return std::stoi(s, &used); });
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
    return typed(values_, key, fallback, [](const std::string& s, std::size_t& used) -> std::uint64_t {
        if (!s.empty() && s[0] == '-') throw std::invalid_argument("negative");
        return std::stoull(s, &used);
    });
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::string v = to_lower(it->second);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw Error("config", "bad value for " + key + ": " + it->second);
}

void Config::require_known(const std::vector<std::string>& allowed) const {
    for (const auto& [k, _] : values_)
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) throw Error("config", "unknown config key: " + k);
}

std::string Config::digest() const {
    std::string body;
    for (const auto& [k, v] : values_) body += k + "=" + v + "\n";
    return hex64(fnv1a(body));
}

// ---------------------------------------------------------------- attribution

std::string to_string(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::ObjectRecognition: return "object-recognition";
        case ErrorCategory::OpenVocabularyReferring: return "open-vocabulary-referring";
        case ErrorCategory::InstructionUnderstanding: return "instruction-understanding";
        case ErrorCategory::Exploration: return "exploration";
        case ErrorCategory::ActionPrecondition: return "action-precondition";
        case ErrorCategory::LowLevelControl: return "low-level-control";
        case ErrorCategory::HistorySummarization: return "history-summarization";
        case ErrorCategory::Ambiguity: return "ambiguity";
    }
    return {};
}

const std::vector<ErrorCategory>& error_categories() {
    static const std::vector<ErrorCategory> all = {
        ErrorCategory::ObjectRecognition,  ErrorCategory::OpenVocabularyReferring, ErrorCategory::InstructionUnderstanding,
        ErrorCategory::Exploration,        ErrorCategory::ActionPrecondition,      ErrorCategory::LowLevelControl,
        ErrorCategory::HistorySummarization, ErrorCategory::Ambiguity};
    return all;
}

ErrorAttribution attribute_error(const Transcript& transcript) {
    const Json* begin = nullptr;
    const Json* end = nullptr;
    int end_line = -1;
    for (const auto& l : transcript.lines) {
        if (l.actor != "scheduler") continue;
        const std::string ev = l.payload.value("event", "");
        if (ev == "begin") begin = &l.payload;
        if (ev == "end") {
            end = &l.payload;
            end_line = l.t;
        }
    }
    if (!begin || !end) throw Error("attribution", "transcript lacks begin/end lines");
    if (end->at("success").get<bool>()) throw Error("attribution", "transcript of a successful episode");

    std::set<std::string> goal_classes;
    TaskSpec task = task_from_json(begin->at("task"));
    for (const auto& g : task.goals) goal_classes.insert(g.cls);
    for (const auto& c : task.components)
        if (!c.object.empty()) goal_classes.insert(c.object);

    const std::string terminal = end->at("terminal").get<std::string>();
    if (terminal == "exploration-exhausted") return {ErrorCategory::Exploration, end_line};

    int og_flip = -1, es_flip = -1, last_es = -1;
    for (const auto& l : transcript.lines) {
        if (l.actor != "capability") continue;
        const std::string kind = l.payload.value("kind", "");
        const bool injected = l.payload.value("injected", false);
        if (kind == "OG" && injected && og_flip < 0) {
            for (const auto& c : l.payload.value("classes", Json::array()))
                if (goal_classes.count(c.get<std::string>())) og_flip = l.t;
        }
        if (kind == "ES") {
            last_es = l.t;
            if (injected && es_flip < 0) es_flip = l.t;
        }
    }
    if (og_flip >= 0) return {ErrorCategory::ObjectRecognition, og_flip};
    if (es_flip >= 0) return {ErrorCategory::HistorySummarization, es_flip};
    if (last_es >= 0) {
        const Json& p = transcript.lines[static_cast<std::size_t>(last_es)].payload;
        if (!p.value("success", true)) return {ErrorCategory::ActionPrecondition, last_es};
    }
    if (terminal == "stopped") return {ErrorCategory::InstructionUnderstanding, end_line};
    return {ErrorCategory::LowLevelControl, end_line};
}

// ---------------------------------------------------------------- evaluation

std::string EvalReport::csv() const {
    std::string out = "category,episodes,successes,sr,ssr\n";
    char buf[256];
    auto row = [&](const std::string& name, const CategoryStats& s) {
        std::snprintf(buf, sizeof buf, "%s,%d,%d,%.6f,%.6f\n", name.c_str(), s.episodes, s.successes, s.sr(), s.ssr());
        out += buf;
    };
    for (const auto& [name, s] : categories) row(name, s);
    row("all", aggregate);
    return out;
}

Json EvalReport::summary_json() const {
    Json hist = Json::object();
    for (ErrorCategory c : error_categories()) {
        auto it = attribution.find(to_string(c));
        hist[to_string(c)] = it == attribution.end() ? 0 : it->second;
    }
    return Json{{"episodes", aggregate.episodes},
                {"successes", aggregate.successes},
                {"sr", aggregate.sr()},
                {"ssr", aggregate.ssr()},
                {"seeds", seeds},
                {"config_digest", config_digest},
                {"error_attribution", hist}};
}

EvalReport evaluate(const PolicyFactory& make_policy, const CapabilitySuite& backends, const std::vector<TaskSpec>& tasks,
                    const std::vector<std::uint64_t>& seeds, const std::string& config_digest, const EvalOptions& options) {
    if (tasks.empty()) throw Error("config", "evaluation needs at least one task");
    if (seeds.empty()) throw Error("config", "evaluation needs at least one seed");
    std::vector<EpisodeJob> jobs;
    for (std::uint64_t s : seeds)
        for (std::size_t i = 0; i < tasks.size(); ++i) jobs.push_back({i, episode_seed(s, i)});
    RunOptions run;
    run.record_transcript = true;
    run.policy_descriptor = make_policy()->descriptor();
    auto limits = [](const TaskSpec& t) { return default_limits(t); };
    std::vector<EpisodeResult> results = options.parallel
                                             ? run_episodes_parallel(tasks, jobs, make_policy, backends, limits, run)
                                             : run_episodes_serial(tasks, jobs, make_policy, backends, limits, run);
    EvalReport rep;
    rep.seeds = seeds;
    rep.config_digest = config_digest;
    for (std::size_t k = 0; k < results.size(); ++k) {
        const EpisodeResult& r = results[k];
        const TaskSpec& t = tasks[jobs[k].task];
        for (CategoryStats* s : {&rep.categories[to_string(t.category)], &rep.aggregate}) {
            ++s->episodes;
            s->successes += r.success ? 1 : 0;
            s->ssr_sum += r.ssr;
        }
        if (!r.success) ++rep.attribution[to_string(attribute_error(r.transcript).category)];
    }
    if (options.keep_episodes) rep.episodes = std::move(results);
    return rep;
}

// ---------------------------------------------------------------- replay

ReplayResult replay(const Transcript& transcript, const ParametricPolicy* policy) {
    if (transcript.lines.empty()) throw Error("replay", "empty transcript");
    const Json& head = transcript.lines.front().payload;
    if (transcript.lines.front().actor != "scheduler" || head.value("event", "") != "begin")
        throw Error("replay", "transcript does not start with a begin line");
    TaskSpec task = task_from_json(head.at("task"));
    const Json& desc = head.at("policy");
    const Json& bk = head.at("backends");
    CapabilitySuite backends;
    const std::string kind = bk.at("kind").get<std::string>();
    if (kind == "oracle") {
        backends = CapabilitySuite::oracle();
    } else if (kind == "noisy-oracle") {
        backends = CapabilitySuite::noisy(bk.at("p_eg").get<double>(), bk.at("p_og").get<double>(), bk.at("p_es").get<double>());
    } else {
        throw Error("replay", "backend kind cannot be replayed: " + kind);
    }
    EpisodeLimits limits = EpisodeLimits::from_json(head.at("limits"));
    const std::uint64_t seed = head.at("rng_seed").get<std::uint64_t>();

    std::unique_ptr<SchedulerPolicy> sched;
    std::optional<ParametricPolicy> local;
    const std::string pk = desc.value("kind", "");
    if (pk == "expert") {
        sched = std::make_unique<ExpertScheduler>();
    } else if (pk == "learned") {
        if (!policy) throw Error("replay", "learned-policy transcript needs the policy snapshot");
        if (policy->config().digest() != desc.at("feature_digest").get<std::string>() ||
            policy->param_digest() != desc.at("param_digest").get<std::string>())
            throw Error("digest", "policy snapshot does not match the transcript");
        local = *policy;
        local->set_temperature(desc.at("temperature").get<double>());
        sched = std::make_unique<LearnedScheduler>(*local, desc.at("greedy").get<bool>());
    } else {
        throw Error("replay", "unknown policy kind in transcript: " + pk);
    }
    RunOptions opts;
    opts.policy_descriptor = desc;
    EpisodeResult r = run_episode(task, *sched, backends, limits, seed, opts);
    ReplayResult out;
    out.regenerated = r.transcript.to_jsonl();
    out.identical = out.regenerated == transcript.to_jsonl();
    const auto& got = r.transcript.lines;
    const auto& want = transcript.lines;
    for (std::size_t i = 0; !out.identical && i < std::max(got.size(), want.size()); ++i) {
        if (i >= got.size() || i >= want.size() || got[i].actor != want[i].actor || got[i].payload != want[i].payload) {
            out.first_difference = static_cast<int>(i);
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------- task files

std::vector<TaskSpec> read_tasks(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("io", "cannot read tasks: " + path);
    std::vector<TaskSpec> out;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        Json j = Json::parse(line, nullptr, false);
        if (j.is_discarded()) throw Error("schema", "malformed task line in " + path);
        out.push_back(task_from_json(j));
    }
    return out;
}

void write_tasks(const std::vector<TaskSpec>& tasks, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("io", "cannot write tasks: " + path);
    for (const auto& t : tasks) out << to_json(t).dump() << '\n';
    if (!out) throw Error("io", "write failed: " + path);
}

}  // namespace capita
