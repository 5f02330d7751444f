#include "capita/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace capita {

// ---------------------------------------------------------------- features

int FeatureConfig::dim() const { return feat::hashed(slots) + 2 * hash_buckets; }

std::string FeatureConfig::digest() const {
    std::ostringstream s;
    s << "capita-features/1 slots=" << slots << " buckets=" << hash_buckets << " hidden=" << hidden << " dim=" << dim()
      << " categories=" << kBaseCategories << " manip=" << kManipCategories;
    return hex64(fnv1a(s.str()));
}

Json FeatureConfig::to_json() const { return Json{{"slots", slots}, {"hash_buckets", hash_buckets}, {"hidden", hidden}}; }

FeatureConfig FeatureConfig::from_json(const Json& j) {
    FeatureConfig c;
    c.slots = j.at("slots").get<int>();
    c.hash_buckets = j.at("hash_buckets").get<int>();
    c.hidden = j.at("hidden").get<int>();
    if (c.slots < 1 || c.hash_buckets < 1 || c.hidden < 0) throw Error("config", "invalid feature config");
    return c;
}

std::vector<double> FeatureVector::dense() const {
    std::vector<double> d(static_cast<std::size_t>(dim), 0.0);
    for (const auto& [i, v] : entries) d[static_cast<std::size_t>(i)] += v;
    return d;
}

bool FeatureVector::finite() const {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return std::isfinite(e.second); });
}

double FeatureVector::at(int index) const {
    double v = 0.0;
    for (const auto& [i, x] : entries)
        if (i == index) v += x;
    return v;
}

// ---------------------------------------------------------------- catalog

namespace {

constexpr ManipCategory kUnary[] = {ManipCategory::Grasp, ManipCategory::TurnOn, ManipCategory::Slice};
constexpr ManipCategory kBinary[] = {ManipCategory::Put, ManipCategory::HeatWith, ManipCategory::CoolWith,
                                     ManipCategory::CleanWith, ManipCategory::PutAndGrasp};

int slot_of(const std::string& cls, const std::vector<std::string>& keys) {
    auto it = std::find(keys.begin(), keys.end(), cls);
    return it == keys.end() ? -1 : static_cast<int>(it - keys.begin());
}

}  // namespace

TemplateCatalog::TemplateCatalog(int slots) : slots_(slots) {
    if (slots < 1) throw Error("config", "catalog needs at least one slot");
    for (int a = 0; a < slots; ++a) actions_.push_back({TemplateAction::Explore, ManipCategory::Grasp, a, -1});
    for (ManipCategory c : kUnary)
        for (int a = 0; a < slots; ++a) actions_.push_back({TemplateAction::Manip, c, a, -1});
    for (ManipCategory c : kBinary)
        for (int a = 0; a < slots; ++a)
            for (int b = 0; b < slots; ++b)
                if (a != b) actions_.push_back({TemplateAction::Manip, c, a, b});
    actions_.push_back({TemplateAction::Stop, ManipCategory::Grasp, -1, -1});
}

const TemplateAction& TemplateCatalog::at(std::size_t i) const {
    if (i >= actions_.size()) throw Error("policy", "action index outside catalog: " + std::to_string(i));
    return actions_[i];
}

std::optional<std::size_t> TemplateCatalog::index_of(const TemplateAction& t) const {
    auto it = std::find(actions_.begin(), actions_.end(), t);
    if (it == actions_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - actions_.begin());
}

std::string TemplateCatalog::name(std::size_t i) const {
    const TemplateAction& t = at(i);
    switch (t.kind) {
        case TemplateAction::Stop: return "stop";
        case TemplateAction::Explore: return "explore(s" + std::to_string(t.slot_a) + ")";
        case TemplateAction::Manip: {
            std::string n = to_string(t.category) + "(s" + std::to_string(t.slot_a);
            if (t.slot_b >= 0) n += ",s" + std::to_string(t.slot_b);
            return n + ")";
        }
    }
    return {};
}

SchedulerAction TemplateCatalog::bind(std::size_t i, const std::vector<std::string>& keys) const {
    const TemplateAction& t = at(i);
    auto bound = [&](int s) { return s >= 0 && static_cast<std::size_t>(s) < keys.size(); };
    switch (t.kind) {
        case TemplateAction::Stop: return SchedulerAction::halt();
        case TemplateAction::Explore:
            if (!bound(t.slot_a)) return SchedulerAction{};
            return SchedulerAction::explore(display_name(keys[static_cast<std::size_t>(t.slot_a)]));
        case TemplateAction::Manip: {
            if (!bound(t.slot_a) || (t.slot_b >= 0 && !bound(t.slot_b))) return SchedulerAction{};
            ManipCommand c{t.category, {keys[static_cast<std::size_t>(t.slot_a)]}};
            if (t.slot_b >= 0) c.args.push_back(keys[static_cast<std::size_t>(t.slot_b)]);
            return SchedulerAction::manipulate(render(c));
        }
    }
    return SchedulerAction{};
}

std::optional<std::size_t> TemplateCatalog::match(const SchedulerAction& a, const std::vector<std::string>& keys,
                                                  const Lexicon& lex) const {
    switch (classify(a)) {
        case ChainKind::Stop: return stop_index();
        case ChainKind::Exploration: {
            for (const auto& cls : lex.canonicalize(a.chain[0].query)) {
                int s = slot_of(cls, keys);
                if (s >= 0 && s < slots_) return index_of({TemplateAction::Explore, ManipCategory::Grasp, s, -1});
            }
            return std::nullopt;
        }
        case ChainKind::Manipulation: {
            auto cmd = parse_command(a.chain[1].query, lex);
            if (!cmd) return std::nullopt;
            int sa = slot_of(cmd->args.at(0), keys);
            int sb = cmd->args.size() > 1 ? slot_of(cmd->args[1], keys) : -1;
            if (sa < 0 || (cmd->args.size() > 1 && sb < 0)) return std::nullopt;
            return index_of({TemplateAction::Manip, cmd->category, sa, sb});
        }
        case ChainKind::Illegal: return std::nullopt;
    }
    return std::nullopt;
}

std::vector<std::size_t> TemplateCatalog::plan_indices(const ExpertPlan& plan) const {
    std::vector<std::size_t> out;
    ProgressTracker t(plan.steps);
    for (; !t.done(); ++t.head) {
        auto i = match(expert_action(t), plan.key_objects);
        out.push_back(i ? *i : size());
    }
    out.push_back(stop_index());
    return out;
}

// ---------------------------------------------------------------- featurize

FeatureContext::FeatureContext(ExpertPlan p, int slots) : plan(std::move(p)) {
    for (std::size_t i : TemplateCatalog(slots).plan_indices(plan)) shape += std::to_string(i) + ",";
}

std::optional<ManipCategory> command_category(const std::string& command, const Lexicon& lex) {
    using M = ManipCategory;
    if (command.find(" and grasp ") != std::string::npos) return M::PutAndGrasp;
    std::string_view c = command;
    for (auto [prefix, cat] : {std::pair{"grasp ", M::Grasp}, {"put ", M::Put}, {"turn on ", M::TurnOn}, {"slice ", M::Slice},
                               {"heat ", M::HeatWith}, {"cool ", M::CoolWith}, {"clean ", M::CleanWith}})
        if (c.substr(0, std::string_view(prefix).size()) == prefix) return cat;
    if (auto cmd = parse_command(command, lex)) return cmd->category;
    return std::nullopt;
}

FeatureVector featurize(const SchedulerState& state, const TaskSpec& task, const FeatureConfig& config) {
    FeatureContext ctx(task, config.slots);
    return featurize(state, task, ctx, replay_tracker(ctx.plan.steps, state), config);
}

FeatureVector featurize(const SchedulerState& state, const TaskSpec& task, const FeatureContext& context,
                        const ProgressTracker& tracker, const FeatureConfig& config) {
    const ExpertPlan& plan = context.plan;
    const int K = config.slots;
    const Lexicon& lex = default_lexicon();
    std::vector<double> head(static_cast<std::size_t>(feat::hashed(K)), 0.0);

    for (const auto& c : task.components)
        if (c.category != Category::Composite) head[static_cast<std::size_t>(c.category)] = 1.0;
    if (task.category == Category::Composite) head[feat::kCategory + kBaseCategories] = 1.0;

    const auto& m = state.memory;
    int es_counts[kManipCategories] = {};
    int last_og = -1;
    bool last_es_failed = false;
    for (std::size_t i = 0; i + 2 < m.size(); i += 3) {
        if (m[i].kind == InvocationKind::EG) {
            last_og = static_cast<int>(i + 2);
            last_es_failed = false;
        } else {
            bool ok = m[i + 2].feedback && m[i + 2].feedback->success;
            last_es_failed = !ok;
            if (ok)
                if (auto cat = command_category(m[i + 1].query, lex)) ++es_counts[static_cast<int>(*cat)];
        }
    }
    for (int c = 0; c < kManipCategories; ++c) head[static_cast<std::size_t>(feat::kEsSuccess + c)] = es_counts[c] / 4.0;

    if (last_og < 0) {
        head[feat::kLastOg] = 1.0;
    } else {
        const MemoryEntry& og = m[static_cast<std::size_t>(last_og)];
        bool found = og.feedback && og.feedback->success;
        head[static_cast<std::size_t>(feat::kLastOg + (found ? 1 : 2))] = 1.0;
        for (const auto& cls : lex.canonicalize(og.query)) {
            int s = slot_of(cls, plan.key_objects);
            if (s >= 0 && s < K) {
                head[static_cast<std::size_t>(feat::kOgSlot + s)] = 1.0;
                break;
            }
        }
        int streak = 0;
        for (std::size_t i = m.size(); i-- > 0;) {
            if (m[i].kind != InvocationKind::OG) continue;
            if (m[i].query != og.query || !m[i].feedback || m[i].feedback->success) break;
            ++streak;
        }
        head[static_cast<std::size_t>(feat::notfound_streak(K))] = streak / 4.0;
    }
    head[static_cast<std::size_t>(feat::last_es_failed(K))] = last_es_failed ? 1.0 : 0.0;
    head[static_cast<std::size_t>(feat::turn(K))] = state.turn / 100.0;

    head[static_cast<std::size_t>(feat::progress(K))] =
        plan.steps.empty() ? 1.0 : static_cast<double>(tracker.head) / static_cast<double>(plan.steps.size());
    head[static_cast<std::size_t>(feat::bias(K))] = 1.0;

    FeatureVector x;
    x.dim = config.dim();
    for (std::size_t i = 0; i < head.size(); ++i)
        if (head[i] != 0.0) x.entries.emplace_back(static_cast<int>(i), head[i]);

    // Plan shape (template sequence) crossed with progress, two hashed probes.
    std::string key = context.shape + "#" + std::to_string(tracker.head);
    const auto B = static_cast<std::uint64_t>(config.hash_buckets);
    const int base = feat::hashed(K);
    x.entries.emplace_back(base + static_cast<int>(fnv1a(key) % B), 1.0);
    x.entries.emplace_back(base + config.hash_buckets + static_cast<int>(splitmix64(fnv1a(key) ^ 0x5bd1e995ull) % B), 1.0);
    return x;
}

// ---------------------------------------------------------------- parametric policy

ParametricPolicy::ParametricPolicy(FeatureConfig config, int actions, double temperature)
    : config_(config), actions_(actions), features_(config.dim()), temperature_(temperature) {
    if (actions < 2) throw Error("config", "policy needs at least two actions");
    std::size_t D = static_cast<std::size_t>(features_), A = static_cast<std::size_t>(actions_);
    std::size_t H = static_cast<std::size_t>(config_.hidden);
    theta_.assign(H == 0 ? D * A : D * H + H + H * A, 0.0);
}

void ParametricPolicy::init_hidden(Rng& rng, double scale) {
    if (config_.hidden == 0) return;
    std::size_t D = static_cast<std::size_t>(features_), H = static_cast<std::size_t>(config_.hidden);
    std::normal_distribution<double> n(0.0, scale);
    for (std::size_t i = 0; i < D * H; ++i) theta_[i] = n(rng);
}

void ParametricPolicy::check_action(int action) const {
    if (action < 0 || action >= actions_) throw Error("policy", "action index outside catalog: " + std::to_string(action));
}

void ParametricPolicy::forward(const FeatureVector& x, std::vector<double>& z, std::vector<double>* hidden) const {
    if (x.dim != features_) throw Error("policy", "feature dimension mismatch");
    const std::size_t A = static_cast<std::size_t>(actions_);
    z.assign(A, 0.0);
    const double inv_t = temperature_ > 0.0 ? 1.0 / temperature_ : 1.0;
    if (config_.hidden == 0) {
        for (const auto& [j, v] : x.entries) {
            const double* w = &theta_[static_cast<std::size_t>(j) * A];
            for (std::size_t a = 0; a < A; ++a) z[a] += w[a] * v;
        }
    } else {
        const std::size_t H = static_cast<std::size_t>(config_.hidden);
        const std::size_t D = static_cast<std::size_t>(features_);
        std::vector<double> h(theta_.begin() + static_cast<std::ptrdiff_t>(D * H),
                              theta_.begin() + static_cast<std::ptrdiff_t>(D * H + H));
        for (const auto& [j, v] : x.entries) {
            const double* u = &theta_[static_cast<std::size_t>(j) * H];
            for (std::size_t k = 0; k < H; ++k) h[k] += u[k] * v;
        }
        for (auto& e : h) e = std::tanh(e);
        const double* V = &theta_[D * H + H];
        for (std::size_t k = 0; k < H; ++k)
            for (std::size_t a = 0; a < A; ++a) z[a] += V[k * A + a] * h[k];
        if (hidden) *hidden = std::move(h);
    }
    for (auto& e : z) e *= inv_t;
}

std::vector<double> ParametricPolicy::logits(const FeatureVector& x) const {
    std::vector<double> z;
    forward(x, z, nullptr);
    return z;
}

std::vector<double> ParametricPolicy::log_probs(const FeatureVector& x) const {
    std::vector<double> z = logits(x);
    double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double e : z) s += std::exp(e - mx);
    double lse = mx + std::log(s);
    for (auto& e : z) e -= lse;
    return z;
}

double ParametricPolicy::logprob(const FeatureVector& x, int action) const {
    check_action(action);
    return log_probs(x)[static_cast<std::size_t>(action)];
}

int ParametricPolicy::argmax(const FeatureVector& x) const {
    std::vector<double> z = logits(x);
    return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

int ParametricPolicy::sample(const FeatureVector& x, Rng& rng) const {
    if (temperature_ <= 0.0) return argmax(x);
    std::vector<double> lp = log_probs(x);
    double u = uniform01(rng);
    double c = 0.0;
    for (std::size_t a = 0; a < lp.size(); ++a) {
        c += std::exp(lp[a]);
        if (u < c) return static_cast<int>(a);
    }
    return static_cast<int>(lp.size()) - 1;
}

void ParametricPolicy::accumulate_grad_logprob(const FeatureVector& x, int action, double scale,
                                               std::vector<double>& grad) const {
    check_action(action);
    if (grad.size() != theta_.size()) grad.assign(theta_.size(), 0.0);
    const std::size_t A = static_cast<std::size_t>(actions_);
    std::vector<double> z, h;
    forward(x, z, &h);
    double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double e : z) s += std::exp(e - mx);
    // d logprob / d z_a = 1[a = action] - p_a, chained through the temperature.
    const double inv_t = temperature_ > 0.0 ? 1.0 / temperature_ : 1.0;
    std::vector<double> g(A);
    for (std::size_t a = 0; a < A; ++a) g[a] = ((a == static_cast<std::size_t>(action) ? 1.0 : 0.0) - std::exp(z[a] - mx) / s) * inv_t * scale;
    if (config_.hidden == 0) {
        for (const auto& [j, v] : x.entries) {
            double* w = &grad[static_cast<std::size_t>(j) * A];
            for (std::size_t a = 0; a < A; ++a) w[a] += g[a] * v;
        }
        return;
    }
    const std::size_t H = static_cast<std::size_t>(config_.hidden);
    const std::size_t D = static_cast<std::size_t>(features_);
    const double* V = &theta_[D * H + H];
    double* gV = &grad[D * H + H];
    std::vector<double> delta(H, 0.0);
    for (std::size_t k = 0; k < H; ++k) {
        double d = 0.0;
        for (std::size_t a = 0; a < A; ++a) {
            gV[k * A + a] += g[a] * h[k];
            d += g[a] * V[k * A + a];
        }
        delta[k] = d * (1.0 - h[k] * h[k]);
        grad[D * H + k] += delta[k];
    }
    for (const auto& [j, v] : x.entries) {
        double* u = &grad[static_cast<std::size_t>(j) * H];
        for (std::size_t k = 0; k < H; ++k) u[k] += delta[k] * v;
    }
}

std::vector<double> ParametricPolicy::grad_logprob(const FeatureVector& x, int action) const {
    std::vector<double> g(theta_.size(), 0.0);
    accumulate_grad_logprob(x, action, 1.0, g);
    return g;
}

std::string ParametricPolicy::param_digest() const {
    std::string_view bytes(reinterpret_cast<const char*>(theta_.data()), theta_.size() * sizeof(double));
    return hex64(fnv1a(bytes));
}

Json ParametricPolicy::snapshot() const {
    // Sparse dump: index/value pairs of the non-zero parameters.
    Json idx = Json::array(), val = Json::array();
    for (std::size_t i = 0; i < theta_.size(); ++i)
        if (theta_[i] != 0.0) {
            idx.push_back(i);
            val.push_back(theta_[i]);
        }
    return Json{{"schema", "capita/policy@1"},
                {"feature_config", config_.to_json()},
                {"feature_digest", config_.digest()},
                {"actions", actions_},
                {"temperature", temperature_},
                {"param_count", theta_.size()},
                {"param_digest", param_digest()},
                {"index", idx},
                {"value", val}};
}

ParametricPolicy ParametricPolicy::from_snapshot(const Json& j, const FeatureConfig& expected) {
    if (j.value("schema", "") != "capita/policy@1") throw Error("schema", "not a capita/policy@1 snapshot");
    FeatureConfig stored = FeatureConfig::from_json(j.at("feature_config"));
    std::string digest = j.at("feature_digest").get<std::string>();
    if (digest != stored.digest() || digest != expected.digest())
        throw Error("digest", "feature config digest mismatch: snapshot " + digest + ", expected " + expected.digest());
    ParametricPolicy p(stored, j.at("actions").get<int>(), j.at("temperature").get<double>());
    if (j.at("param_count").get<std::size_t>() != p.theta_.size()) throw Error("schema", "parameter count mismatch");
    const auto& idx = j.at("index");
    const auto& val = j.at("value");
    if (idx.size() != val.size()) throw Error("schema", "snapshot index/value length mismatch");
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::size_t k = idx[i].get<std::size_t>();
        if (k >= p.theta_.size()) throw Error("schema", "snapshot index out of range");
        p.theta_[k] = val[i].get<double>();
    }
    if (p.param_digest() != j.at("param_digest").get<std::string>()) throw Error("digest", "parameter digest mismatch");
    return p;
}

void ParametricPolicy::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("io", "cannot write " + path);
    out << snapshot().dump() << '\n';
}

ParametricPolicy ParametricPolicy::load(const std::string& path, const FeatureConfig& expected) {
    std::ifstream in(path);
    if (!in) throw Error("io", "cannot read " + path);
    Json j;
    try {
        in >> j;
    } catch (const Json::exception& e) {
        throw Error("parse", path + ": " + e.what());
    }
    return from_snapshot(j, expected);
}

ParametricPolicy uniform_policy(const FeatureConfig& config) {
    return ParametricPolicy(config, static_cast<int>(TemplateCatalog(config.slots).size()));
}

// ---------------------------------------------------------------- learned scheduler

LearnedScheduler::LearnedScheduler(const ParametricPolicy& policy, bool greedy)
    : policy_(policy), catalog_(policy.config().slots), greedy_(greedy) {
    if (static_cast<std::size_t>(policy.actions()) != catalog_.size())
        throw Error("policy", "policy action count does not match the template catalog");
}

void LearnedScheduler::begin(const TaskSpec& task) {
    context_ = FeatureContext(task, policy_.config().slots);
    tracker_ = ProgressTracker(context_.plan.steps);
    steps_.clear();
}

void LearnedScheduler::observe(const SchedulerAction& action, const ChainOutcome& outcome) {
    advance(tracker_, action, outcome);
}

SchedulerAction LearnedScheduler::act(const SchedulerState& state, const TaskSpec& task, Rng& rng) {
    PolicyStep s;
    s.features = featurize(state, task, context_, tracker_, policy_.config());
    s.action = greedy_ ? policy_.argmax(s.features) : policy_.sample(s.features, rng);
    s.logprob = policy_.logprob(s.features, s.action);
    SchedulerAction a = catalog_.bind(static_cast<std::size_t>(s.action), context_.plan.key_objects);
    steps_.push_back(std::move(s));
    return a;
}

Json LearnedScheduler::descriptor() const {
    return Json{{"kind", "learned"},
                {"greedy", greedy_},
                {"feature_digest", policy_.config().digest()},
                {"param_digest", digest_ ? *digest_ : *(digest_ = policy_.param_digest())},
                {"temperature", policy_.temperature()}};
}

}  // namespace capita
