#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "capita/expert.hpp"
#include "capita/scheduler.hpp"

namespace capita {

struct FeatureConfig {
    int slots = 6;            // key-object slots bound by the template catalog
    int hash_buckets = 1024;  // per probe of the (plan shape, progress) cross feature
    int hidden = 0;           // 0 = linear softmax
    bool operator==(const FeatureConfig&) const = default;

    int dim() const;
    std::string digest() const;
    Json to_json() const;
    static FeatureConfig from_json(const Json& j);
};

// Fixed-length feature vector stored sparsely.
struct FeatureVector {
    int dim = 0;
    std::vector<std::pair<int, double>> entries;
    std::vector<double> dense() const;
    bool finite() const;
    double at(int index) const;
};

// Dense layout of the leading features.
namespace feat {
inline constexpr int kCategory = 0;        // 7 base categories (multi-hot) + composite flag
inline constexpr int kEsSuccess = 8;       // ES successes per manipulation category, scaled by 1/4
inline constexpr int kLastOg = 16;         // none / found / not-found
inline constexpr int kOgSlot = 19;         // slot of the last OG query (slots entries)
inline int notfound_streak(int slots) { return kOgSlot + slots; }
inline int last_es_failed(int slots) { return kOgSlot + slots + 1; }
inline int turn(int slots) { return kOgSlot + slots + 2; }
inline int progress(int slots) { return kOgSlot + slots + 3; }
inline int bias(int slots) { return kOgSlot + slots + 4; }
inline int hashed(int slots) { return kOgSlot + slots + 5; }
}  // namespace feat

struct TemplateAction {
    enum Kind { Explore, Manip, Stop } kind = Stop;
    ManipCategory category = ManipCategory::Grasp;
    int slot_a = -1;
    int slot_b = -1;
    bool operator==(const TemplateAction&) const = default;
};

// Finite action set: one exploration per slot, unary manipulations per slot,
// binary manipulations per ordered slot pair, and Stop.
class TemplateCatalog {
public:
    explicit TemplateCatalog(int slots = 6);
    int slots() const { return slots_; }
    std::size_t size() const { return actions_.size(); }
    const TemplateAction& at(std::size_t i) const;
    std::size_t stop_index() const { return actions_.size() - 1; }
    std::optional<std::size_t> index_of(const TemplateAction& t) const;
    std::string name(std::size_t i) const;
    // Legal scheduler action for the slot binding, or an empty (illegal) chain when a slot is unbound.
    SchedulerAction bind(std::size_t i, const std::vector<std::string>& key_objects) const;
    std::optional<std::size_t> match(const SchedulerAction& a, const std::vector<std::string>& key_objects,
                                     const Lexicon& lex = default_lexicon()) const;
    // Template index of every plan step followed by Stop.
    std::vector<std::size_t> plan_indices(const ExpertPlan& plan) const;

private:
    int slots_;
    std::vector<TemplateAction> actions_;
};

// Per-task inputs of featurize: the decomposition and its template-shape key.
struct FeatureContext {
    ExpertPlan plan;
    std::string shape;
    FeatureContext() = default;
    FeatureContext(ExpertPlan plan, int slots);
    FeatureContext(const TaskSpec& task, int slots) : FeatureContext(decompose(task), slots) {}
};

FeatureVector featurize(const SchedulerState& state, const TaskSpec& task, const FeatureConfig& config);
// tracker must equal replay_tracker(context.plan.steps, state).
FeatureVector featurize(const SchedulerState& state, const TaskSpec& task, const FeatureContext& context,
                        const ProgressTracker& tracker, const FeatureConfig& config);

// Manipulation category of a command string; canonical renderings avoid the lexicon.
std::optional<ManipCategory> command_category(const std::string& command, const Lexicon& lex = default_lexicon());

// Softmax over template logits. Linear: logits = W x. Hidden: logits = V tanh(U x).
class ParametricPolicy {
public:
    ParametricPolicy() = default;
    ParametricPolicy(FeatureConfig config, int actions, double temperature = 1.0);

    const FeatureConfig& config() const { return config_; }
    int actions() const { return actions_; }
    int features() const { return features_; }
    double temperature() const { return temperature_; }
    void set_temperature(double t) { temperature_ = t; }
    std::vector<double>& params() { return theta_; }
    const std::vector<double>& params() const { return theta_; }

    // Hidden variant only; the linear policy starts at zero.
    void init_hidden(Rng& rng, double scale = 0.1);

    std::vector<double> logits(const FeatureVector& x) const;
    std::vector<double> log_probs(const FeatureVector& x) const;
    double logprob(const FeatureVector& x, int action) const;
    int argmax(const FeatureVector& x) const;
    // Temperature <= 0 samples the argmax.
    int sample(const FeatureVector& x, Rng& rng) const;
    std::vector<double> grad_logprob(const FeatureVector& x, int action) const;
    // grad += scale * d logprob(action) / d theta
    void accumulate_grad_logprob(const FeatureVector& x, int action, double scale, std::vector<double>& grad) const;

    std::string param_digest() const;
    Json snapshot() const;
    static ParametricPolicy from_snapshot(const Json& j, const FeatureConfig& expected);
    void save(const std::string& path) const;
    static ParametricPolicy load(const std::string& path, const FeatureConfig& expected);

private:
    void check_action(int action) const;
    void forward(const FeatureVector& x, std::vector<double>& logits, std::vector<double>* hidden) const;

    FeatureConfig config_;
    int actions_ = 0;
    int features_ = 0;
    double temperature_ = 1.0;
    std::vector<double> theta_;
};

struct PolicyStep {
    FeatureVector features;
    int action = 0;
    double logprob = 0.0;
};

class LearnedScheduler : public SchedulerPolicy {
public:
    LearnedScheduler(const ParametricPolicy& policy, bool greedy);
    void begin(const TaskSpec& task) override;
    SchedulerAction act(const SchedulerState& state, const TaskSpec& task, Rng& rng) override;
    void observe(const SchedulerAction& action, const ChainOutcome& outcome) override;
    Json descriptor() const override;
    const std::vector<PolicyStep>& trajectory() const { return steps_; }

private:
    const ParametricPolicy& policy_;
    TemplateCatalog catalog_;
    bool greedy_;
    mutable std::optional<std::string> digest_;
    FeatureContext context_;
    ProgressTracker tracker_;
    std::vector<PolicyStep> steps_;
};

// Uniform over the catalog (a zero-weight linear policy).
ParametricPolicy uniform_policy(const FeatureConfig& config = {});

}  // namespace capita
