#pragma once

#include <optional>
#include <string>
#include <vector>

#include "capita/policy.hpp"

namespace capita {

enum class Algo { Eipo, GrpoReturn, GrpoReward, Bc };
std::string to_string(Algo a);
Algo parse_algo(std::string_view s);

struct TrainConfig {
    Algo algo = Algo::Eipo;
    double gamma = 0.95;
    double epsilon = 0.2;
    int group = 8;
    int batch = 512;
    double lr = 0.05;
    int iterations = 120;
    int inner_epochs = 4;
    RewardMode reward_mode = RewardMode::ManipOnly;
    FeatureConfig features;
    // Probe evaluation (greedy rollouts under noisy capabilities).
    int probe_every = 10;
    double probe_p_og = 0.2;
    double probe_p_es = 0.1;
    // Capabilities used by online grpo-return rollouts.
    double rollout_p_og = 0.2;
    double rollout_p_es = 0.1;

    void validate() const;
    Json to_json() const;
};

// One offline training state.
struct StateRecord {
    std::size_t task = 0;  // index into TrainingSet::tasks
    SchedulerState state;
    ProgressTracker tracker;
    FeatureVector features;
    int expert = 0;  // template index of the expert action
};

struct TrainingSet {
    std::vector<TaskSpec> tasks;
    std::vector<ExpertPlan> plans;
    std::vector<StateRecord> states;
    std::size_t add_task(const TaskSpec& task);
};

// A = gamma V(s') + R - V(s), with s' from the approximation rule: only actions in
// the optimal set advance the tracker, everything else leaves it unchanged with R = 0.
double expert_advantage(const ProgressTracker& tracker, const SchedulerAction& action, double gamma, RewardMode mode,
                        const Lexicon& lex = default_lexicon());

std::vector<double> center_group(const std::vector<double>& advantages);
// (x - mean) / (std + 1e-8)
std::vector<double> normalize_group(const std::vector<double>& values);

// min(r A, clip(r, 1-eps, 1+eps) A)
double clipped_term(double ratio, double advantage, double epsilon);

struct AdvantageGroup {
    FeatureVector features;
    std::vector<int> actions;
    std::vector<double> old_logprob;
    std::vector<double> rewards;
    std::vector<double> advantages;  // raw
    std::vector<double> centered;    // used by the objective
};

struct ObjectiveResult {
    double value = 0.0;
    std::vector<double> grad;
    double clip_fraction = 0.0;
    int skipped = 0;  // non-finite ratios
    int samples = 0;
};

// Mean clipped surrogate over every sample of every group, with its gradient.
ObjectiveResult eipo_objective(const std::vector<AdvantageGroup>& groups, const ParametricPolicy& policy, double epsilon);

// Mean expert log-likelihood over the given states.
ObjectiveResult bc_objective(const TrainingSet& data, const std::vector<std::size_t>& batch, const ParametricPolicy& policy);

class Adam {
public:
    explicit Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    // Gradient ascent step.
    void step(std::vector<double>& theta, const std::vector<double>& grad);

private:
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
    std::vector<double> m_, v_;
};

struct MetricsRow {
    int iteration = 0;
    double objective = 0.0;
    double clip_fraction = 0.0;
    double mean_abs_adv = 0.0;
    std::optional<double> probe_sr;
};

std::string metrics_csv(const std::vector<MetricsRow>& rows);

struct TrainResult {
    ParametricPolicy policy;
    std::vector<MetricsRow> metrics;
    double final_probe_sr = 0.0;
};

// Greedy success rate of the policy on the probe tasks under noisy capabilities.
double probe_success_rate(const ParametricPolicy& policy, const std::vector<TaskSpec>& probe, double p_og, double p_es,
                          std::uint64_t seed);

// Offline algorithms (eipo, grpo-reward, bc) read data.states; grpo-return rolls out data.tasks online.
TrainResult train(const TrainConfig& config, const TrainingSet& data, const std::vector<TaskSpec>& probe,
                  std::uint64_t seed, const ParametricPolicy* init = nullptr);

// Fraction of states where the greedy action equals the expert's.
double action_match(const ParametricPolicy& policy, const TrainingSet& data);

}  // namespace capita
