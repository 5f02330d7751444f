#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "capita/policy.hpp"
#include "capita/trainer.hpp"

namespace capita {

enum class Target { Scheduler, EG, OG, SD, AD, ES };
std::string to_string(Target t);
Target parse_target(std::string_view s);

struct Sample {
    int stage = 1;
    Target target = Target::Scheduler;
    Json input;
    std::string ground_truth;
    std::string task_id;
    std::string episode_id;
    int index = 0;  // invocation index within the episode
    std::optional<std::string> cot;
    Json extra;  // stage 3: tracker; augmented samples: inverse-map metadata
};

Json to_json(const Sample& s);
Sample sample_from_json(const Json& j);

// Deterministic 80/20 split on the task id.
bool is_validation(const std::string& task_id);

// Does the ground truth parse under the target's output grammar?
bool ground_truth_parses(const Sample& s);

struct Dataset {
    std::vector<Sample> samples;
    std::vector<TaskSpec> tasks;  // every task referenced by the samples
    int dropped_tasks = 0;        // scheduler trajectories over budget (stage 1) or truncated (stage 3)
    std::map<std::string, int> counts() const;
    void append(const Dataset& other);
};

// Dataset file: a header line followed by one capita/sample@1 object per line.
void write_dataset(const Dataset& d, const std::string& path, const FeatureConfig& features);
Dataset read_dataset(const std::string& path, const FeatureConfig& expected);

// "The task is to ... The plan is: ... Completed: ... Next: ..."
std::string render_cot(const std::string& instruction, const ProgressTracker& tracker);

// Expert runs with oracle capabilities (EG optionally perturbed).
Dataset build_stage1(const std::vector<TaskSpec>& tasks, double p_eg, std::uint64_t seed);

// Policy rollouts relabelled by the expert; EG/OG queries kept when their Jaccard
// similarity to a ground-truth query reaches tau.
Dataset build_stage2(const ParametricPolicy& policy, const std::vector<TaskSpec>& tasks, double tau,
                     const CapabilitySuite& backends, std::uint64_t seed, bool greedy = false);

// Synthetic scheduler trajectories with injected OG/ES faults, no env interaction.
struct Stage3Config {
    double p_og = 0.2;
    double p_es = 0.1;
    int length_cap = 200;
};
Dataset build_stage3(const std::vector<TaskSpec>& tasks, const Stage3Config& config, std::uint64_t seed);

struct AugmentationTables {
    std::map<std::string, std::vector<std::string>> rephrase;  // canonical verb -> variants
    std::map<std::string, std::string> novel;                  // class -> novel class
    const Lexicon* lexicon = nullptr;
    static AugmentationTables load_default();
};

// Rephrase / de-rephrase the leading verb of every action in an action list.
std::string rephrase_actions(const std::string& actions, const AugmentationTables& t, std::size_t variant);
std::string derephrase_actions(const std::string& actions, const AugmentationTables& t, std::size_t variant);
std::size_t rephrase_variants(const AugmentationTables& t);

// Adds factor augmented copies per eligible sample; originals are kept.
Dataset augment(const Dataset& d, const AugmentationTables& t, int factor, Rng& rng);

// Scheduler samples as offline training states (features computed for the config).
TrainingSet to_training_set(const Dataset& d, const FeatureConfig& features, bool validation_split);

// Every base task instantiable in the scene, in category order, plus composites of
// pairs on disjoint instances.
std::vector<TaskSpec> generate_tasks(std::uint64_t first_seed, int scenes, const std::vector<ActionProfile>& profiles,
                                     bool composites, std::uint64_t rng_seed);

}  // namespace capita
