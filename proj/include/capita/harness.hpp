#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "capita/kernels.hpp"
#include "capita/policy.hpp"

namespace capita {

// Flat `key = value` configuration; '#' starts a comment.
class Config {
public:
    static Config parse(const std::string& text);
    static Config load(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    std::string get(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    // Throws on keys outside the allowed set.
    void require_known(const std::vector<std::string>& allowed) const;
    std::string digest() const;
    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

enum class ErrorCategory {
    ObjectRecognition,
    OpenVocabularyReferring,
    InstructionUnderstanding,
    Exploration,
    ActionPrecondition,
    LowLevelControl,
    HistorySummarization,
    Ambiguity,
};
std::string to_string(ErrorCategory c);
const std::vector<ErrorCategory>& error_categories();

struct ErrorAttribution {
    ErrorCategory category = ErrorCategory::LowLevelControl;
    int evidence = -1;  // transcript line index
};

// Rule-based classification of a failed episode from its transcript.
ErrorAttribution attribute_error(const Transcript& transcript);

struct CategoryStats {
    int episodes = 0;
    int successes = 0;
    double ssr_sum = 0.0;
    double sr() const { return episodes ? static_cast<double>(successes) / episodes : 0.0; }
    double ssr() const { return episodes ? ssr_sum / episodes : 0.0; }
};

struct EvalReport {
    std::map<std::string, CategoryStats> categories;
    CategoryStats aggregate;
    std::vector<std::uint64_t> seeds;
    std::string config_digest;
    std::map<std::string, int> attribution;
    std::vector<EpisodeResult> episodes;  // only when kept

    std::string csv() const;
    Json summary_json() const;
};

struct EvalOptions {
    bool keep_episodes = false;
    bool parallel = true;
};

EvalReport evaluate(const PolicyFactory& make_policy, const CapabilitySuite& backends, const std::vector<TaskSpec>& tasks,
                    const std::vector<std::uint64_t>& seeds, const std::string& config_digest,
                    const EvalOptions& options = {});

// Episode seed of task i under a report seed.
inline std::uint64_t episode_seed(std::uint64_t seed, std::size_t task_index) { return derive_seed(seed, task_index); }

struct ReplayResult {
    bool identical = false;
    std::string regenerated;
    int first_difference = -1;  // line index
};

// Re-simulates the episode described by the transcript header. Learned policies
// need their snapshot; the descriptor digest must match.
ReplayResult replay(const Transcript& transcript, const ParametricPolicy* policy = nullptr);

std::vector<TaskSpec> read_tasks(const std::string& path);
void write_tasks(const std::vector<TaskSpec>& tasks, const std::string& path);

}  // namespace capita
