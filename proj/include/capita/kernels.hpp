#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "capita/scheduler.hpp"
#include "capita/trainer.hpp"

namespace capita {

using PolicyFactory = std::function<std::unique_ptr<SchedulerPolicy>()>;
using LimitsFn = std::function<EpisodeLimits(const TaskSpec&)>;

struct EpisodeJob {
    std::size_t task = 0;
    std::uint64_t seed = 0;
};

// Results come back in job order; each job gets a fresh policy from the factory.
std::vector<EpisodeResult> run_episodes_serial(const std::vector<TaskSpec>& tasks, const std::vector<EpisodeJob>& jobs,
                                               const PolicyFactory& make_policy, const CapabilitySuite& backends,
                                               const LimitsFn& limits, const RunOptions& options = {});
std::vector<EpisodeResult> run_episodes_parallel(const std::vector<TaskSpec>& tasks, const std::vector<EpisodeJob>& jobs,
                                                 const PolicyFactory& make_policy, const CapabilitySuite& backends,
                                                 const LimitsFn& limits, const RunOptions& options = {});

// Clipped-surrogate objective and gradient. The parallel kernel sums fixed chunks in
// order, so its result does not depend on the thread count.
ObjectiveResult surrogate_serial(const std::vector<AdvantageGroup>& groups, const ParametricPolicy& policy, double epsilon);
ObjectiveResult surrogate_parallel(const std::vector<AdvantageGroup>& groups, const ParametricPolicy& policy, double epsilon);

int worker_count();

}  // namespace capita
