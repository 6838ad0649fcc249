#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "model.hpp"
#include "solver.hpp"

namespace trustcal {

struct StepResponse {
  ActionTuple action;
  int horizon = 0;
  std::vector<double> p_trust_high;     // horizon + 1 entries, t = 0 first
  std::vector<double> p_workload_high;
};

/// Propagates the joint state marginal under a constant action. Starts from
/// the priors unless `initial` is given. If `trajectory` is non-null it
/// receives every joint distribution.
StepResponse step_response(const TrustWorkloadModel& model, const ActionTuple& a, int horizon,
                           const std::optional<JointDist>& initial = std::nullopt,
                           std::vector<JointDist>* trajectory = nullptr);

/// `t,action,p_trust_high,p_workload_high`
std::string step_response_csv(const std::vector<StepResponse>& responses,
                              std::string_view generator = {});

/// Per-frame contexts; `episode_start[t]` marks the first frame of each
/// intersection episode.
struct Scenario {
  std::vector<Context> contexts;
  std::vector<bool> episode_start;

  std::size_t size() const noexcept { return contexts.size(); }
};

struct ScenarioSegment {
  Context context;
  int duration_frames = 1;
};

/// Concatenates constant-context segments; each segment is one episode.
/// Throws EmptySpec.
Scenario scenario_from_segments(const std::vector<ScenarioSegment>& segments);
/// `reliability,traffic,pedestrians,duration_frames`
std::vector<ScenarioSegment> scenario_segments_from_csv(std::string_view text);

/// One context per episode drawn i.i.d. from `dist`.
Scenario scenario_random(int n_episodes, int frames_per_episode, const ContextDist& dist,
                         std::uint64_t seed);

using TransparencyRule = std::function<Transparency(const Belief&, const Context&)>;

struct ClosedLoopConfig {
  RewardSpec reward;
  double gamma = 25.0 / 26.0;
  std::uint64_t seed = 0;
  int min_dwell = 0;
  bool carry_belief = false;  // false: belief resets to priors at each episode start
};

struct EvalMetrics {
  double discounted_return = 0.0;
  double calibration_rate = 0.0;
  double transparency_on_rate = 0.0;
  double belief_rmse = 0.0;
  long frames = 0;
  long zero_likelihood_resets = 0;
};

struct TraceRow {
  long t = 0;
  Context context;
  Transparency action = Transparency::Off;
  ObservationTuple observation;
  Belief belief;  // posterior after this frame's observation
  double reward = 0.0;
  bool episode_start = false;
  bool zero_likelihood_reset = false;
};

struct ClosedLoopResult {
  EvalMetrics metrics;
  std::vector<TraceRow> trace;
};

/// Act-then-observe loop. Each frame: choose transparency from the current
/// belief and context, score the true state, advance the true state under
/// (transparency, context), emit an observation, update the belief with
/// `belief_model`. Impossible observations reset the belief to the priors.
ClosedLoopResult run_closed_loop(const TrustWorkloadModel& true_model,
                                 const TrustWorkloadModel& belief_model,
                                 const TransparencyRule& rule, const Scenario& scenario,
                                 const ClosedLoopConfig& config);

ClosedLoopResult run_closed_loop(const TrustWorkloadModel& true_model,
                                 const TrustWorkloadModel& belief_model, const QmdpPolicy& policy,
                                 const Scenario& scenario, std::uint64_t seed, int min_dwell = 0,
                                 bool carry_belief = false);

/// `t,context,action,reliance,gaze,belief_0,belief_1,belief_2,belief_3,reward`
std::string trace_csv(const std::vector<TraceRow>& trace, std::string_view generator = {});

std::string metrics_json(const EvalMetrics& metrics, std::string_view generator = {});

}  // namespace trustcal
