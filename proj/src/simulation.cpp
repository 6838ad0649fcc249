#include "simulation.hpp"

#include <cmath>

#include "json.hpp"

#include "data.hpp"
#include "error.hpp"
#include "rng.hpp"
#include "textdoc.hpp"

namespace trustcal {

StepResponse step_response(const TrustWorkloadModel& model, const ActionTuple& a, int horizon,
                           const std::optional<JointDist>& initial,
                           std::vector<JointDist>* trajectory) {
  if (horizon < 0) fail(ErrorCode::InvalidArgument, "horizon must be nonnegative");
  JointDist p{};
  if (initial) {
    Belief{*initial}.validate();
    p = *initial;
  } else {
    for (std::size_t s = 0; s < kJointStates; ++s) p[s] = model.prior(s);
  }
  const auto T = transition_matrix(model, a);
  StepResponse out;
  out.action = a;
  out.horizon = horizon;
  out.p_trust_high.reserve(static_cast<std::size_t>(horizon) + 1);
  out.p_workload_high.reserve(static_cast<std::size_t>(horizon) + 1);
  for (int t = 0;; ++t) {
    out.p_trust_high.push_back(p[2] + p[3]);
    out.p_workload_high.push_back(p[1] + p[3]);
    if (trajectory) trajectory->push_back(p);
    if (t == horizon) break;
    JointDist next{};
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t sp = 0; sp < 4; ++sp) next[sp] += p[s] * T[s * 4 + sp];
    // rows sum to 1 only up to rounding; keep the drift from compounding
    const double z = next[0] + next[1] + next[2] + next[3];
    for (auto& v : next) v /= z;
    p = next;
  }
  return out;
}

std::string step_response_csv(const std::vector<StepResponse>& responses,
                              std::string_view generator) {
  std::string out = csv_preamble("step-response/1", generator);
  out += "t,action,p_trust_high,p_workload_high\n";
  for (const auto& r : responses) {
    const auto action = to_string(r.action);
    for (std::size_t t = 0; t < r.p_trust_high.size(); ++t) {
      out += std::to_string(t) + ',' + action + ',' + textdoc::format_double(r.p_trust_high[t]) +
             ',' + textdoc::format_double(r.p_workload_high[t]) + '\n';
    }
  }
  return out;
}

Scenario scenario_from_segments(const std::vector<ScenarioSegment>& segments) {
  if (segments.empty()) fail(ErrorCode::EmptySpec, "scenario has no segments");
  Scenario sc;
  for (const auto& seg : segments) {
    if (seg.duration_frames < 1) fail(ErrorCode::InvalidArgument, "segment durations must be >= 1");
    for (int i = 0; i < seg.duration_frames; ++i) {
      sc.contexts.push_back(seg.context);
      sc.episode_start.push_back(i == 0);
    }
  }
  return sc;
}

std::vector<ScenarioSegment> scenario_segments_from_csv(std::string_view text) {
  std::vector<ScenarioSegment> out;
  bool header = false;
  for (const auto& line : textdoc::tokenize(text)) {
    std::string joined;
    for (const auto& t : line.tokens) joined += t;
    std::vector<std::string> f;
    std::size_t start = 0;
    while (true) {
      auto pos = joined.find(',', start);
      f.push_back(joined.substr(start, pos == std::string::npos ? pos : pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    if (!header) {
      if (joined != "reliability,traffic,pedestrians,duration_frames") {
        textdoc::parse_error(line, "expected header 'reliability,traffic,pedestrians,duration_frames'");
      }
      header = true;
      continue;
    }
    if (f.size() != 4) textdoc::parse_error(line, "expected 4 fields");
    ScenarioSegment seg;
    seg.context = {parse_reliability(f[0]), parse_traffic(f[1]), parse_pedestrians(f[2])};
    seg.duration_frames = static_cast<int>(textdoc::parse_int(f[3]));
    out.push_back(seg);
  }
  if (out.empty()) fail(ErrorCode::EmptySpec, "scenario file has no segments");
  return out;
}

Scenario scenario_random(int n_episodes, int frames_per_episode, const ContextDist& dist,
                         std::uint64_t seed) {
  if (n_episodes < 1 || frames_per_episode < 1) {
    fail(ErrorCode::EmptySpec, "random scenario needs at least one episode and one frame");
  }
  Rng rng(seed);
  std::vector<ScenarioSegment> segments;
  segments.reserve(static_cast<std::size_t>(n_episodes));
  for (int e = 0; e < n_episodes; ++e) {
    segments.push_back({Context::from_index(sample_categorical(rng, dist)), frames_per_episode});
  }
  return scenario_from_segments(segments);
}

ClosedLoopResult run_closed_loop(const TrustWorkloadModel& true_model,
                                 const TrustWorkloadModel& belief_model,
                                 const TransparencyRule& rule, const Scenario& scenario,
                                 const ClosedLoopConfig& config) {
  if (scenario.contexts.empty()) fail(ErrorCode::EmptySpec, "scenario is empty");
  true_model.validate();
  belief_model.validate();
  Rng rng(config.seed);

  JointDist prior{};
  for (std::size_t s = 0; s < kJointStates; ++s) prior[s] = true_model.prior(s);
  auto state = JointState::from_index(sample_categorical(rng, prior));
  const Belief initial = prior_belief(belief_model);
  Belief belief = initial;
  DwellFilter dwell(config.min_dwell);

  ClosedLoopResult result;
  auto& m = result.metrics;
  result.trace.reserve(scenario.size());
  double discount = 1.0;
  long calibrated = 0, on = 0;
  double sq_err = 0.0;

  for (std::size_t t = 0; t < scenario.size(); ++t) {
    const auto& ctx = scenario.contexts[t];
    const bool episode_start = t < scenario.episode_start.size() && scenario.episode_start[t];
    if (episode_start && !config.carry_belief) belief = initial;

    const auto action = dwell.apply(rule(belief, ctx));
    const double r = config.reward(state.trust, ctx.reliability);
    m.discounted_return += discount * r;
    discount *= config.gamma;
    if (r >= 0.0) ++calibrated;
    if (action == Transparency::On) ++on;

    const ActionTuple a(action, ctx);
    const auto& tr = true_model.trust_row(state.index(), reduced_index(true_model.structure.trust_dims, a));
    const auto& wr =
        true_model.workload_row(state.index(), reduced_index(true_model.structure.workload_dims, a));
    const auto next_trust = static_cast<Trust>(sample_categorical(rng, tr));
    const auto next_workload = static_cast<Workload>(sample_categorical(rng, wr));
    state = {next_trust, next_workload};
    ObservationTuple o;
    o.reliance = static_cast<Reliance>(
        sample_categorical(rng, true_model.emit_trust[static_cast<std::size_t>(state.trust)]));
    o.gaze = static_cast<Gaze>(
        sample_categorical(rng, true_model.emit_workload[static_cast<std::size_t>(state.workload)]));

    bool reset = false;
    try {
      belief = belief_update(belief_model, belief, a, o);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ZeroLikelihood) throw;
      belief = initial;
      reset = true;
      ++m.zero_likelihood_resets;
    }
    const double truth = state.trust == Trust::High ? 1.0 : 0.0;
    sq_err += (belief.p_trust_high() - truth) * (belief.p_trust_high() - truth);

    result.trace.push_back({static_cast<long>(t), ctx, action, o, belief, r, episode_start, reset});
  }
  const auto n = static_cast<double>(scenario.size());
  m.frames = static_cast<long>(scenario.size());
  m.calibration_rate = static_cast<double>(calibrated) / n;
  m.transparency_on_rate = static_cast<double>(on) / n;
  m.belief_rmse = std::sqrt(sq_err / n);
  return result;
}

ClosedLoopResult run_closed_loop(const TrustWorkloadModel& true_model,
                                 const TrustWorkloadModel& belief_model, const QmdpPolicy& policy,
                                 const Scenario& scenario, std::uint64_t seed, int min_dwell,
                                 bool carry_belief) {
  ClosedLoopConfig config;
  config.reward = policy.reward;
  config.gamma = policy.config.gamma;
  config.seed = seed;
  config.min_dwell = min_dwell;
  config.carry_belief = carry_belief;
  return run_closed_loop(
      true_model, belief_model,
      [&policy](const Belief& b, const Context& u) { return qmdp_action(policy, b, u); }, scenario,
      config);
}

std::string trace_csv(const std::vector<TraceRow>& trace, std::string_view generator) {
  using textdoc::format_double;
  std::string out = csv_preamble("trace/1", generator);
  out += "t,context,action,reliance,gaze,belief_0,belief_1,belief_2,belief_3,reward\n";
  for (const auto& row : trace) {
    out += std::to_string(row.t) + ',' + to_string(row.context) + ',' + name(row.action) + ',' +
           name(row.observation.reliance) + ',' + name(row.observation.gaze);
    for (double p : row.belief.probs) out += ',' + format_double(p);
    out += ',' + format_double(row.reward) + '\n';
  }
  return out;
}

std::string metrics_json(const EvalMetrics& metrics, std::string_view generator) {
  nlohmann::ordered_json j;
  j["schema"] = "twmetrics/1";
  if (!generator.empty()) j["generator"] = std::string(generator);
  j["frames"] = metrics.frames;
  j["discounted_return"] = metrics.discounted_return;
  j["calibration_rate"] = metrics.calibration_rate;
  j["transparency_on_rate"] = metrics.transparency_on_rate;
  j["belief_rmse"] = metrics.belief_rmse;
  j["zero_likelihood_resets"] = metrics.zero_likelihood_resets;
  return j.dump(2) + "\n";
}

}  // namespace trustcal
