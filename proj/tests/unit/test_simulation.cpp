#include "doctest.h"

#include <cmath>
#include <map>

#include "support/oracles.hpp"

#include "error.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "simulation.hpp"
#include "solver.hpp"

using namespace trustcal;

namespace {

const Context kLowAbsent(Reliability::Low, Traffic::Low, Pedestrians::Absent);
const Context kHighPresent(Reliability::High, Traffic::High, Pedestrians::Present);

Transparency always_off(const Belief&, const Context&) { return Transparency::Off; }

double paired_sd(const std::vector<double>& d, double mean) {
  double s = 0.0;
  for (double v : d) s += (v - mean) * (v - mean);
  return std::sqrt(s / static_cast<double>(d.size() - 1));
}

}  // namespace

TEST_CASE("step response starts at the prior marginals") {
  const auto sr = step_response(reference_model(), ActionTuple(Transparency::On, kLowAbsent), 50);
  REQUIRE(sr.p_trust_high.size() == 51);
  REQUIRE(sr.p_workload_high.size() == 51);
  CHECK(sr.p_trust_high[0] == 1.0);
  CHECK(sr.p_workload_high[0] == doctest::Approx(0.4167).epsilon(1e-12));
  CHECK(sr.horizon == 50);
  const auto zero = step_response(reference_model(), ActionTuple{}, 0);
  CHECK(zero.p_trust_high.size() == 1);
}

TEST_CASE("identity transitions give a constant series") {
  auto m = reference_model();
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t r = 0; r < m.trust_actions(); ++r) m.trust_row(s, r) = s / 2 ? Dist2{0, 1} : Dist2{1, 0};
    for (std::size_t r = 0; r < m.workload_actions(); ++r) m.workload_row(s, r) = s % 2 ? Dist2{0, 1} : Dist2{1, 0};
  }
  m.prior_trust = {0.3, 0.7};
  const auto sr = step_response(m, ActionTuple(Transparency::Off, kHighPresent), 30);
  for (std::size_t t = 0; t <= 30; ++t) {
    CHECK(sr.p_trust_high[t] == sr.p_trust_high[0]);
    CHECK(sr.p_workload_high[t] == sr.p_workload_high[0]);
  }
}

TEST_CASE("point-mass transitions reproduce the deterministic trajectory") {
  // Trust flips every frame, workload rises and stays high.
  auto m = TrustWorkloadModel::uniform(ActionStructure::paper());
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t r = 0; r < m.trust_actions(); ++r) m.trust_row(s, r) = s / 2 ? Dist2{1, 0} : Dist2{0, 1};
    for (std::size_t r = 0; r < m.workload_actions(); ++r) m.workload_row(s, r) = {0, 1};
  }
  m.prior_trust = {1, 0};
  m.prior_workload = {1, 0};
  std::vector<JointDist> traj;
  const auto sr = step_response(m, ActionTuple{}, 9, std::nullopt, &traj);
  REQUIRE(traj.size() == 10);
  for (std::size_t t = 0; t <= 9; ++t) {
    CHECK(sr.p_trust_high[t] == (t % 2 ? 1.0 : 0.0));
    CHECK(sr.p_workload_high[t] == (t == 0 ? 0.0 : 1.0));
    const std::size_t expected = 2 * (t % 2) + (t == 0 ? 0 : 1);
    for (std::size_t s = 0; s < 4; ++s) CHECK(traj[t][s] == (s == expected ? 1.0 : 0.0));
  }
}

TEST_CASE("step responses stay normalized and converge to the stationary law") {
  Rng rng(606);
  for (int trial = 0; trial < 25; ++trial) {
    const auto m = trial < 5 ? reference_model() : oracle::random_model(rng);
    const auto a = oracle::random_action(rng);
    std::vector<JointDist> traj;
    const int horizon = 20000;
    const auto sr = step_response(m, a, horizon, std::nullopt, &traj);
    for (std::size_t t = 0; t < traj.size(); ++t) {
      double sum = 0.0;
      for (double p : traj[t]) sum += p;
      CHECK(std::abs(sum - 1.0) <= 1e-12);
      CHECK(sr.p_trust_high[t] >= 0.0);
      CHECK(sr.p_trust_high[t] <= 1.0);
      CHECK(sr.p_workload_high[t] >= 0.0);
      CHECK(sr.p_workload_high[t] <= 1.0);
    }
    const auto pi = oracle::stationary(transition_matrix(m, a));
    CHECK(oracle::max_abs_diff(traj.back(), pi) <= 1e-8);
  }
}

TEST_CASE("custom initial distribution") {
  const JointDist init{0.0, 0.0, 0.0, 1.0};
  const auto sr = step_response(reference_model(), ActionTuple{}, 3, init);
  CHECK(sr.p_trust_high[0] == 1.0);
  CHECK(sr.p_workload_high[0] == 1.0);
  CHECK_THROWS_AS(step_response(reference_model(), ActionTuple{}, 3, JointDist{0.5, 0.0, 0.0, 0.0}), Error);
  CHECK_THROWS_AS(step_response(reference_model(), ActionTuple{}, -1), Error);
}

TEST_CASE("step-response CSV") {
  const auto a = ActionTuple(Transparency::On, kLowAbsent);
  const auto csv = step_response_csv({step_response(reference_model(), a, 2)}, "g");
  CHECK(csv.rfind("# schema: ", 0) == 0);
  CHECK(csv.find("\nt,action,p_trust_high,p_workload_high\n") != std::string::npos);
  CHECK(csv.find("\n0,AR_on+Rel_low+Traffic_low+Peds_absent,1,") != std::string::npos);
  CHECK(csv.find("\n2,AR_on+") != std::string::npos);
}

TEST_CASE("scenario segments concatenate") {
  const auto sc = scenario_from_segments({{kLowAbsent, 2}, {kHighPresent, 1}});
  REQUIRE(sc.size() == 3);
  CHECK(sc.contexts[0] == kLowAbsent);
  CHECK(sc.contexts[1] == kLowAbsent);
  CHECK(sc.contexts[2] == kHighPresent);
  CHECK(sc.episode_start == std::vector<bool>{true, false, true});

  const auto one = scenario_from_segments({{kHighPresent, 7}});
  for (const auto& c : one.contexts) CHECK(c == kHighPresent);

  try {
    scenario_from_segments({});
    FAIL("expected EmptySpec");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptySpec);
  }
  CHECK_THROWS_AS(scenario_from_segments({{kLowAbsent, 0}}), Error);

  const auto segs = scenario_segments_from_csv(
      "# schema: scenario/1\nreliability,traffic,pedestrians,duration_frames\n"
      "Rel_low,Traffic_low,Peds_absent,2\nRel_high,Traffic_high,Peds_present,1\n");
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].context == kLowAbsent);
  CHECK(segs[0].duration_frames == 2);
  CHECK(segs[1].context == kHighPresent);
  CHECK_THROWS_AS(scenario_segments_from_csv("reliability,traffic,pedestrians,duration_frames\nRel_low,Traffic_low,Peds_absent,x\n"), Error);
  CHECK_THROWS_AS(scenario_segments_from_csv("a,b\n"), Error);
}

TEST_CASE("random scenarios draw contexts uniformly") {
  const int n = 10000;
  const auto sc = scenario_random(n, 3, uniform_contexts(), 2024);
  REQUIRE(sc.size() == static_cast<std::size_t>(3 * n));
  std::map<std::size_t, int> counts;
  for (std::size_t t = 0; t < sc.size(); t += 3) {
    CHECK(sc.episode_start[t]);
    CHECK(!sc.episode_start[t + 1]);
    CHECK(sc.contexts[t + 1] == sc.contexts[t]);
    ++counts[sc.contexts[t].index()];
  }
  const double p = 1.0 / 12.0, mean = n * p, sd = std::sqrt(n * p * (1 - p));
  CHECK(counts.size() == 12);
  for (const auto& [u, c] : counts) CHECK(std::abs(c - mean) <= 3.0 * sd);
}

TEST_CASE("closed loop is deterministic and its trace replays through the filter") {
  const auto m = reference_model();
  const auto pol = value_iteration(m, RewardSpec{}, SolverConfig{});
  const auto sc = scenario_random(8, 50, uniform_contexts(), 5);
  const auto a = run_closed_loop(m, m, pol, sc, 77);
  const auto b = run_closed_loop(m, m, pol, sc, 77);
  CHECK(trace_csv(a.trace) == trace_csv(b.trace));
  CHECK(metrics_json(a.metrics) == metrics_json(b.metrics));
  CHECK(trace_csv(run_closed_loop(m, m, pol, sc, 78).trace) != trace_csv(a.trace));

  Belief belief = prior_belief(m);
  for (const auto& row : a.trace) {
    if (row.episode_start) belief = prior_belief(m);
    belief = belief_update(m, belief, ActionTuple(row.action, row.context), row.observation);
    CHECK(belief.probs == row.belief.probs);
  }
  CHECK(a.metrics.frames == 400);
  for (double r : {a.metrics.calibration_rate, a.metrics.transparency_on_rate}) {
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
  }
}

TEST_CASE("carried beliefs do not reset between episodes") {
  const auto m = reference_model();
  const auto sc = scenario_random(4, 20, uniform_contexts(), 9);
  ClosedLoopConfig cfg;
  cfg.seed = 3;
  cfg.carry_belief = true;
  const auto res = run_closed_loop(m, m, always_off, sc, cfg);
  Belief belief = prior_belief(m);
  for (const auto& row : res.trace) {
    belief = belief_update(m, belief, ActionTuple(row.action, row.context), row.observation);
    CHECK(belief.probs == row.belief.probs);
  }
}

TEST_CASE("perfectly observable trust gives zero belief error") {
  Rng rng(15);
  auto m = oracle::random_model(rng);
  m.emit_trust = {Dist2{1.0, 0.0}, Dist2{0.0, 1.0}};
  ClosedLoopConfig cfg;
  cfg.seed = 1;
  const auto res = run_closed_loop(m, m, always_off, scenario_random(10, 100, uniform_contexts(), 2), cfg);
  CHECK(res.metrics.belief_rmse <= 1e-12);
  CHECK(res.metrics.zero_likelihood_resets == 0);
}

TEST_CASE("zero reward gives zero return") {
  ClosedLoopConfig cfg;
  for (auto& row : cfg.reward.table) row = {0.0, 0.0, 0.0};
  const auto m = reference_model();
  const auto res = run_closed_loop(m, m, always_off, scenario_random(5, 40, uniform_contexts(), 1), cfg);
  CHECK(res.metrics.discounted_return == 0.0);
}

TEST_CASE("discounted return and calibration rate follow the true-state rewards") {
  const auto m = reference_model();
  ClosedLoopConfig cfg;
  cfg.seed = 12;
  const auto res = run_closed_loop(m, m, always_off, scenario_random(6, 30, uniform_contexts(), 4), cfg);
  double ret = 0.0, disc = 1.0;
  long calibrated = 0;
  for (const auto& row : res.trace) {
    ret += disc * row.reward;
    disc *= cfg.gamma;
    if (row.reward >= 0.0) ++calibrated;
  }
  CHECK(res.metrics.discounted_return == doctest::Approx(ret).epsilon(1e-12));
  CHECK(res.metrics.calibration_rate == doctest::Approx(calibrated / 180.0));
  CHECK(res.metrics.transparency_on_rate == 0.0);
}

TEST_CASE("impossible observations reset the belief and are counted") {
  const auto truth = reference_model();
  auto believed = truth;
  believed.emit_workload[0] = {1, 0, 0, 0, 0};
  believed.emit_workload[1] = {1, 0, 0, 0, 0};  // any non-road gaze is impossible
  ClosedLoopConfig cfg;
  cfg.seed = 8;
  const auto res = run_closed_loop(truth, believed, always_off, scenario_random(2, 50, uniform_contexts(), 3), cfg);
  CHECK(res.metrics.zero_likelihood_resets > 0);
  long flagged = 0;
  for (const auto& row : res.trace) {
    if (!row.zero_likelihood_reset) continue;
    ++flagged;
    CHECK(row.observation.gaze != Gaze::Road);
    CHECK(row.belief.probs == prior_belief(believed).probs);
  }
  CHECK(flagged == res.metrics.zero_likelihood_resets);
}

TEST_CASE("minimum dwell limits transparency switches in the loop") {
  const auto m = reference_model();
  Rng coin(1);
  auto flicker = [&coin](const Belief&, const Context&) {
    return uniform01(coin) < 0.5 ? Transparency::On : Transparency::Off;
  };
  ClosedLoopConfig cfg;
  cfg.min_dwell = 10;
  const auto res = run_closed_loop(m, m, flicker, scenario_random(1, 500, uniform_contexts(), 1), cfg);
  int run = 1;
  for (std::size_t t = 1; t < res.trace.size(); ++t) {
    if (res.trace[t].action == res.trace[t - 1].action) {
      ++run;
    } else {
      CHECK(run >= 10);
      run = 1;
    }
  }
}

TEST_CASE("Q-MDP does not lose to always-off") {
  // Paired seeds; the asymmetric reward makes the policy non-trivial.
  const auto m = reference_model();
  RewardSpec r;
  r.table[0] = {1.0, 0.0, -1.0};
  r.table[1] = {-3.0, 0.0, 1.0};
  const auto pol = value_iteration(m, r, SolverConfig{});
  std::vector<double> diff;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto sc = scenario_random(50, 200, uniform_contexts(), child_seed(seed, 1));
    ClosedLoopConfig cfg;
    cfg.reward = r;
    cfg.seed = child_seed(seed, 0);
    const auto q = run_closed_loop(m, m, pol, sc, cfg.seed);
    const auto off = run_closed_loop(m, m, always_off, sc, cfg);
    diff.push_back(q.metrics.discounted_return - off.metrics.discounted_return);
  }
  double mean = 0.0;
  for (double d : diff) mean += d;
  mean /= static_cast<double>(diff.size());
  CHECK(mean >= -2.0 * paired_sd(diff, mean) / std::sqrt(20.0));
}

TEST_CASE("closed-loop input errors") {
  const auto m = reference_model();
  CHECK_THROWS_AS(run_closed_loop(m, m, always_off, Scenario{}, ClosedLoopConfig{}), Error);
  CHECK_THROWS_AS(scenario_random(0, 10, uniform_contexts(), 1), Error);
}

TEST_CASE("metrics JSON and trace CSV layout") {
  const auto m = reference_model();
  const auto res = run_closed_loop(m, m, always_off, scenario_random(1, 3, uniform_contexts(), 1), ClosedLoopConfig{});
  const auto csv = trace_csv(res.trace, "g");
  CHECK(csv.find("t,context,action,reliance,gaze,belief_0,belief_1,belief_2,belief_3,reward\n") != std::string::npos);
  const auto js = metrics_json(res.metrics, "g");
  CHECK(js.find("\"schema\": \"twmetrics/1\"") != std::string::npos);
  CHECK(js.find("\"frames\": 3") != std::string::npos);
}
