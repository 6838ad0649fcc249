#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "model.hpp"

namespace trustcal {

using ContextDist = std::array<double, kContexts>;

ContextDist uniform_contexts() noexcept;

struct SolverConfig {
  double gamma = 25.0 / 26.0;  // one second (25 frames) weighs about 1/e
  double vi_tol = 1e-10;
  ContextDist uncontrollable_dist = uniform_contexts();
  long max_iterations = 1'000'000;

  void validate() const;
  friend bool operator==(const SolverConfig&, const SolverConfig&) = default;
};

/// Q(s, transparency, context) for the underlying MDP.
using QTable = std::array<double, kJointStates * kTransparencyLevels * kContexts>;

constexpr std::size_t q_index(std::size_t s, std::size_t transparency, std::size_t context) noexcept {
  return (s * kTransparencyLevels + transparency) * kContexts + context;
}

struct QmdpPolicy {
  QTable q{};
  RewardSpec reward;
  SolverConfig config;

  double value(const JointState& s, Transparency a, const Context& u) const noexcept {
    return q[q_index(s.index(), static_cast<std::size_t>(a), u.index())];
  }
};

/// One Bellman backup:
///   Q'(s,a,u) = R(s_T, u.rel) + gamma * sum_s' T(s'|s,(a,u)) * sum_u' p(u') max_a' Q(s',a',u').
QTable bellman_backup(const TrustWorkloadModel& model, const RewardSpec& reward,
                      const SolverConfig& config, const QTable& q);

/// Iterates the backup from Q = 0 until the sup-norm change drops below
/// vi_tol. Residuals of every sweep are appended to `residuals` if given.
/// Throws NonConvergence after config.max_iterations sweeps.
QmdpPolicy value_iteration(const TrustWorkloadModel& model, const RewardSpec& reward,
                           const SolverConfig& config, std::vector<double>* residuals = nullptr);

/// Q after exactly `horizon` backups from zero.
QTable finite_horizon_q(const TrustWorkloadModel& model, const RewardSpec& reward,
                        const SolverConfig& config, int horizon);

/// Belief-weighted Q for both transparency levels.
std::array<double, kTransparencyLevels> qmdp_values(const QTable& q, const Belief& b,
                                                     const Context& u) noexcept;

/// True when `on` beats `off` by more than rounding noise (1e-12 relative).
/// Symmetric rewards produce Q rows that are equal up to a few ulps.
constexpr bool prefers_on(double off, double on) noexcept {
  const double a = off < 0 ? -off : off;
  const double c = on < 0 ? -on : on;
  const double scale = a > c ? (a > 1.0 ? a : 1.0) : (c > 1.0 ? c : 1.0);
  return on - off > 1e-12 * scale;
}

/// argmax over transparency; ties go to AR_off.
Transparency qmdp_action(const QmdpPolicy& policy, const Belief& b, const Context& u) noexcept;

/// sum_u p(u) max_a sum_s b(s) Q(s,a,u).
double qmdp_belief_value(const QTable& q, const ContextDist& dist, const Belief& b) noexcept;

struct GridCell {
  Context context;
  double p_trust_high = 0.0;
  double p_workload_high = 0.0;
  Transparency action = Transparency::Off;
};

/// Actions over a resolution x resolution grid of product-form beliefs, for
/// every context. Grid coordinates are i / (resolution - 1).
std::vector<GridCell> policy_grid(const QmdpPolicy& policy, int resolution);
std::string policy_grid_csv(const std::vector<GridCell>& grid, std::string_view generator = {});

/// Exact optimal expected discounted reward over `horizon` steps by
/// exhaustive expansion of contexts, transparency choices, and observations.
/// The context at each step is drawn from the solver's distribution and
/// observed before acting. Throws HorizonTooLarge beyond 6.
double exact_finite_horizon_value(const TrustWorkloadModel& model, const RewardSpec& reward,
                                  const SolverConfig& config, const Belief& b, int horizon);

/// Expected reward of a belief under context `u`.
double expected_reward(const RewardSpec& reward, const Belief& b, const Context& u) noexcept;

/// Holds the previous transparency for at least `min_dwell` frames after a
/// switch. A dwell of 0 passes every decision through.
class DwellFilter {
 public:
  explicit DwellFilter(int min_dwell = 0) : min_dwell_(min_dwell) {}

  Transparency apply(Transparency desired) noexcept;
  void reset() noexcept {
    has_last_ = false;
    held_ = 0;
  }

 private:
  int min_dwell_;
  bool has_last_ = false;
  Transparency last_ = Transparency::Off;
  int held_ = 0;
};

/// `twpolicy/1` text document. Numbers use 17 significant digits.
std::string policy_to_document(const QmdpPolicy& policy, std::string_view generator = {});
QmdpPolicy policy_from_document(std::string_view text);

/// Reward table CSV with header `trust,Rel_low,Rel_mid,Rel_high` and one row
/// per trust state.
RewardSpec reward_from_csv(std::string_view text);

}  // namespace trustcal
