#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "types.hpp"

namespace trustcal {

using Dist2 = std::array<double, 2>;
using GazeDist = std::array<double, kGazeLevels>;

/// A reduced action: the components of an ActionTuple along a DimSet, encoded
/// as a mixed-radix index (first member dimension most significant).
struct ReducedAction {
  DimSet dims;
  std::size_t index = 0;

  /// Component names joined by '+', or "-" for the empty dimension set.
  std::string name() const;
  friend bool operator==(const ReducedAction&, const ReducedAction&) = default;
};

std::size_t reduced_index(DimSet dims, const ActionTuple& a) noexcept;
ReducedAction reduce_action(const ActionStructure& structure, const ActionTuple& a, Factor factor);
/// Parses the output of ReducedAction::name().
ReducedAction parse_reduced_action(DimSet dims, std::string_view s);

/// Factored trust-workload POMDP.
///
/// Transition rows are keyed by (joint state, reduced action) and stored
/// row-major: row(s, r) lives at s * reduced_count + r.
struct TrustWorkloadModel {
  ActionStructure structure;
  Dist2 prior_trust{0.5, 0.5};
  Dist2 prior_workload{0.5, 0.5};
  std::vector<Dist2> trans_trust;     // over next trust
  std::vector<Dist2> trans_workload;  // over next workload
  std::array<Dist2, kTrustLevels> emit_trust{};          // trust -> reliance
  std::array<GazeDist, kWorkloadLevels> emit_workload{};  // workload -> gaze

  /// All rows uniform.
  static TrustWorkloadModel uniform(const ActionStructure& structure);

  std::size_t trust_actions() const noexcept { return structure.trust_dims.reduced_count(); }
  std::size_t workload_actions() const noexcept {
    return structure.workload_dims.reduced_count();
  }

  Dist2& trust_row(std::size_t s, std::size_t r) { return trans_trust[s * trust_actions() + r]; }
  const Dist2& trust_row(std::size_t s, std::size_t r) const {
    return trans_trust[s * trust_actions() + r];
  }
  Dist2& workload_row(std::size_t s, std::size_t r) {
    return trans_workload[s * workload_actions() + r];
  }
  const Dist2& workload_row(std::size_t s, std::size_t r) const {
    return trans_workload[s * workload_actions() + r];
  }

  double prior(std::size_t joint) const noexcept {
    return prior_trust[joint / 2] * prior_workload[joint % 2];
  }

  /// Throws InvalidArgument when a table has the wrong shape or a row is not
  /// a distribution within 1e-9.
  void validate() const;

  friend bool operator==(const TrustWorkloadModel&, const TrustWorkloadModel&) = default;
};

using TransitionMatrix = std::array<double, kJointStates * kJointStates>;  // [s * 4 + s']
using EmissionTable = std::array<double, kObservations * kJointStates>;    // [o * 4 + s]

JointDist joint_transition(const TrustWorkloadModel& model, const JointState& s,
                           const ActionTuple& a);
double joint_emission(const TrustWorkloadModel& model, const JointState& s,
                      const ObservationTuple& o);

/// Full 4x4 transition matrix for action `a`.
TransitionMatrix transition_matrix(const TrustWorkloadModel& model, const ActionTuple& a);
/// Joint emission probabilities for every (observation, state) pair.
EmissionTable emission_table(const TrustWorkloadModel& model);

Belief prior_belief(const TrustWorkloadModel& model);

/// Bayes filter step: predict with `a`, correct with `o`.
/// Throws ZeroLikelihood when `o` has zero probability under the prediction.
Belief belief_update(const TrustWorkloadModel& model, const Belief& b, const ActionTuple& a,
                     const ObservationTuple& o);

/// log p(o_1..o_N | a_1..a_N). The first step is emitted from the priors;
/// step t+1 transitions with a_{t+1}. Returns -infinity when the
/// likelihood is exactly zero. Throws EmptySequence.
double sequence_log_likelihood(const TrustWorkloadModel& model, const InteractionSequence& seq);

/// Normalized forward variables, one per step (filter posteriors).
/// Throws ZeroLikelihood.
std::vector<Belief> filter_sequence(const TrustWorkloadModel& model,
                                    const InteractionSequence& seq);

struct LabeledModel {
  TrustWorkloadModel model;
  bool trust_swapped = false;
  bool workload_swapped = false;
};

/// Swap latent indices of either factor. Permutes priors, emissions, and
/// both the source and destination indices of every transition row.
TrustWorkloadModel permute_states(const TrustWorkloadModel& model, bool swap_trust,
                                  bool swap_workload);

double emission_entropy(const GazeDist& row) noexcept;

/// High trust is the state more likely to emit R_plus; high workload is the
/// state whose gaze emission has the larger entropy. Throws AmbiguousLabel
/// on a tie within 1e-9.
LabeledModel label_states(const TrustWorkloadModel& model);

/// Re-key the transition tables onto a superset structure by copying each
/// row to every expanded action. The joint dynamics are unchanged.
TrustWorkloadModel embed_structure(const TrustWorkloadModel& model,
                                   const ActionStructure& superset);

/// Illustrative hand-set model with the selected structure. Its priors are the
/// published estimates; the remaining rows are chosen to reproduce the
/// reported qualitative step-response behavior. Not a fitted model.
TrustWorkloadModel reference_model();

/// `twmodel/1` text document. Numbers use 17 significant digits.
std::string model_to_document(const TrustWorkloadModel& model, std::string_view generator = {});
/// Throws Parse or SchemaMismatch.
TrustWorkloadModel model_from_document(std::string_view text);

}  // namespace trustcal
