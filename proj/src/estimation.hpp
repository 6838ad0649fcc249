#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "data.hpp"
#include "model.hpp"

namespace trustcal {

struct FitConfig {
  double tol = 1e-6;     // absolute log-likelihood improvement
  int max_iter = 500;    // M-steps per run
  int n_restarts = 1000;
  std::uint64_t rng_seed = 0;
  double prob_floor = 0.0;  // 0 keeps exact zeros
  int jobs = 1;
  bool relabel = true;

  void validate() const;
};

struct FitResult {
  TrustWorkloadModel model;
  double total_log_likelihood = 0.0;
  std::vector<double> ll_trajectory;  // one entry per E-step, init first
  int restart_index = 0;
  int iterations = 0;
};

using PairDist = std::array<double, kJointStates * kJointStates>;  // [s * 4 + s']

struct ForwardBackward {
  std::vector<JointDist> gamma;  // one per step
  std::vector<PairDist> xi;      // one per transition (steps - 1)
  double log_likelihood = 0.0;
};

/// Scaled forward-backward on the joint 4-state chain. Throws ZeroLikelihood.
ForwardBackward forward_backward(const TrustWorkloadModel& model,
                                 const InteractionSequence& seq);

double dataset_log_likelihood(const TrustWorkloadModel& model, const Dataset& dataset);

/// Expectation-maximization from `init`. Zero-count rows keep their previous
/// values. Stops when the improvement drops below tol or after max_iter
/// M-steps. The result is relabeled unless config.relabel is false.
FitResult em_fit(const Dataset& dataset, const ActionStructure& structure,
                 const TrustWorkloadModel& init, const FitConfig& config);

/// Every row drawn from a flat Dirichlet.
TrustWorkloadModel random_init(const ActionStructure& structure, std::uint64_t seed);
std::uint64_t restart_seed(std::uint64_t base_seed, std::size_t restart) noexcept;

struct RestartOutcome {
  int index = 0;
  bool ok = false;
  double log_likelihood = 0.0;
  int iterations = 0;
  std::string error;
};

struct MultiFitResult {
  FitResult best;
  std::vector<RestartOutcome> restarts;
};

/// Runs em_fit from config.n_restarts random inits and keeps the highest
/// training log-likelihood (lowest index on ties). Throws AllRestartsFailed.
MultiFitResult multi_restart_fit(const Dataset& dataset, const ActionStructure& structure,
                                 const FitConfig& config);

/// Per-restart table followed by the winning model document.
std::string fit_report(const MultiFitResult& fit, std::string_view generator = {});

}  // namespace trustcal
