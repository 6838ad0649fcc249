#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "data.hpp"
#include "estimation.hpp"

namespace trustcal {

enum class Stratify : std::uint8_t {
  ParticipantCondition,  // one episode per (participant, condition) in every fold
  None,
};

struct SelectionConfig {
  int k_folds = 3;
  int n_repeats = 24;
  int restarts_per_fit = 20;
  std::uint64_t rng_seed = 0;
  Stratify stratify_by = Stratify::ParticipantCondition;
  double tol = 1e-6;
  int max_iter = 500;
  int jobs = 1;

  void validate() const;
};

struct SelectionRow {
  ActionStructure structure;
  int n_params = 0;
  double avg_validation_ll = 0.0;
  double aic = 0.0;
  int rank = 0;  // 1 = chosen
};

struct SelectionReport {
  std::vector<SelectionRow> rows;  // canonical structure order
  ActionStructure chosen;
};

/// Every (trust_dims, workload_dims) with reliability in trust_dims: 8 x 16.
std::vector<ActionStructure> enumerate_structures();

/// Free parameters: 1 + 1 (priors) + 4*|trust actions| + 4*|workload actions|
/// + 2 (reliance emissions) + 2*4 (gaze emissions).
int count_parameters(const ActionStructure& structure);

double aic(int n_params, double avg_validation_ll) noexcept;

/// Fold assignment (fold index per sequence) for one repeat.
/// Throws StratificationImpossible.
std::vector<int> assign_folds(const Dataset& dataset, int k_folds, Stratify stratify,
                              std::uint64_t seed);

struct CrossValidation {
  double avg_validation_ll = 0.0;
  std::vector<double> fold_lls;  // repeat-major
};

CrossValidation cross_validate(const Dataset& dataset, const ActionStructure& structure,
                               const SelectionConfig& config);

/// Scores `candidates` (all 128 when empty) and picks the AIC minimizer;
/// ties go to fewer parameters, then canonical order.
SelectionReport select_structure(const Dataset& dataset, const SelectionConfig& config,
                                 std::vector<ActionStructure> candidates = {});

/// `trust_dims,workload_dims,n_params,avg_val_ll,aic,rank`
std::string selection_report_csv(const SelectionReport& report, std::string_view generator = {});

}  // namespace trustcal
