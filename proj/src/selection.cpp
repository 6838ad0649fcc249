#include "selection.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "error.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "textdoc.hpp"

namespace trustcal {

namespace {

std::uint64_t repeat_seed(std::uint64_t base, int repeat) {
  return child_seed(base, static_cast<std::uint64_t>(repeat));
}

std::uint64_t fold_fit_seed(std::uint64_t base, int repeat, int fold) {
  return child_seed(repeat_seed(base, repeat), 0x1000u + static_cast<std::uint64_t>(fold));
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

FitConfig fit_config_for(const SelectionConfig& config, int repeat, int fold) {
  FitConfig fc;
  fc.tol = config.tol;
  fc.max_iter = config.max_iter;
  fc.n_restarts = config.restarts_per_fit;
  fc.rng_seed = fold_fit_seed(config.rng_seed, repeat, fold);
  fc.relabel = false;
  fc.jobs = 1;
  return fc;
}

double evaluate_fold(const Dataset& dataset, const std::vector<int>& folds, int fold,
                     const ActionStructure& structure, const FitConfig& fc) {
  Dataset train, valid;
  for (std::size_t i = 0; i < dataset.sequences.size(); ++i) {
    (folds[i] == fold ? valid : train).sequences.push_back(dataset.sequences[i]);
  }
  auto fit = multi_restart_fit(train, structure, fc);
  return dataset_log_likelihood(fit.best.model, valid);
}

std::size_t canonical_position(const ActionStructure& s) {
  return static_cast<std::size_t>(s.trust_dims.bits()) * 16 + s.workload_dims.bits();
}

}  // namespace

void SelectionConfig::validate() const {
  if (k_folds < 2) fail(ErrorCode::InvalidArgument, "k_folds must be at least 2");
  if (n_repeats < 1) fail(ErrorCode::InvalidArgument, "n_repeats must be at least 1");
  if (restarts_per_fit < 1) fail(ErrorCode::InvalidArgument, "restarts_per_fit must be at least 1");
}

std::vector<ActionStructure> enumerate_structures() {
  std::vector<ActionStructure> out;
  for (std::uint8_t t = 0; t < 16; ++t) {
    DimSet trust(t);
    if (!trust.contains(ActionDim::Reliability)) continue;
    for (std::uint8_t w = 0; w < 16; ++w) out.push_back({trust, DimSet(w)});
  }
  return out;
}

int count_parameters(const ActionStructure& structure) {
  const auto nt = static_cast<int>(structure.trust_dims.reduced_count());
  const auto nw = static_cast<int>(structure.workload_dims.reduced_count());
  return 1 + 1 + 4 * nt + 4 * nw + 2 * 1 + 2 * 4;
}

double aic(int n_params, double avg_validation_ll) noexcept {
  return 2.0 * n_params - 2.0 * avg_validation_ll;
}

std::vector<int> assign_folds(const Dataset& dataset, int k_folds, Stratify stratify,
                              std::uint64_t seed) {
  const auto n = dataset.sequences.size();
  if (k_folds < 2) fail(ErrorCode::InvalidArgument, "k_folds must be at least 2");
  std::vector<int> folds(n, 0);
  Rng rng(seed);
  if (stratify == Stratify::None) {
    if (n < static_cast<std::size_t>(k_folds)) {
      fail(ErrorCode::StratificationImpossible, "fewer sequences than folds");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng);
    for (std::size_t p = 0; p < n; ++p) folds[order[p]] = static_cast<int>(p % k_folds);
    return folds;
  }

  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) {
    auto key = stratum_of(dataset.sequences[i].id);
    if (key.empty()) {
      fail(ErrorCode::StratificationImpossible,
           "sequence id '" + dataset.sequences[i].id +
               "' does not carry participant/condition keys");
    }
    groups[key].push_back(i);
  }
  for (auto& [key, members] : groups) {
    if (members.size() % static_cast<std::size_t>(k_folds) != 0) {
      fail(ErrorCode::StratificationImpossible,
           "stratum '" + key + "' has " + std::to_string(members.size()) +
               " sequences, not divisible by " + std::to_string(k_folds) + " folds");
    }
    shuffle(members, rng);
    for (std::size_t p = 0; p < members.size(); ++p) {
      folds[members[p]] = static_cast<int>(p % static_cast<std::size_t>(k_folds));
    }
  }
  return folds;
}

CrossValidation cross_validate(const Dataset& dataset, const ActionStructure& structure,
                               const SelectionConfig& config) {
  config.validate();
  structure.validate();
  dataset.validate();
  std::vector<std::vector<int>> folds;
  for (int r = 0; r < config.n_repeats; ++r) {
    folds.push_back(
        assign_folds(dataset, config.k_folds, config.stratify_by, repeat_seed(config.rng_seed, r)));
  }
  const auto k = static_cast<std::size_t>(config.k_folds);
  CrossValidation cv;
  cv.fold_lls.assign(folds.size() * k, 0.0);
  parallel_for(cv.fold_lls.size(), config.jobs, [&](std::size_t job) {
    const int r = static_cast<int>(job / k);
    const int f = static_cast<int>(job % k);
    cv.fold_lls[job] = evaluate_fold(dataset, folds[static_cast<std::size_t>(r)], f, structure,
                                     fit_config_for(config, r, f));
  });
  double sum = 0.0;
  for (double v : cv.fold_lls) sum += v;
  cv.avg_validation_ll = sum / static_cast<double>(cv.fold_lls.size());
  return cv;
}

SelectionReport select_structure(const Dataset& dataset, const SelectionConfig& config,
                                 std::vector<ActionStructure> candidates) {
  config.validate();
  dataset.validate();
  if (candidates.empty()) candidates = enumerate_structures();
  for (const auto& c : candidates) c.validate();
  std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    return canonical_position(a) < canonical_position(b);
  });

  std::vector<std::vector<int>> folds;
  for (int r = 0; r < config.n_repeats; ++r) {
    folds.push_back(
        assign_folds(dataset, config.k_folds, config.stratify_by, repeat_seed(config.rng_seed, r)));
  }
  const auto k = static_cast<std::size_t>(config.k_folds);
  const auto per_structure = folds.size() * k;
  std::vector<double> lls(candidates.size() * per_structure, 0.0);
  parallel_for(lls.size(), config.jobs, [&](std::size_t job) {
    const auto c = job / per_structure;
    const auto rest = job % per_structure;
    const int r = static_cast<int>(rest / k);
    const int f = static_cast<int>(rest % k);
    lls[job] = evaluate_fold(dataset, folds[static_cast<std::size_t>(r)], f, candidates[c],
                             fit_config_for(config, r, f));
  });

  SelectionReport report;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    double sum = 0.0;
    for (std::size_t j = 0; j < per_structure; ++j) sum += lls[c * per_structure + j];
    SelectionRow row;
    row.structure = candidates[c];
    row.n_params = count_parameters(candidates[c]);
    row.avg_validation_ll = sum / static_cast<double>(per_structure);
    row.aic = std::isnan(row.avg_validation_ll) ? std::numeric_limits<double>::infinity()
                                                : aic(row.n_params, row.avg_validation_ll);
    report.rows.push_back(row);
  }
  std::vector<std::size_t> order(report.rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = report.rows[a];
    const auto& rb = report.rows[b];
    if (ra.aic != rb.aic) return ra.aic < rb.aic;
    return ra.n_params < rb.n_params;
  });
  for (std::size_t p = 0; p < order.size(); ++p) report.rows[order[p]].rank = static_cast<int>(p + 1);
  report.chosen = report.rows[order.front()].structure;
  return report;
}

std::string selection_report_csv(const SelectionReport& report, std::string_view generator) {
  std::string out = csv_preamble("selection-report/1", generator);
  out += "# chosen: trust=" + to_string(report.chosen.trust_dims) +
         " workload=" + to_string(report.chosen.workload_dims) + '\n';
  out += "trust_dims,workload_dims,n_params,avg_val_ll,aic,rank\n";
  for (const auto& r : report.rows) {
    out += to_string(r.structure.trust_dims) + ',' + to_string(r.structure.workload_dims) + ',' +
           std::to_string(r.n_params) + ',' + textdoc::format_double(r.avg_validation_ll) + ',' +
           textdoc::format_double(r.aic) + ',' + std::to_string(r.rank) + '\n';
  }
  return out;
}

}  // namespace trustcal
