#include "estimation.hpp"

#include <cmath>
#include <limits>

#include "error.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "textdoc.hpp"

namespace trustcal {

namespace {

struct EncodedSequence {
  std::vector<std::uint8_t> action;
  std::vector<std::uint8_t> observation;
};

std::vector<EncodedSequence> encode(const Dataset& dataset) {
  std::vector<EncodedSequence> out;
  out.reserve(dataset.sequences.size());
  for (const auto& seq : dataset.sequences) {
    EncodedSequence e;
    e.action.reserve(seq.steps.size());
    e.observation.reserve(seq.steps.size());
    for (const auto& st : seq.steps) {
      e.action.push_back(static_cast<std::uint8_t>(st.action.index()));
      e.observation.push_back(static_cast<std::uint8_t>(st.observation.index()));
    }
    out.push_back(std::move(e));
  }
  return out;
}

// Expected sufficient statistics, keyed by full action / observation so one
// E-step serves any structure.
struct Stats {
  JointDist first{};                                 // sum of gamma_1
  std::array<PairDist, kActions> pairs{};             // sum of xi_t by a_{t+1}
  std::array<JointDist, kObservations> occupancy{};   // sum of gamma_t by o_t
  double log_likelihood = 0.0;
};

struct Workspace {
  std::vector<JointDist> alpha;
  std::vector<double> scale;
};

// Accumulates one sequence into `stats`. Returns false on zero likelihood.
bool accumulate(const EncodedSequence& seq, const std::array<TransitionMatrix, kActions>& T,
                const EmissionTable& E, const JointDist& prior, Workspace& ws, Stats& stats) {
  const std::size_t n = seq.observation.size();
  ws.alpha.resize(n);
  ws.scale.resize(n);
  auto& alpha = ws.alpha;
  auto& scale = ws.scale;

  {
    const double* e = &E[seq.observation[0] * 4];
    double c = 0.0;
    for (std::size_t s = 0; s < 4; ++s) {
      alpha[0][s] = prior[s] * e[s];
      c += alpha[0][s];
    }
    if (!(c > 0.0)) return false;
    for (auto& v : alpha[0]) v /= c;
    scale[0] = c;
  }
  for (std::size_t t = 1; t < n; ++t) {
    const auto& M = T[seq.action[t]];
    const double* e = &E[seq.observation[t] * 4];
    const auto& a = alpha[t - 1];
    double c = 0.0;
    for (std::size_t sp = 0; sp < 4; ++sp) {
      double v = (a[0] * M[sp] + a[1] * M[4 + sp] + a[2] * M[8 + sp] + a[3] * M[12 + sp]) * e[sp];
      alpha[t][sp] = v;
      c += v;
    }
    if (!(c > 0.0)) return false;
    const double inv = 1.0 / c;
    for (auto& v : alpha[t]) v *= inv;
    scale[t] = c;
  }

  double ll = 0.0;
  for (std::size_t t = 0; t < n; ++t) ll += std::log(scale[t]);
  stats.log_likelihood += ll;

  JointDist beta{1.0, 1.0, 1.0, 1.0};
  {
    auto& occ = stats.occupancy[seq.observation[n - 1]];
    for (std::size_t s = 0; s < 4; ++s) occ[s] += alpha[n - 1][s];
  }
  for (std::size_t t = n - 1; t-- > 0;) {
    const auto& M = T[seq.action[t + 1]];
    const double* e = &E[seq.observation[t + 1] * 4];
    const double inv = 1.0 / scale[t + 1];
    JointDist eb;
    for (std::size_t sp = 0; sp < 4; ++sp) eb[sp] = e[sp] * beta[sp] * inv;
    auto& pair = stats.pairs[seq.action[t + 1]];
    JointDist next_beta;
    const auto& a = alpha[t];
    for (std::size_t s = 0; s < 4; ++s) {
      const double* row = &M[s * 4];
      double b0 = row[0] * eb[0], b1 = row[1] * eb[1], b2 = row[2] * eb[2], b3 = row[3] * eb[3];
      pair[s * 4 + 0] += a[s] * b0;
      pair[s * 4 + 1] += a[s] * b1;
      pair[s * 4 + 2] += a[s] * b2;
      pair[s * 4 + 3] += a[s] * b3;
      next_beta[s] = b0 + b1 + b2 + b3;
    }
    beta = next_beta;
    auto& occ = stats.occupancy[seq.observation[t]];
    for (std::size_t s = 0; s < 4; ++s) occ[s] += a[s] * beta[s];
    if (t == 0) {
      for (std::size_t s = 0; s < 4; ++s) stats.first[s] += a[s] * beta[s];
    }
  }
  if (n == 1) {
    for (std::size_t s = 0; s < 4; ++s) stats.first[s] += alpha[0][s];
  }
  return true;
}

Stats e_step(const TrustWorkloadModel& model, const std::vector<EncodedSequence>& data,
             Workspace& ws) {
  std::array<TransitionMatrix, kActions> T;
  for (std::size_t a = 0; a < kActions; ++a) T[a] = transition_matrix(model, ActionTuple::from_index(a));
  const auto E = emission_table(model);
  JointDist prior;
  for (std::size_t s = 0; s < 4; ++s) prior[s] = model.prior(s);

  Stats stats;
  for (const auto& seq : data) {
    if (!accumulate(seq, T, E, prior, ws, stats)) {
      fail(ErrorCode::ZeroLikelihood, "a training sequence has zero likelihood under the model");
    }
  }
  return stats;
}

template <std::size_t N>
void normalize_into(std::array<double, N>& row, const std::array<double, N>& counts,
                    double floor) {
  double total = 0.0;
  for (double c : counts) total += c;
  if (!(total > 0.0)) return;  // zero expected count: keep the previous row
  for (std::size_t i = 0; i < N; ++i) row[i] = counts[i] / total;
  if (floor > 0.0) {
    double sum = 0.0;
    for (auto& v : row) {
      v = std::max(v, floor);
      sum += v;
    }
    for (auto& v : row) v /= sum;
  }
}

void m_step(TrustWorkloadModel& model, const Stats& st, double floor) {
  normalize_into(model.prior_trust,
                 Dist2{st.first[0] + st.first[1], st.first[2] + st.first[3]}, floor);
  normalize_into(model.prior_workload,
                 Dist2{st.first[0] + st.first[2], st.first[1] + st.first[3]}, floor);

  const auto nt = model.trust_actions();
  const auto nw = model.workload_actions();
  std::vector<Dist2> trust_counts(kJointStates * nt, Dist2{0.0, 0.0});
  std::vector<Dist2> workload_counts(kJointStates * nw, Dist2{0.0, 0.0});
  for (std::size_t a = 0; a < kActions; ++a) {
    const auto act = ActionTuple::from_index(a);
    const auto rt = reduced_index(model.structure.trust_dims, act);
    const auto rw = reduced_index(model.structure.workload_dims, act);
    const auto& p = st.pairs[a];
    for (std::size_t s = 0; s < kJointStates; ++s) {
      const double* x = &p[s * 4];
      auto& tc = trust_counts[s * nt + rt];
      tc[0] += x[0] + x[1];
      tc[1] += x[2] + x[3];
      auto& wc = workload_counts[s * nw + rw];
      wc[0] += x[0] + x[2];
      wc[1] += x[1] + x[3];
    }
  }
  for (std::size_t i = 0; i < trust_counts.size(); ++i)
    normalize_into(model.trans_trust[i], trust_counts[i], floor);
  for (std::size_t i = 0; i < workload_counts.size(); ++i)
    normalize_into(model.trans_workload[i], workload_counts[i], floor);

  std::array<Dist2, kTrustLevels> reliance{};
  std::array<GazeDist, kWorkloadLevels> gaze{};
  for (std::size_t o = 0; o < kObservations; ++o) {
    const auto obs = ObservationTuple::from_index(o);
    const auto r = static_cast<std::size_t>(obs.reliance);
    const auto g = static_cast<std::size_t>(obs.gaze);
    const auto& occ = st.occupancy[o];
    reliance[0][r] += occ[0] + occ[1];
    reliance[1][r] += occ[2] + occ[3];
    gaze[0][g] += occ[0] + occ[2];
    gaze[1][g] += occ[1] + occ[3];
  }
  for (std::size_t t = 0; t < kTrustLevels; ++t) normalize_into(model.emit_trust[t], reliance[t], floor);
  for (std::size_t w = 0; w < kWorkloadLevels; ++w)
    normalize_into(model.emit_workload[w], gaze[w], floor);
}

FitResult run_em(const std::vector<EncodedSequence>& data, const ActionStructure& structure,
                 const TrustWorkloadModel& init, const FitConfig& config) {
  if (!(init.structure == structure)) {
    fail(ErrorCode::InvalidArgument, "initial model does not match the requested structure");
  }
  init.validate();
  FitResult result;
  result.model = init;
  Workspace ws;
  auto stats = e_step(result.model, data, ws);
  result.ll_trajectory.push_back(stats.log_likelihood);
  for (int it = 0; it < config.max_iter; ++it) {
    m_step(result.model, stats, config.prob_floor);
    ++result.iterations;
    stats = e_step(result.model, data, ws);
    result.ll_trajectory.push_back(stats.log_likelihood);
    const auto n = result.ll_trajectory.size();
    if (result.ll_trajectory[n - 1] - result.ll_trajectory[n - 2] < config.tol) break;
  }
  result.total_log_likelihood = result.ll_trajectory.back();
  if (config.relabel) result.model = label_states(result.model).model;
  return result;
}

}  // namespace

void FitConfig::validate() const {
  if (!(tol > 0.0)) fail(ErrorCode::InvalidArgument, "tol must be positive");
  if (max_iter < 1) fail(ErrorCode::InvalidArgument, "max_iter must be at least 1");
  if (n_restarts < 1) fail(ErrorCode::InvalidArgument, "n_restarts must be at least 1");
  if (!(prob_floor >= 0.0) || prob_floor >= 0.5) {
    fail(ErrorCode::InvalidArgument, "prob_floor must be in [0, 0.5)");
  }
}

ForwardBackward forward_backward(const TrustWorkloadModel& model,
                                 const InteractionSequence& seq) {
  if (seq.steps.empty()) fail(ErrorCode::EmptySequence, "sequence '" + seq.id + "' is empty");
  const std::size_t n = seq.steps.size();
  const auto E = emission_table(model);
  std::vector<TransitionMatrix> T(n);
  for (std::size_t t = 1; t < n; ++t) T[t] = transition_matrix(model, seq.steps[t].action);

  std::vector<JointDist> alpha(n);
  std::vector<double> scale(n);
  for (std::size_t t = 0; t < n; ++t) {
    const auto o = seq.steps[t].observation.index();
    double c = 0.0;
    for (std::size_t sp = 0; sp < 4; ++sp) {
      double pred = 0.0;
      if (t == 0) {
        pred = model.prior(sp);
      } else {
        for (std::size_t s = 0; s < 4; ++s) pred += alpha[t - 1][s] * T[t][s * 4 + sp];
      }
      alpha[t][sp] = pred * E[o * 4 + sp];
      c += alpha[t][sp];
    }
    if (!(c > 0.0)) fail(ErrorCode::ZeroLikelihood, "sequence '" + seq.id + "' is impossible");
    for (auto& v : alpha[t]) v /= c;
    scale[t] = c;
  }

  ForwardBackward out;
  out.gamma.resize(n);
  out.xi.resize(n - 1);
  for (double c : scale) out.log_likelihood += std::log(c);

  JointDist beta{1.0, 1.0, 1.0, 1.0};
  out.gamma[n - 1] = alpha[n - 1];
  for (std::size_t t = n - 1; t-- > 0;) {
    const auto o = seq.steps[t + 1].observation.index();
    JointDist next{};
    auto& xi = out.xi[t];
    for (std::size_t s = 0; s < 4; ++s) {
      for (std::size_t sp = 0; sp < 4; ++sp) {
        const double w = T[t + 1][s * 4 + sp] * E[o * 4 + sp] * beta[sp] / scale[t + 1];
        xi[s * 4 + sp] = alpha[t][s] * w;
        next[s] += w;
      }
    }
    beta = next;
    for (std::size_t s = 0; s < 4; ++s) out.gamma[t][s] = alpha[t][s] * beta[s];
  }
  return out;
}

double dataset_log_likelihood(const TrustWorkloadModel& model, const Dataset& dataset) {
  double total = 0.0;
  for (const auto& seq : dataset.sequences) total += sequence_log_likelihood(model, seq);
  return total;
}

FitResult em_fit(const Dataset& dataset, const ActionStructure& structure,
                 const TrustWorkloadModel& init, const FitConfig& config) {
  config.validate();
  structure.validate();
  dataset.validate();
  return run_em(encode(dataset), structure, init, config);
}

TrustWorkloadModel random_init(const ActionStructure& structure, std::uint64_t seed) {
  structure.validate();
  Rng rng(seed);
  auto m = TrustWorkloadModel::uniform(structure);
  sample_flat_dirichlet(rng, m.prior_trust);
  sample_flat_dirichlet(rng, m.prior_workload);
  for (auto& row : m.trans_trust) sample_flat_dirichlet(rng, row);
  for (auto& row : m.trans_workload) sample_flat_dirichlet(rng, row);
  for (auto& row : m.emit_trust) sample_flat_dirichlet(rng, row);
  for (auto& row : m.emit_workload) sample_flat_dirichlet(rng, row);
  return m;
}

std::uint64_t restart_seed(std::uint64_t base_seed, std::size_t restart) noexcept {
  return child_seed(base_seed, restart);
}

MultiFitResult multi_restart_fit(const Dataset& dataset, const ActionStructure& structure,
                                 const FitConfig& config) {
  config.validate();
  structure.validate();
  dataset.validate();
  const auto data = encode(dataset);
  const auto n = static_cast<std::size_t>(config.n_restarts);

  std::vector<RestartOutcome> outcomes(n);
  std::vector<FitResult> fits(n);
  parallel_for(n, config.jobs, [&](std::size_t i) {
    auto& out = outcomes[i];
    out.index = static_cast<int>(i);
    try {
      auto init = random_init(structure, restart_seed(config.rng_seed, i));
      fits[i] = run_em(data, structure, init, config);
      fits[i].restart_index = static_cast<int>(i);
      out.log_likelihood = fits[i].total_log_likelihood;
      out.iterations = fits[i].iterations;
      out.ok = std::isfinite(out.log_likelihood);
      if (!out.ok) out.error = "non-finite log-likelihood";
    } catch (const Error& e) {
      out.error = std::string(error_code_name(e.code())) + ": " + e.what();
    }
  });

  std::size_t best = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (!outcomes[i].ok) continue;
    if (best == n || outcomes[i].log_likelihood > outcomes[best].log_likelihood) best = i;
  }
  if (best == n) {
    fail(ErrorCode::AllRestartsFailed,
         "all " + std::to_string(n) + " restarts failed (first: " + outcomes.front().error + ")");
  }
  MultiFitResult result;
  result.best = std::move(fits[best]);
  result.restarts = std::move(outcomes);
  return result;
}

std::string fit_report(const MultiFitResult& fit, std::string_view generator) {
  std::string out = "fit-report/1\n";
  if (!generator.empty()) {
    out += "generator ";
    out += generator;
    out += '\n';
  }
  out += "restart log_likelihood iterations status\n";
  for (const auto& r : fit.restarts) {
    out += std::to_string(r.index) + ' ' +
           (r.ok ? textdoc::format_double(r.log_likelihood) : std::string("nan")) + ' ' +
           std::to_string(r.iterations) + ' ' + (r.ok ? std::string("ok") : "failed") + '\n';
  }
  out += "best_restart " + std::to_string(fit.best.restart_index) + '\n';
  out += "best_log_likelihood " + textdoc::format_double(fit.best.total_log_likelihood) + '\n';
  out += "best_iterations " + std::to_string(fit.best.iterations) + '\n';
  out += "model\n";
  out += model_to_document(fit.best.model, generator);
  return out;
}

}  // namespace trustcal
