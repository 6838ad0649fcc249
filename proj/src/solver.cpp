#include "solver.hpp"

#include <algorithm>
#include <cmath>

#include "data.hpp"
#include "error.hpp"
#include "textdoc.hpp"

namespace trustcal {

ContextDist uniform_contexts() noexcept {
  ContextDist d;
  d.fill(1.0 / static_cast<double>(kContexts));
  return d;
}

void SolverConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) fail(ErrorCode::InvalidArgument, "gamma must lie in [0, 1)");
  if (!(vi_tol > 0.0)) fail(ErrorCode::InvalidArgument, "vi_tol must be positive");
  double sum = 0.0;
  for (double p : uncontrollable_dist) {
    if (!(p >= 0.0)) fail(ErrorCode::InvalidArgument, "context probabilities must be nonnegative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    fail(ErrorCode::InvalidArgument, "context distribution must sum to 1");
  }
}

double expected_reward(const RewardSpec& reward, const Belief& b, const Context& u) noexcept {
  return b.p_trust_high() * reward(Trust::High, u.reliability) +
         (1.0 - b.p_trust_high()) * reward(Trust::Low, u.reliability);
}

QTable bellman_backup(const TrustWorkloadModel& model, const RewardSpec& reward,
                      const SolverConfig& config, const QTable& q) {
  // Value of each next state before the next context is revealed.
  JointDist next_value{};
  for (std::size_t sp = 0; sp < kJointStates; ++sp) {
    double v = 0.0;
    for (std::size_t u = 0; u < kContexts; ++u) {
      const double p = config.uncontrollable_dist[u];
      if (p == 0.0) continue;
      v += p * std::max(q[q_index(sp, 0, u)], q[q_index(sp, 1, u)]);
    }
    next_value[sp] = v;
  }
  QTable out{};
  for (std::size_t a = 0; a < kActions; ++a) {
    const auto act = ActionTuple::from_index(a);
    const auto T = transition_matrix(model, act);
    const auto u = act.context().index();
    const auto tau = static_cast<std::size_t>(act.transparency);
    for (std::size_t s = 0; s < kJointStates; ++s) {
      double future = 0.0;
      for (std::size_t sp = 0; sp < kJointStates; ++sp) future += T[s * 4 + sp] * next_value[sp];
      const auto trust = static_cast<Trust>(s / 2);
      out[q_index(s, tau, u)] = reward(trust, act.reliability) + config.gamma * future;
    }
  }
  return out;
}

QmdpPolicy value_iteration(const TrustWorkloadModel& model, const RewardSpec& reward,
                           const SolverConfig& config, std::vector<double>* residuals) {
  config.validate();
  reward.validate();
  model.validate();
  QmdpPolicy policy;
  policy.reward = reward;
  policy.config = config;
  QTable q{};
  for (long it = 0; it < config.max_iterations; ++it) {
    auto next = bellman_backup(model, reward, config, q);
    double residual = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) residual = std::max(residual, std::abs(next[i] - q[i]));
    q = next;
    if (residuals) residuals->push_back(residual);
    if (residual < config.vi_tol) {
      policy.q = q;
      return policy;
    }
  }
  fail(ErrorCode::NonConvergence, "value iteration did not converge");
}

QTable finite_horizon_q(const TrustWorkloadModel& model, const RewardSpec& reward,
                        const SolverConfig& config, int horizon) {
  config.validate();
  QTable q{};
  for (int h = 0; h < horizon; ++h) q = bellman_backup(model, reward, config, q);
  return q;
}

std::array<double, kTransparencyLevels> qmdp_values(const QTable& q, const Belief& b,
                                                     const Context& u) noexcept {
  std::array<double, kTransparencyLevels> v{};
  const auto ui = u.index();
  for (std::size_t a = 0; a < kTransparencyLevels; ++a) {
    for (std::size_t s = 0; s < kJointStates; ++s) v[a] += b.probs[s] * q[q_index(s, a, ui)];
  }
  return v;
}

Transparency qmdp_action(const QmdpPolicy& policy, const Belief& b, const Context& u) noexcept {
  const auto v = qmdp_values(policy.q, b, u);
  return prefers_on(v[0], v[1]) ? Transparency::On : Transparency::Off;
}

double qmdp_belief_value(const QTable& q, const ContextDist& dist, const Belief& b) noexcept {
  double total = 0.0;
  for (std::size_t u = 0; u < kContexts; ++u) {
    if (dist[u] == 0.0) continue;
    const auto v = qmdp_values(q, b, Context::from_index(u));
    total += dist[u] * std::max(v[0], v[1]);
  }
  return total;
}

std::vector<GridCell> policy_grid(const QmdpPolicy& policy, int resolution) {
  if (resolution < 2) fail(ErrorCode::InvalidArgument, "grid resolution must be at least 2");
  std::vector<GridCell> out;
  out.reserve(kContexts * static_cast<std::size_t>(resolution * resolution));
  const double step = 1.0 / static_cast<double>(resolution - 1);
  for (std::size_t u = 0; u < kContexts; ++u) {
    const auto ctx = Context::from_index(u);
    for (int i = 0; i < resolution; ++i) {
      const double pt = i == resolution - 1 ? 1.0 : i * step;
      for (int j = 0; j < resolution; ++j) {
        const double pw = j == resolution - 1 ? 1.0 : j * step;
        out.push_back({ctx, pt, pw, qmdp_action(policy, Belief::from_marginals(pt, pw), ctx)});
      }
    }
  }
  return out;
}

std::string policy_grid_csv(const std::vector<GridCell>& grid, std::string_view generator) {
  std::string out = csv_preamble("policy-grid/1", generator);
  out += "context,pT_high,pW_high,action\n";
  for (const auto& c : grid) {
    out += to_string(c.context) + ',' + textdoc::format_double(c.p_trust_high) + ',' +
           textdoc::format_double(c.p_workload_high) + ',' + name(c.action) + '\n';
  }
  return out;
}

namespace {

struct OracleTables {
  std::array<TransitionMatrix, kActions> T;
  EmissionTable E;
};

double exact_value(const OracleTables& tab, const RewardSpec& reward, const SolverConfig& config,
                   const Belief& b, int horizon) {
  if (horizon == 0) return 0.0;
  double total = 0.0;
  for (std::size_t u = 0; u < kContexts; ++u) {
    const double pu = config.uncontrollable_dist[u];
    if (pu == 0.0) continue;
    const auto ctx = Context::from_index(u);
    const double immediate = expected_reward(reward, b, ctx);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t tau = 0; tau < kTransparencyLevels; ++tau) {
      double future = 0.0;
      if (horizon > 1) {
        const auto& T = tab.T[ActionTuple(static_cast<Transparency>(tau), ctx).index()];
        JointDist pred{};
        for (std::size_t sp = 0; sp < 4; ++sp)
          for (std::size_t s = 0; s < 4; ++s) pred[sp] += b.probs[s] * T[s * 4 + sp];
        for (std::size_t o = 0; o < kObservations; ++o) {
          Belief next;
          double po = 0.0;
          for (std::size_t sp = 0; sp < 4; ++sp) {
            next.probs[sp] = pred[sp] * tab.E[o * 4 + sp];
            po += next.probs[sp];
          }
          if (!(po > 0.0)) continue;
          for (auto& p : next.probs) p /= po;
          future += po * exact_value(tab, reward, config, next, horizon - 1);
        }
      }
      best = std::max(best, immediate + config.gamma * future);
    }
    total += pu * best;
  }
  return total;
}

}  // namespace

double exact_finite_horizon_value(const TrustWorkloadModel& model, const RewardSpec& reward,
                                  const SolverConfig& config, const Belief& b, int horizon) {
  if (horizon > 6) fail(ErrorCode::HorizonTooLarge, "exhaustive expansion is limited to horizon 6");
  if (horizon < 0) fail(ErrorCode::InvalidArgument, "horizon must be nonnegative");
  config.validate();
  b.validate();
  OracleTables tab;
  for (std::size_t a = 0; a < kActions; ++a) tab.T[a] = transition_matrix(model, ActionTuple::from_index(a));
  tab.E = emission_table(model);
  return exact_value(tab, reward, config, b, horizon);
}

Transparency DwellFilter::apply(Transparency desired) noexcept {
  if (!has_last_) {
    has_last_ = true;
    last_ = desired;
    held_ = 1;
    return desired;
  }
  if (desired != last_ && held_ >= min_dwell_) {
    last_ = desired;
    held_ = 1;
    return desired;
  }
  ++held_;
  return last_;
}

// --- twpolicy/1 ------------------------------------------------------------

namespace {

constexpr std::string_view kPolicySchema = "twpolicy/1";

}  // namespace

std::string policy_to_document(const QmdpPolicy& policy, std::string_view generator) {
  using textdoc::format_double;
  std::string out;
  out += kPolicySchema;
  out += '\n';
  if (!generator.empty()) {
    out += "generator ";
    out += generator;
    out += '\n';
  }
  out += textdoc::categories_block();
  out += "gamma " + format_double(policy.config.gamma) + '\n';
  out += "vi_tol " + format_double(policy.config.vi_tol) + '\n';
  for (std::size_t t = 0; t < kTrustLevels; ++t) {
    out += std::string("reward ") + name(static_cast<Trust>(t));
    for (double v : policy.reward.table[t]) out += ' ' + format_double(v);
    out += '\n';
  }
  for (std::size_t u = 0; u < kContexts; ++u) {
    out += "context_prob " + to_string(Context::from_index(u)) + ' ' +
           format_double(policy.config.uncontrollable_dist[u]) + '\n';
  }
  for (std::size_t s = 0; s < kJointStates; ++s) {
    for (std::size_t a = 0; a < kTransparencyLevels; ++a) {
      for (std::size_t u = 0; u < kContexts; ++u) {
        out += "q " + to_string(JointState::from_index(s)) + ' ' +
               name(static_cast<Transparency>(a)) + ' ' + to_string(Context::from_index(u)) +
               ' ' + format_double(policy.q[q_index(s, a, u)]) + '\n';
      }
    }
  }
  out += "end\n";
  return out;
}

QmdpPolicy policy_from_document(std::string_view text) {
  auto lines = textdoc::tokenize(text);
  textdoc::expect_schema(lines, kPolicySchema);
  QmdpPolicy p;
  std::size_t categories = 0;
  bool ended = false, has_gamma = false;
  std::array<bool, kTrustLevels> seen_reward{};
  std::array<bool, kContexts> seen_ctx{};
  std::vector<bool> seen_q(p.q.size(), false);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& line = lines[i];
    const auto& tk = line.tokens;
    if (ended) textdoc::parse_error(line, "content after 'end'");
    if (textdoc::check_categories(line)) {
      ++categories;
      continue;
    }
    const auto& kw = tk[0];
    if (kw == "generator") continue;
    if (kw == "end") {
      ended = true;
    } else if (kw == "gamma" && tk.size() == 2) {
      p.config.gamma = textdoc::parse_double(tk[1]);
      has_gamma = true;
    } else if (kw == "vi_tol" && tk.size() == 2) {
      p.config.vi_tol = textdoc::parse_double(tk[1]);
    } else if (kw == "reward" && tk.size() == 2 + kReliabilityLevels) {
      auto t = static_cast<std::size_t>(parse_trust(tk[1]));
      for (std::size_t r = 0; r < kReliabilityLevels; ++r) {
        p.reward.table[t][r] = textdoc::parse_double(tk[2 + r]);
      }
      seen_reward[t] = true;
    } else if (kw == "context_prob" && tk.size() == 3) {
      auto u = parse_context(tk[1]).index();
      p.config.uncontrollable_dist[u] = textdoc::parse_double(tk[2]);
      seen_ctx[u] = true;
    } else if (kw == "q" && tk.size() == 5) {
      auto plus = tk[1].find('+');
      if (plus == std::string::npos) textdoc::parse_error(line, "joint state must be T+W");
      JointState s{parse_trust(std::string_view(tk[1]).substr(0, plus)),
                   parse_workload(std::string_view(tk[1]).substr(plus + 1))};
      auto idx = q_index(s.index(), static_cast<std::size_t>(parse_transparency(tk[2])),
                         parse_context(tk[3]).index());
      if (seen_q[idx]) textdoc::parse_error(line, "duplicate q entry");
      seen_q[idx] = true;
      p.q[idx] = textdoc::parse_double(tk[4]);
      if (!std::isfinite(p.q[idx])) textdoc::parse_error(line, "q value must be finite");
    } else {
      textdoc::parse_error(line, "unknown or malformed record '" + kw + "'");
    }
  }
  textdoc::require_all_categories(categories);
  if (!ended) fail(ErrorCode::Parse, "policy document is truncated (missing 'end')");
  auto all = [](const auto& v) { return std::all_of(v.begin(), v.end(), [](bool b) { return b; }); };
  if (!has_gamma || !all(seen_reward) || !all(seen_ctx) || !all(seen_q)) {
    fail(ErrorCode::Parse, "policy document is missing entries");
  }
  p.config.validate();
  p.reward.validate();
  return p;
}

RewardSpec reward_from_csv(std::string_view text) {
  RewardSpec r;
  std::array<bool, kTrustLevels> seen{};
  bool header = false;
  auto lines = textdoc::tokenize(text);  // comma-separated values carry no spaces
  for (const auto& line : lines) {
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
      if (f != std::vector<std::string>{"trust", "Rel_low", "Rel_mid", "Rel_high"}) {
        textdoc::parse_error(line, "expected header 'trust,Rel_low,Rel_mid,Rel_high'");
      }
      header = true;
      continue;
    }
    if (f.size() != 4) textdoc::parse_error(line, "expected 4 fields");
    auto t = static_cast<std::size_t>(parse_trust(f[0]));
    for (std::size_t k = 0; k < 3; ++k) r.table[t][k] = textdoc::parse_double(f[k + 1]);
    seen[t] = true;
  }
  if (!seen[0] || !seen[1]) fail(ErrorCode::Parse, "reward file needs rows for T_low and T_high");
  r.validate();
  return r;
}

}  // namespace trustcal
