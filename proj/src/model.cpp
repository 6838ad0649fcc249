#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "error.hpp"
#include "textdoc.hpp"

namespace trustcal {

namespace {

constexpr double kRowTolerance = 1e-9;

using Components = std::array<std::size_t, kActionDims>;

Components decode_reduced(DimSet dims, std::size_t index) {
  Components c{};
  auto members = dims.dims();
  for (auto it = members.rbegin(); it != members.rend(); ++it) {
    auto card = cardinality(*it);
    c[static_cast<std::size_t>(*it)] = index % card;
    index /= card;
  }
  return c;
}

std::size_t encode_reduced(DimSet dims, const Components& c) {
  std::size_t idx = 0;
  for (auto d : dims.dims()) idx = idx * cardinality(d) + c[static_cast<std::size_t>(d)];
  return idx;
}

template <std::size_t N>
void check_row(const std::array<double, N>& row, const char* what) {
  double sum = 0.0;
  for (double p : row) {
    if (!std::isfinite(p) || p < 0.0) {
      fail(ErrorCode::InvalidArgument, std::string(what) + ": negative or non-finite entry");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kRowTolerance) {
    fail(ErrorCode::InvalidArgument, std::string(what) + ": row does not sum to 1");
  }
}

}  // namespace

std::size_t reduced_index(DimSet dims, const ActionTuple& a) noexcept {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < kActionDims; ++i) {
    auto d = static_cast<ActionDim>(i);
    if (dims.contains(d)) idx = idx * cardinality(d) + component(a, d);
  }
  return idx;
}

ReducedAction reduce_action(const ActionStructure& structure, const ActionTuple& a,
                            Factor factor) {
  auto dims = structure.dims(factor);
  return {dims, reduced_index(dims, a)};
}

std::string ReducedAction::name() const {
  auto members = dims.dims();
  if (members.empty()) return "-";
  auto c = decode_reduced(dims, index);
  std::string out;
  for (auto d : members) {
    if (!out.empty()) out += '+';
    out += component_name(d, c[static_cast<std::size_t>(d)]);
  }
  return out;
}

ReducedAction parse_reduced_action(DimSet dims, std::string_view s) {
  auto members = dims.dims();
  if (members.empty()) {
    if (s != "-") fail(ErrorCode::Parse, "expected '-' for an empty action set");
    return {dims, 0};
  }
  Components c{};
  std::size_t start = 0;
  for (std::size_t k = 0; k < members.size(); ++k) {
    auto pos = s.find('+', start);
    bool last = k + 1 == members.size();
    if (last != (pos == std::string_view::npos)) {
      fail(ErrorCode::Parse, "reduced action '" + std::string(s) + "' does not match " +
                                 to_string(dims));
    }
    auto tok = s.substr(start, last ? std::string_view::npos : pos - start);
    auto d = members[k];
    bool found = false;
    for (std::size_t v = 0; v < cardinality(d); ++v) {
      if (tok == component_name(d, v)) {
        c[static_cast<std::size_t>(d)] = v;
        found = true;
        break;
      }
    }
    if (!found) fail(ErrorCode::Parse, "unknown " + std::string(name(d)) + " '" + std::string(tok) + "'");
    start = pos + 1;
  }
  return {dims, encode_reduced(dims, c)};
}

TrustWorkloadModel TrustWorkloadModel::uniform(const ActionStructure& structure) {
  TrustWorkloadModel m;
  m.structure = structure;
  m.trans_trust.assign(kJointStates * structure.trust_dims.reduced_count(), Dist2{0.5, 0.5});
  m.trans_workload.assign(kJointStates * structure.workload_dims.reduced_count(),
                          Dist2{0.5, 0.5});
  for (auto& row : m.emit_trust) row = {0.5, 0.5};
  for (auto& row : m.emit_workload) row.fill(1.0 / kGazeLevels);
  return m;
}

void TrustWorkloadModel::validate() const {
  structure.validate();
  if (trans_trust.size() != kJointStates * trust_actions() ||
      trans_workload.size() != kJointStates * workload_actions()) {
    fail(ErrorCode::InvalidArgument, "transition tables do not match the action structure");
  }
  check_row(prior_trust, "prior_trust");
  check_row(prior_workload, "prior_workload");
  for (const auto& row : trans_trust) check_row(row, "trans_trust");
  for (const auto& row : trans_workload) check_row(row, "trans_workload");
  for (const auto& row : emit_trust) check_row(row, "emit_trust");
  for (const auto& row : emit_workload) check_row(row, "emit_workload");
}

JointDist joint_transition(const TrustWorkloadModel& model, const JointState& s,
                           const ActionTuple& a) {
  const auto& tr = model.trust_row(s.index(), reduced_index(model.structure.trust_dims, a));
  const auto& wr =
      model.workload_row(s.index(), reduced_index(model.structure.workload_dims, a));
  return {tr[0] * wr[0], tr[0] * wr[1], tr[1] * wr[0], tr[1] * wr[1]};
}

double joint_emission(const TrustWorkloadModel& model, const JointState& s,
                      const ObservationTuple& o) {
  return model.emit_trust[static_cast<std::size_t>(s.trust)][static_cast<std::size_t>(o.reliance)] *
         model.emit_workload[static_cast<std::size_t>(s.workload)][static_cast<std::size_t>(o.gaze)];
}

TransitionMatrix transition_matrix(const TrustWorkloadModel& model, const ActionTuple& a) {
  TransitionMatrix m{};
  const auto rt = reduced_index(model.structure.trust_dims, a);
  const auto rw = reduced_index(model.structure.workload_dims, a);
  for (std::size_t s = 0; s < kJointStates; ++s) {
    const auto& tr = model.trust_row(s, rt);
    const auto& wr = model.workload_row(s, rw);
    m[s * 4 + 0] = tr[0] * wr[0];
    m[s * 4 + 1] = tr[0] * wr[1];
    m[s * 4 + 2] = tr[1] * wr[0];
    m[s * 4 + 3] = tr[1] * wr[1];
  }
  return m;
}

EmissionTable emission_table(const TrustWorkloadModel& model) {
  EmissionTable e{};
  for (std::size_t o = 0; o < kObservations; ++o) {
    auto obs = ObservationTuple::from_index(o);
    for (std::size_t s = 0; s < kJointStates; ++s) {
      e[o * 4 + s] = joint_emission(model, JointState::from_index(s), obs);
    }
  }
  return e;
}

Belief prior_belief(const TrustWorkloadModel& model) {
  Belief b;
  for (std::size_t s = 0; s < kJointStates; ++s) b.probs[s] = model.prior(s);
  return b;
}

Belief belief_update(const TrustWorkloadModel& model, const Belief& b, const ActionTuple& a,
                     const ObservationTuple& o) {
  const auto T = transition_matrix(model, a);
  Belief out;
  double norm = 0.0;
  for (std::size_t sp = 0; sp < kJointStates; ++sp) {
    double pred = 0.0;
    for (std::size_t s = 0; s < kJointStates; ++s) pred += b.probs[s] * T[s * 4 + sp];
    out.probs[sp] = pred * joint_emission(model, JointState::from_index(sp), o);
    norm += out.probs[sp];
  }
  if (!(norm > 0.0)) {
    fail(ErrorCode::ZeroLikelihood, "observation has zero probability under the belief");
  }
  for (auto& p : out.probs) p /= norm;
  return out;
}

std::vector<Belief> filter_sequence(const TrustWorkloadModel& model,
                                    const InteractionSequence& seq) {
  if (seq.steps.empty()) fail(ErrorCode::EmptySequence, "sequence '" + seq.id + "' is empty");
  std::vector<Belief> out;
  out.reserve(seq.steps.size());
  Belief b;
  double norm = 0.0;
  for (std::size_t s = 0; s < kJointStates; ++s) {
    b.probs[s] = model.prior(s) * joint_emission(model, JointState::from_index(s),
                                                 seq.steps[0].observation);
    norm += b.probs[s];
  }
  if (!(norm > 0.0)) fail(ErrorCode::ZeroLikelihood, "first observation impossible under priors");
  for (auto& p : b.probs) p /= norm;
  out.push_back(b);
  for (std::size_t t = 1; t < seq.steps.size(); ++t) {
    b = belief_update(model, b, seq.steps[t].action, seq.steps[t].observation);
    out.push_back(b);
  }
  return out;
}

double sequence_log_likelihood(const TrustWorkloadModel& model, const InteractionSequence& seq) {
  if (seq.steps.empty()) fail(ErrorCode::EmptySequence, "sequence '" + seq.id + "' is empty");
  const auto E = emission_table(model);
  JointDist alpha{};
  double ll = 0.0;
  {
    const auto o = seq.steps[0].observation.index();
    double c = 0.0;
    for (std::size_t s = 0; s < kJointStates; ++s) {
      alpha[s] = model.prior(s) * E[o * 4 + s];
      c += alpha[s];
    }
    if (!(c > 0.0)) return -std::numeric_limits<double>::infinity();
    for (auto& v : alpha) v /= c;
    ll += std::log(c);
  }
  std::array<TransitionMatrix, kActions> cache;
  std::array<bool, kActions> cached{};
  for (std::size_t t = 1; t < seq.steps.size(); ++t) {
    const auto ai = seq.steps[t].action.index();
    if (!cached[ai]) {
      cache[ai] = transition_matrix(model, seq.steps[t].action);
      cached[ai] = true;
    }
    const auto& T = cache[ai];
    const auto o = seq.steps[t].observation.index();
    JointDist next{};
    double c = 0.0;
    for (std::size_t sp = 0; sp < kJointStates; ++sp) {
      double pred = alpha[0] * T[sp] + alpha[1] * T[4 + sp] + alpha[2] * T[8 + sp] +
                    alpha[3] * T[12 + sp];
      next[sp] = pred * E[o * 4 + sp];
      c += next[sp];
    }
    if (!(c > 0.0)) return -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < kJointStates; ++s) alpha[s] = next[s] / c;
    ll += std::log(c);
  }
  return ll;
}

TrustWorkloadModel permute_states(const TrustWorkloadModel& model, bool swap_trust,
                                  bool swap_workload) {
  auto ti = [&](std::size_t t) { return swap_trust ? 1 - t : t; };
  auto wi = [&](std::size_t w) { return swap_workload ? 1 - w : w; };
  auto si = [&](std::size_t s) { return 2 * ti(s / 2) + wi(s % 2); };

  TrustWorkloadModel out = model;
  for (std::size_t i = 0; i < 2; ++i) {
    out.prior_trust[ti(i)] = model.prior_trust[i];
    out.prior_workload[wi(i)] = model.prior_workload[i];
    out.emit_trust[ti(i)] = model.emit_trust[i];
    out.emit_workload[wi(i)] = model.emit_workload[i];
  }
  for (std::size_t s = 0; s < kJointStates; ++s) {
    for (std::size_t r = 0; r < model.trust_actions(); ++r) {
      const auto& src = model.trust_row(s, r);
      auto& dst = out.trust_row(si(s), r);
      dst[ti(0)] = src[0];
      dst[ti(1)] = src[1];
    }
    for (std::size_t r = 0; r < model.workload_actions(); ++r) {
      const auto& src = model.workload_row(s, r);
      auto& dst = out.workload_row(si(s), r);
      dst[wi(0)] = src[0];
      dst[wi(1)] = src[1];
    }
  }
  return out;
}

double emission_entropy(const GazeDist& row) noexcept {
  double h = 0.0;
  for (double p : row)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

LabeledModel label_states(const TrustWorkloadModel& model) {
  const auto plus = static_cast<std::size_t>(Reliance::Plus);
  const double r0 = model.emit_trust[0][plus];
  const double r1 = model.emit_trust[1][plus];
  if (std::abs(r0 - r1) <= 1e-9) {
    fail(ErrorCode::AmbiguousLabel, "trust states emit R_plus with equal probability");
  }
  const double h0 = emission_entropy(model.emit_workload[0]);
  const double h1 = emission_entropy(model.emit_workload[1]);
  if (std::abs(h0 - h1) <= 1e-9) {
    fail(ErrorCode::AmbiguousLabel, "workload states have equal gaze-emission entropy");
  }
  LabeledModel out;
  out.trust_swapped = r0 > r1;
  out.workload_swapped = h0 > h1;
  out.model = permute_states(model, out.trust_swapped, out.workload_swapped);
  return out;
}

TrustWorkloadModel embed_structure(const TrustWorkloadModel& model,
                                   const ActionStructure& superset) {
  const auto& sub = model.structure;
  if (!sub.trust_dims.is_subset_of(superset.trust_dims) ||
      !sub.workload_dims.is_subset_of(superset.workload_dims)) {
    fail(ErrorCode::InvalidArgument, "target structure is not a superset");
  }
  TrustWorkloadModel out = TrustWorkloadModel::uniform(superset);
  out.prior_trust = model.prior_trust;
  out.prior_workload = model.prior_workload;
  out.emit_trust = model.emit_trust;
  out.emit_workload = model.emit_workload;
  for (std::size_t s = 0; s < kJointStates; ++s) {
    for (std::size_t r = 0; r < out.trust_actions(); ++r) {
      auto c = decode_reduced(superset.trust_dims, r);
      out.trust_row(s, r) = model.trust_row(s, encode_reduced(sub.trust_dims, c));
    }
    for (std::size_t r = 0; r < out.workload_actions(); ++r) {
      auto c = decode_reduced(superset.workload_dims, r);
      out.workload_row(s, r) = model.workload_row(s, encode_reduced(sub.workload_dims, c));
    }
  }
  return out;
}

TrustWorkloadModel reference_model() {
  auto m = TrustWorkloadModel::uniform(ActionStructure::paper());
  m.prior_trust = {0.0, 1.0};
  m.prior_workload = {0.5833, 0.4167};
  m.emit_trust[0] = {1.0, 0.0};
  m.emit_trust[1] = {0.02, 0.98};
  m.emit_workload[0] = {0.55, 0.30, 0.05, 0.03, 0.07};
  m.emit_workload[1] = {0.20, 0.15, 0.25, 0.20, 0.20};

  // P(T_high next | current trust) per (transparency, reliability).
  // Rows: AR_off, AR_on; columns: Rel_low, Rel_mid, Rel_high.
  const double stay_high[2][3] = {{0.985, 0.992, 0.999}, {0.998, 0.996, 0.999}};
  const double rise[2][3] = {{0.002, 0.004, 0.030}, {0.008, 0.006, 0.040}};
  for (std::size_t s = 0; s < kJointStates; ++s) {
    const bool trust_high = s / 2 == 1;
    const bool workload_high = s % 2 == 1;
    for (std::size_t ar = 0; ar < 2; ++ar) {
      for (std::size_t rel = 0; rel < 3; ++rel) {
        double p = trust_high ? stay_high[ar][rel] - (workload_high ? 0.002 : 0.0)
                              : rise[ar][rel];
        m.trust_row(s, ar * 3 + rel) = {1.0 - p, p};
        for (std::size_t peds = 0; peds < 2; ++peds) {
          double q;
          if (workload_high) {
            q = 0.97 + 0.015 * static_cast<double>(peds) + 0.005 * static_cast<double>(ar);
          } else {
            q = 0.01 + 0.02 * static_cast<double>(peds) + 0.008 * static_cast<double>(ar) +
                (rel == 0 ? 0.003 : 0.0) + (trust_high ? 0.0 : 0.004);
          }
          m.workload_row(s, (ar * 3 + rel) * 2 + peds) = {1.0 - q, q};
        }
      }
    }
  }
  return m;
}

// --- twmodel/1 -------------------------------------------------------------

namespace {

constexpr std::string_view kModelSchema = "twmodel/1";

template <std::size_t N>
void append_row(std::string& out, const std::array<double, N>& row) {
  for (double v : row) {
    out += ' ';
    out += textdoc::format_double(v);
  }
  out += '\n';
}

template <std::size_t N>
std::array<double, N> read_row(const textdoc::Line& line, std::size_t first) {
  if (line.tokens.size() != first + N) {
    textdoc::parse_error(line, "expected " + std::to_string(N) + " probabilities");
  }
  std::array<double, N> row{};
  for (std::size_t i = 0; i < N; ++i) row[i] = textdoc::parse_double(line.tokens[first + i]);
  return row;
}

JointState parse_joint(const textdoc::Line& line, const std::string& tok) {
  auto plus = tok.find('+');
  if (plus == std::string::npos) textdoc::parse_error(line, "joint state must be T+W");
  return {parse_trust(std::string_view(tok).substr(0, plus)),
          parse_workload(std::string_view(tok).substr(plus + 1))};
}

}  // namespace

std::string model_to_document(const TrustWorkloadModel& model, std::string_view generator) {
  model.validate();
  std::string out;
  out += kModelSchema;
  out += '\n';
  if (!generator.empty()) {
    out += "generator ";
    out += generator;
    out += '\n';
  }
  out += textdoc::categories_block();
  out += "structure trust " + to_string(model.structure.trust_dims) + '\n';
  out += "structure workload " + to_string(model.structure.workload_dims) + '\n';
  out += "prior trust";
  append_row(out, model.prior_trust);
  out += "prior workload";
  append_row(out, model.prior_workload);
  for (std::size_t s = 0; s < kJointStates; ++s) {
    auto js = to_string(JointState::from_index(s));
    for (std::size_t r = 0; r < model.trust_actions(); ++r) {
      out += "transition trust " + js + ' ' +
             ReducedAction{model.structure.trust_dims, r}.name();
      append_row(out, model.trust_row(s, r));
    }
  }
  for (std::size_t s = 0; s < kJointStates; ++s) {
    auto js = to_string(JointState::from_index(s));
    for (std::size_t r = 0; r < model.workload_actions(); ++r) {
      out += "transition workload " + js + ' ' +
             ReducedAction{model.structure.workload_dims, r}.name();
      append_row(out, model.workload_row(s, r));
    }
  }
  for (std::size_t t = 0; t < kTrustLevels; ++t) {
    out += std::string("emission trust ") + name(static_cast<Trust>(t));
    append_row(out, model.emit_trust[t]);
  }
  for (std::size_t w = 0; w < kWorkloadLevels; ++w) {
    out += std::string("emission workload ") + name(static_cast<Workload>(w));
    append_row(out, model.emit_workload[w]);
  }
  out += "end\n";
  return out;
}

TrustWorkloadModel model_from_document(std::string_view text) {
  auto lines = textdoc::tokenize(text);
  textdoc::expect_schema(lines, kModelSchema);

  std::optional<DimSet> trust_dims, workload_dims;
  std::size_t categories = 0;
  bool ended = false;
  TrustWorkloadModel m;
  std::vector<bool> seen_trust, seen_workload;
  bool seen_prior[2] = {false, false};
  bool seen_emit_t[2] = {false, false};
  bool seen_emit_w[2] = {false, false};

  auto ensure_tables = [&](const textdoc::Line& line) {
    if (!trust_dims || !workload_dims) textdoc::parse_error(line, "structure must come first");
    if (m.trans_trust.empty()) {
      m = TrustWorkloadModel::uniform({*trust_dims, *workload_dims});
      seen_trust.assign(m.trans_trust.size(), false);
      seen_workload.assign(m.trans_workload.size(), false);
    }
  };

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
      continue;
    }
    if (kw == "structure") {
      if (tk.size() != 3) textdoc::parse_error(line, "structure <factor> <dims>");
      auto dims = parse_dim_set(tk[2]);
      if (tk[1] == "trust") trust_dims = dims;
      else if (tk[1] == "workload") workload_dims = dims;
      else textdoc::parse_error(line, "unknown factor '" + tk[1] + "'");
      continue;
    }
    if (tk.size() < 2) textdoc::parse_error(line, "truncated record");
    ensure_tables(line);
    const bool trust = tk[1] == "trust";
    if (!trust && tk[1] != "workload") textdoc::parse_error(line, "unknown factor '" + tk[1] + "'");
    if (kw == "prior") {
      (trust ? m.prior_trust : m.prior_workload) = read_row<2>(line, 2);
      seen_prior[trust ? 0 : 1] = true;
    } else if (kw == "transition") {
      if (tk.size() < 4) textdoc::parse_error(line, "transition <factor> <state> <action> p...");
      auto s = parse_joint(line, tk[2]).index();
      auto dims = trust ? m.structure.trust_dims : m.structure.workload_dims;
      auto r = parse_reduced_action(dims, tk[3]).index;
      auto n = trust ? m.trust_actions() : m.workload_actions();
      auto& seen = trust ? seen_trust : seen_workload;
      if (seen[s * n + r]) textdoc::parse_error(line, "duplicate transition row");
      seen[s * n + r] = true;
      (trust ? m.trust_row(s, r) : m.workload_row(s, r)) = read_row<2>(line, 4);
    } else if (kw == "emission") {
      if (tk.size() < 3) textdoc::parse_error(line, "emission <factor> <state> p...");
      if (trust) {
        auto t = static_cast<std::size_t>(parse_trust(tk[2]));
        m.emit_trust[t] = read_row<2>(line, 3);
        seen_emit_t[t] = true;
      } else {
        auto w = static_cast<std::size_t>(parse_workload(tk[2]));
        m.emit_workload[w] = read_row<kGazeLevels>(line, 3);
        seen_emit_w[w] = true;
      }
    } else {
      textdoc::parse_error(line, "unknown record '" + kw + "'");
    }
  }
  textdoc::require_all_categories(categories);
  if (!ended) fail(ErrorCode::Parse, "model document is truncated (missing 'end')");
  if (m.trans_trust.empty()) fail(ErrorCode::Parse, "model document has no tables");
  auto all = [](const auto& v) { return std::all_of(std::begin(v), std::end(v), [](bool b) { return b; }); };
  if (!all(seen_trust) || !all(seen_workload) || !all(seen_prior) || !all(seen_emit_t) ||
      !all(seen_emit_w)) {
    fail(ErrorCode::Parse, "model document is missing rows");
  }
  m.validate();
  return m;
}

}  // namespace trustcal
