#include "types.hpp"

#include <cmath>

#include "error.hpp"

namespace trustcal {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Parse: return "ParseError";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::EmptyFixations: return "EmptyFixations";
    case ErrorCode::UnsortedFixations: return "UnsortedFixations";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::EmptySpec: return "EmptySpec";
    case ErrorCode::ZeroLikelihood: return "ZeroLikelihood";
    case ErrorCode::AmbiguousLabel: return "AmbiguousLabel";
    case ErrorCode::AllRestartsFailed: return "AllRestartsFailed";
    case ErrorCode::StratificationImpossible: return "StratificationImpossible";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::HorizonTooLarge: return "HorizonTooLarge";
    case ErrorCode::UnknownSession: return "UnknownSession";
  }
  return "Unknown";
}

namespace {

constexpr const char* kTrustNames[] = {"T_low", "T_high"};
constexpr const char* kWorkloadNames[] = {"W_low", "W_high"};
constexpr const char* kTransparencyNames[] = {"AR_off", "AR_on"};
constexpr const char* kReliabilityNames[] = {"Rel_low", "Rel_mid", "Rel_high"};
constexpr const char* kTrafficNames[] = {"Traffic_low", "Traffic_high"};
constexpr const char* kPedestrianNames[] = {"Peds_absent", "Peds_present"};
constexpr const char* kRelianceNames[] = {"R_minus", "R_plus"};
constexpr const char* kGazeNames[] = {"G_road", "G_vehi", "G_ped", "G_side", "G_oth"};
constexpr const char* kDimNames[] = {"transparency", "reliability", "traffic", "pedestrians"};

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const char* const (&names)[N], const char* what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (s == names[i]) return static_cast<E>(i);
  }
  fail(ErrorCode::Parse, std::string("unknown ") + what + " category '" + std::string(s) + "'");
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

const char* name(Trust v) noexcept { return kTrustNames[static_cast<int>(v)]; }
const char* name(Workload v) noexcept { return kWorkloadNames[static_cast<int>(v)]; }
const char* name(Transparency v) noexcept { return kTransparencyNames[static_cast<int>(v)]; }
const char* name(Reliability v) noexcept { return kReliabilityNames[static_cast<int>(v)]; }
const char* name(Traffic v) noexcept { return kTrafficNames[static_cast<int>(v)]; }
const char* name(Pedestrians v) noexcept { return kPedestrianNames[static_cast<int>(v)]; }
const char* name(Reliance v) noexcept { return kRelianceNames[static_cast<int>(v)]; }
const char* name(Gaze v) noexcept { return kGazeNames[static_cast<int>(v)]; }
const char* name(ActionDim d) noexcept { return kDimNames[static_cast<int>(d)]; }

Trust parse_trust(std::string_view s) { return parse_enum<Trust>(s, kTrustNames, "trust"); }
Workload parse_workload(std::string_view s) {
  return parse_enum<Workload>(s, kWorkloadNames, "workload");
}
Transparency parse_transparency(std::string_view s) {
  return parse_enum<Transparency>(s, kTransparencyNames, "transparency");
}
Reliability parse_reliability(std::string_view s) {
  return parse_enum<Reliability>(s, kReliabilityNames, "reliability");
}
Traffic parse_traffic(std::string_view s) {
  return parse_enum<Traffic>(s, kTrafficNames, "traffic");
}
Pedestrians parse_pedestrians(std::string_view s) {
  return parse_enum<Pedestrians>(s, kPedestrianNames, "pedestrians");
}
Reliance parse_reliance(std::string_view s) {
  return parse_enum<Reliance>(s, kRelianceNames, "reliance");
}
Gaze parse_gaze(std::string_view s) { return parse_enum<Gaze>(s, kGazeNames, "gaze"); }
ActionDim parse_action_dim(std::string_view s) {
  return parse_enum<ActionDim>(s, kDimNames, "action dimension");
}

std::string to_string(const JointState& s) {
  return std::string(name(s.trust)) + "+" + name(s.workload);
}

std::string to_string(const Context& c) {
  return std::string(name(c.reliability)) + "+" + name(c.traffic) + "+" + name(c.pedestrians);
}

Context parse_context(std::string_view s) {
  auto parts = split(s, '+');
  if (parts.size() != 3) {
    fail(ErrorCode::Parse, "context must be reliability+traffic+pedestrians, got '" +
                               std::string(s) + "'");
  }
  return {parse_reliability(parts[0]), parse_traffic(parts[1]), parse_pedestrians(parts[2])};
}

std::string to_string(const ActionTuple& a) {
  return std::string(name(a.transparency)) + "+" + to_string(a.context());
}

ActionTuple parse_action(std::string_view s) {
  auto parts = split(s, '+');
  if (parts.size() != 4) {
    fail(ErrorCode::Parse,
         "action must be transparency+reliability+traffic+pedestrians, got '" + std::string(s) +
             "'");
  }
  return {parse_transparency(parts[0]), parse_reliability(parts[1]), parse_traffic(parts[2]),
          parse_pedestrians(parts[3])};
}

std::size_t cardinality(ActionDim d) noexcept {
  switch (d) {
    case ActionDim::Transparency: return kTransparencyLevels;
    case ActionDim::Reliability: return kReliabilityLevels;
    case ActionDim::Traffic: return kTrafficLevels;
    case ActionDim::Pedestrians: return kPedestrianLevels;
  }
  return 0;
}

std::size_t component(const ActionTuple& a, ActionDim d) noexcept {
  switch (d) {
    case ActionDim::Transparency: return static_cast<std::size_t>(a.transparency);
    case ActionDim::Reliability: return static_cast<std::size_t>(a.reliability);
    case ActionDim::Traffic: return static_cast<std::size_t>(a.traffic);
    case ActionDim::Pedestrians: return static_cast<std::size_t>(a.pedestrians);
  }
  return 0;
}

const char* component_name(ActionDim d, std::size_t value) noexcept {
  switch (d) {
    case ActionDim::Transparency: return kTransparencyNames[value];
    case ActionDim::Reliability: return kReliabilityNames[value];
    case ActionDim::Traffic: return kTrafficNames[value];
    case ActionDim::Pedestrians: return kPedestrianNames[value];
  }
  return "?";
}

std::vector<ActionDim> DimSet::dims() const {
  std::vector<ActionDim> out;
  for (std::size_t i = 0; i < kActionDims; ++i) {
    auto d = static_cast<ActionDim>(i);
    if (contains(d)) out.push_back(d);
  }
  return out;
}

std::size_t DimSet::reduced_count() const noexcept {
  std::size_t n = 1;
  for (std::size_t i = 0; i < kActionDims; ++i) {
    auto d = static_cast<ActionDim>(i);
    if (contains(d)) n *= cardinality(d);
  }
  return n;
}

std::string to_string(DimSet d) {
  std::string out;
  for (auto dim : d.dims()) {
    if (!out.empty()) out += '+';
    out += name(dim);
  }
  return out.empty() ? "none" : out;
}

DimSet parse_dim_set(std::string_view s) {
  if (s.empty() || s == "none") return {};
  std::uint8_t bits = 0;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto pos = s.find_first_of("+,", start);
    auto tok = s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    auto d = parse_action_dim(tok);
    bits |= static_cast<std::uint8_t>(1u << static_cast<unsigned>(d));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return DimSet(bits);
}

void ActionStructure::validate() const {
  if (!trust_dims.contains(ActionDim::Reliability)) {
    fail(ErrorCode::InvalidArgument, "trust dimensions must include reliability");
  }
}

ActionStructure ActionStructure::paper() {
  return {DimSet{ActionDim::Transparency, ActionDim::Reliability},
          DimSet{ActionDim::Transparency, ActionDim::Reliability, ActionDim::Pedestrians}};
}

ActionStructure ActionStructure::full() { return {DimSet::all(), DimSet::all()}; }

Belief Belief::from_marginals(double p_trust_high, double p_workload_high) noexcept {
  const double t[2] = {1.0 - p_trust_high, p_trust_high};
  const double w[2] = {1.0 - p_workload_high, p_workload_high};
  Belief b;
  for (std::size_t s = 0; s < kJointStates; ++s) b.probs[s] = t[s / 2] * w[s % 2];
  return b;
}

Belief Belief::point_mass(const JointState& s) noexcept {
  Belief b;
  b.probs = {0.0, 0.0, 0.0, 0.0};
  b.probs[s.index()] = 1.0;
  return b;
}

void Belief::validate() const {
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) fail(ErrorCode::InvalidArgument, "belief entry invalid");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail(ErrorCode::InvalidArgument, "belief does not sum to 1");
}

double RewardSpec::max_abs() const noexcept {
  double m = 0.0;
  for (const auto& row : table)
    for (double v : row) m = std::max(m, std::abs(v));
  return m;
}

void RewardSpec::validate() const {
  for (const auto& row : table)
    for (double v : row)
      if (!std::isfinite(v)) fail(ErrorCode::NonFinite, "reward entries must be finite");
}

void InteractionSequence::validate() const {
  if (steps.empty()) fail(ErrorCode::EmptySequence, "sequence '" + id + "' is empty");
  for (std::size_t i = 1; i < steps.size(); ++i) {
    if (steps[i].t != steps[i - 1].t + 1) {
      fail(ErrorCode::InvalidArgument,
           "sequence '" + id + "': frame indices must increase by 1 (at t=" +
               std::to_string(steps[i].t) + ")");
    }
  }
}

}  // namespace trustcal
