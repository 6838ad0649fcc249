#pragma once

// Domain categories of the trust-workload POMDP. Every enumeration below is
// in canonical order; serialized documents and CSV files use the names
// returned by name() verbatim.

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace trustcal {

enum class Trust : std::uint8_t { Low, High };
enum class Workload : std::uint8_t { Low, High };

enum class Transparency : std::uint8_t { Off, On };
enum class Reliability : std::uint8_t { Low, Mid, High };
enum class Traffic : std::uint8_t { Low, High };
enum class Pedestrians : std::uint8_t { Absent, Present };

enum class Reliance : std::uint8_t { Minus, Plus };
enum class Gaze : std::uint8_t { Road, Vehicle, Pedestrian, Sidewalk, Other };

inline constexpr std::size_t kTrustLevels = 2;
inline constexpr std::size_t kWorkloadLevels = 2;
inline constexpr std::size_t kJointStates = 4;
inline constexpr std::size_t kTransparencyLevels = 2;
inline constexpr std::size_t kReliabilityLevels = 3;
inline constexpr std::size_t kTrafficLevels = 2;
inline constexpr std::size_t kPedestrianLevels = 2;
inline constexpr std::size_t kContexts = 12;
inline constexpr std::size_t kActions = 24;
inline constexpr std::size_t kRelianceLevels = 2;
inline constexpr std::size_t kGazeLevels = 5;
inline constexpr std::size_t kObservations = 10;

const char* name(Trust v) noexcept;
const char* name(Workload v) noexcept;
const char* name(Transparency v) noexcept;
const char* name(Reliability v) noexcept;
const char* name(Traffic v) noexcept;
const char* name(Pedestrians v) noexcept;
const char* name(Reliance v) noexcept;
const char* name(Gaze v) noexcept;

// Throw Error{Parse} on unknown names.
Trust parse_trust(std::string_view s);
Workload parse_workload(std::string_view s);
Transparency parse_transparency(std::string_view s);
Reliability parse_reliability(std::string_view s);
Traffic parse_traffic(std::string_view s);
Pedestrians parse_pedestrians(std::string_view s);
Reliance parse_reliance(std::string_view s);
Gaze parse_gaze(std::string_view s);

/// Joint latent state. Canonical index: 2*trust + workload, i.e.
/// (T_low,W_low), (T_low,W_high), (T_high,W_low), (T_high,W_high).
struct JointState {
  Trust trust = Trust::Low;
  Workload workload = Workload::Low;

  constexpr std::size_t index() const noexcept {
    return 2 * static_cast<std::size_t>(trust) + static_cast<std::size_t>(workload);
  }
  static constexpr JointState from_index(std::size_t i) noexcept {
    return {static_cast<Trust>(i / 2), static_cast<Workload>(i % 2)};
  }
  friend constexpr bool operator==(const JointState&, const JointState&) = default;
};

std::string to_string(const JointState& s);

/// The uncontrollable part of an action: reliability and scene complexity.
struct Context {
  Reliability reliability = Reliability::Low;
  Traffic traffic = Traffic::Low;
  Pedestrians pedestrians = Pedestrians::Absent;

  constexpr std::size_t index() const noexcept {
    return 4 * static_cast<std::size_t>(reliability) +
           2 * static_cast<std::size_t>(traffic) +
           static_cast<std::size_t>(pedestrians);
  }
  static constexpr Context from_index(std::size_t i) noexcept {
    return {static_cast<Reliability>(i / 4), static_cast<Traffic>((i / 2) % 2),
            static_cast<Pedestrians>(i % 2)};
  }
  friend constexpr bool operator==(const Context&, const Context&) = default;
};

/// "Rel_low+Traffic_high+Peds_absent"
std::string to_string(const Context& c);
Context parse_context(std::string_view s);

struct ActionTuple {
  Transparency transparency = Transparency::Off;
  Reliability reliability = Reliability::Low;
  Traffic traffic = Traffic::Low;
  Pedestrians pedestrians = Pedestrians::Absent;

  constexpr ActionTuple() = default;
  constexpr ActionTuple(Transparency t, Reliability r, Traffic tr, Pedestrians p)
      : transparency(t), reliability(r), traffic(tr), pedestrians(p) {}
  constexpr ActionTuple(Transparency t, const Context& c)
      : transparency(t), reliability(c.reliability), traffic(c.traffic),
        pedestrians(c.pedestrians) {}

  constexpr Context context() const noexcept { return {reliability, traffic, pedestrians}; }
  constexpr std::size_t index() const noexcept {
    return kContexts * static_cast<std::size_t>(transparency) + context().index();
  }
  static constexpr ActionTuple from_index(std::size_t i) noexcept {
    return {static_cast<Transparency>(i / kContexts), Context::from_index(i % kContexts)};
  }
  friend constexpr bool operator==(const ActionTuple&, const ActionTuple&) = default;
};

/// "AR_on+Rel_low+Traffic_high+Peds_absent"
std::string to_string(const ActionTuple& a);
ActionTuple parse_action(std::string_view s);

struct ObservationTuple {
  Reliance reliance = Reliance::Minus;
  Gaze gaze = Gaze::Road;

  constexpr std::size_t index() const noexcept {
    return kGazeLevels * static_cast<std::size_t>(reliance) + static_cast<std::size_t>(gaze);
  }
  static constexpr ObservationTuple from_index(std::size_t i) noexcept {
    return {static_cast<Reliance>(i / kGazeLevels), static_cast<Gaze>(i % kGazeLevels)};
  }
  friend constexpr bool operator==(const ObservationTuple&, const ObservationTuple&) = default;
};

// Action dimensions, canonical order.
enum class ActionDim : std::uint8_t { Transparency, Reliability, Traffic, Pedestrians };
inline constexpr std::size_t kActionDims = 4;

const char* name(ActionDim d) noexcept;
ActionDim parse_action_dim(std::string_view s);
std::size_t cardinality(ActionDim d) noexcept;
/// Component of `a` along `d`, as a category index.
std::size_t component(const ActionTuple& a, ActionDim d) noexcept;
const char* component_name(ActionDim d, std::size_t value) noexcept;

/// Subset of action dimensions; bit i set means ActionDim(i) is present.
class DimSet {
 public:
  constexpr DimSet() = default;
  constexpr explicit DimSet(std::uint8_t bits) : bits_(bits & 0xF) {}
  constexpr DimSet(std::initializer_list<ActionDim> dims) {
    for (auto d : dims) bits_ |= static_cast<std::uint8_t>(1u << static_cast<unsigned>(d));
  }
  static constexpr DimSet all() { return DimSet(0xF); }

  constexpr bool contains(ActionDim d) const noexcept {
    return (bits_ >> static_cast<unsigned>(d)) & 1u;
  }
  constexpr std::uint8_t bits() const noexcept { return bits_; }
  constexpr bool is_subset_of(DimSet o) const noexcept { return (bits_ & ~o.bits_) == 0; }
  std::vector<ActionDim> dims() const;
  /// Number of distinct reduced actions: product of member cardinalities.
  std::size_t reduced_count() const noexcept;

  friend constexpr bool operator==(DimSet, DimSet) = default;

 private:
  std::uint8_t bits_ = 0;
};

/// "transparency+reliability", or "none" when empty.
std::string to_string(DimSet d);
/// Accepts '+' or ',' separated names in any order; "none" or "" is empty.
DimSet parse_dim_set(std::string_view s);

enum class Factor : std::uint8_t { Trust, Workload };

/// Which action dimensions condition each latent factor's transitions.
struct ActionStructure {
  DimSet trust_dims{ActionDim::Reliability};
  DimSet workload_dims{};

  DimSet dims(Factor f) const noexcept { return f == Factor::Trust ? trust_dims : workload_dims; }
  /// Throws InvalidArgument if reliability is missing from trust_dims.
  void validate() const;

  /// Trust: {transparency, reliability}; workload: {transparency, reliability, pedestrians}.
  static ActionStructure paper();
  static ActionStructure full();

  friend bool operator==(const ActionStructure&, const ActionStructure&) = default;
};

using JointDist = std::array<double, kJointStates>;

struct Belief {
  JointDist probs{0.25, 0.25, 0.25, 0.25};

  double p_trust_high() const noexcept { return probs[2] + probs[3]; }
  double p_workload_high() const noexcept { return probs[1] + probs[3]; }
  /// Product-form belief from the two marginals.
  static Belief from_marginals(double p_trust_high, double p_workload_high) noexcept;
  static Belief point_mass(const JointState& s) noexcept;
  /// Throws InvalidArgument unless entries are nonnegative and sum to 1 within 1e-9.
  void validate() const;
};

/// Reward indexed by (trust state, reliability). Defaults to the
/// calibration table: +1 for calibrated trust, -1 for over/undertrust.
struct RewardSpec {
  std::array<std::array<double, kReliabilityLevels>, kTrustLevels> table{{
      {1.0, 0.0, -1.0},
      {-1.0, 0.0, 1.0},
  }};

  double operator()(Trust t, Reliability r) const noexcept {
    return table[static_cast<std::size_t>(t)][static_cast<std::size_t>(r)];
  }
  double max_abs() const noexcept;
  void validate() const;
  friend bool operator==(const RewardSpec&, const RewardSpec&) = default;
};

struct Step {
  std::int64_t t = 0;
  ActionTuple action;
  ObservationTuple observation;
};

/// One intersection episode, one step per video frame.
struct InteractionSequence {
  std::string id;
  std::vector<Step> steps;

  /// Throws EmptySequence or InvalidArgument (frames not consecutive).
  void validate() const;
};

inline constexpr double kFramesPerSecond = 25.0;

}  // namespace trustcal
