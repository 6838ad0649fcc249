#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "model.hpp"
#include "types.hpp"

namespace trustcal {

struct FixationEvent {
  std::int64_t start_frame = 0;
  Gaze label = Gaze::Other;
};

struct Dataset {
  std::vector<InteractionSequence> sequences;
  std::vector<std::string> provenance;

  std::size_t total_steps() const noexcept;
  /// Throws EmptyDataset, InvalidArgument (duplicate ids) or sequence errors.
  void validate() const;
};

/// Per-frame gaze: each frame takes the label of the latest fixation that
/// started at or before it; frames before the first fixation are G_oth.
std::vector<Gaze> propagate_fixations(std::span<const FixationEvent> events,
                                      std::int64_t n_frames);

/// Stop distance before the line (negative = crossed) to reliability:
/// < 5 m low, [5, 15] m mid, > 15 m high.
Reliability label_reliability(double stop_distance_m);

struct FrameRecord {
  ActionTuple action;
  ObservationTuple observation;
};

/// Inclusive frame range of one intersection.
struct FrameWindow {
  std::int64_t start = 0;
  std::int64_t end = 0;
};

/// Cuts one episode out of a recording, padded by `pad_seconds` on both
/// sides and clamped to the recording. Frame indices are preserved.
InteractionSequence segment_episode(std::span<const FrameRecord> recording, FrameWindow window,
                                    double pad_seconds = 3.0, std::string id = "episode");

/// Samples a sequence from `model` under the per-frame actions. The first
/// state comes from the priors; action t drives the transition into frame t.
InteractionSequence generate_synthetic(const TrustWorkloadModel& model,
                                       std::span<const ActionTuple> scenario,
                                       std::uint64_t seed, std::string id = "synthetic");

/// Synthetic within-subject study: every participant sees every
/// (transparency, traffic, pedestrians) condition at several intersections,
/// reliability drawn uniformly per intersection, one constant action per
/// episode. Sequence ids are "p<participant>/c<condition>/i<intersection>".
struct StudyDesign {
  int participants = 10;
  int intersections_per_condition = 3;
  int frames_per_episode = 200;
};

Dataset synthetic_study(const TrustWorkloadModel& model, const StudyDesign& design,
                        std::uint64_t seed);

/// Stratification key of an id of the form "participant/condition/...".
/// Returns an empty string when the id does not carry both keys.
std::string stratum_of(std::string_view sequence_id);

inline constexpr std::string_view kSequenceHeader =
    "seq_id,t,transparency,reliability,traffic,pedestrians,reliance,gaze";

Dataset read_dataset_csv(std::string_view text);
std::string write_dataset_csv(const Dataset& dataset, std::string_view generator = {});
std::vector<FixationEvent> read_fixations_csv(std::string_view text);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

/// "# schema: <schema>" and, if given, "# generator: <line>" comment lines.
std::string csv_preamble(std::string_view schema, std::string_view generator);

}  // namespace trustcal
