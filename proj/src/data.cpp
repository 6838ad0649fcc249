#include "data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "error.hpp"
#include "rng.hpp"
#include "textdoc.hpp"

namespace trustcal {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Yields (line number, content) for non-blank, non-comment lines. Comment
// bodies go to `on_comment` when given.
template <typename F>
void for_each_record(std::string_view text, F&& f,
                     const std::function<void(std::string_view)>& on_comment = {}) {
  std::size_t pos = 0;
  std::size_t number = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    auto line = trim(text.substr(pos, end == std::string_view::npos ? end : end - pos));
    ++number;
    if (!line.empty() && line.front() != '#') f(number, line);
    if (!line.empty() && line.front() == '#' && on_comment) on_comment(trim(line.substr(1)));
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
}

[[noreturn]] void csv_error(std::size_t line, const std::string& what) {
  fail(ErrorCode::Parse, "line " + std::to_string(line) + ": " + what);
}

}  // namespace

std::size_t Dataset::total_steps() const noexcept {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.steps.size();
  return n;
}

void Dataset::validate() const {
  if (sequences.empty()) fail(ErrorCode::EmptyDataset, "dataset has no sequences");
  std::set<std::string_view> ids;
  for (const auto& s : sequences) {
    if (!ids.insert(s.id).second) {
      fail(ErrorCode::InvalidArgument, "duplicate sequence id '" + s.id + "'");
    }
    s.validate();
  }
}

std::vector<Gaze> propagate_fixations(std::span<const FixationEvent> events,
                                      std::int64_t n_frames) {
  if (events.empty()) fail(ErrorCode::EmptyFixations, "no fixation events");
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (i > 0 && events[i].start_frame <= events[i - 1].start_frame) {
      fail(ErrorCode::UnsortedFixations, "fixation start frames must be strictly increasing");
    }
  }
  if (events.front().start_frame < 0 || events.back().start_frame >= n_frames) {
    fail(ErrorCode::InvalidArgument, "fixation start frames must lie in [0, n_frames)");
  }
  std::vector<Gaze> out(static_cast<std::size_t>(n_frames), Gaze::Other);
  for (std::size_t i = 0; i < events.size(); ++i) {
    auto from = events[i].start_frame;
    auto to = i + 1 < events.size() ? events[i + 1].start_frame : n_frames;
    for (auto f = from; f < to; ++f) out[static_cast<std::size_t>(f)] = events[i].label;
  }
  return out;
}

Reliability label_reliability(double stop_distance_m) {
  if (!std::isfinite(stop_distance_m)) fail(ErrorCode::NonFinite, "stop distance is not finite");
  if (stop_distance_m < 5.0) return Reliability::Low;
  if (stop_distance_m <= 15.0) return Reliability::Mid;
  return Reliability::High;
}

InteractionSequence segment_episode(std::span<const FrameRecord> recording, FrameWindow window,
                                    double pad_seconds, std::string id) {
  const auto n = static_cast<std::int64_t>(recording.size());
  if (window.end < window.start || window.start < 0 || window.end >= n) {
    fail(ErrorCode::EmptyWindow, "intersection window is empty or outside the recording");
  }
  if (!(pad_seconds >= 0.0) || !std::isfinite(pad_seconds)) {
    fail(ErrorCode::InvalidArgument, "padding must be a finite nonnegative number of seconds");
  }
  const auto pad = static_cast<std::int64_t>(std::llround(pad_seconds * kFramesPerSecond));
  const auto lo = std::max<std::int64_t>(0, window.start - pad);
  const auto hi = std::min<std::int64_t>(n - 1, window.end + pad);
  InteractionSequence seq;
  seq.id = std::move(id);
  seq.steps.reserve(static_cast<std::size_t>(hi - lo + 1));
  for (auto f = lo; f <= hi; ++f) {
    const auto& rec = recording[static_cast<std::size_t>(f)];
    seq.steps.push_back({f, rec.action, rec.observation});
  }
  return seq;
}

InteractionSequence generate_synthetic(const TrustWorkloadModel& model,
                                       std::span<const ActionTuple> scenario,
                                       std::uint64_t seed, std::string id) {
  if (scenario.empty()) fail(ErrorCode::EmptySpec, "scenario has no frames");
  Rng rng(seed);
  InteractionSequence seq;
  seq.id = std::move(id);
  seq.steps.reserve(scenario.size());

  JointDist prior{};
  for (std::size_t s = 0; s < kJointStates; ++s) prior[s] = model.prior(s);
  auto state = JointState::from_index(sample_categorical(rng, prior));

  for (std::size_t t = 0; t < scenario.size(); ++t) {
    if (t > 0) {
      const auto& a = scenario[t];
      const auto& tr =
          model.trust_row(state.index(), reduced_index(model.structure.trust_dims, a));
      const auto& wr =
          model.workload_row(state.index(), reduced_index(model.structure.workload_dims, a));
      auto next_trust = static_cast<Trust>(sample_categorical(rng, tr));
      auto next_workload = static_cast<Workload>(sample_categorical(rng, wr));
      state = {next_trust, next_workload};
    }
    ObservationTuple o;
    o.reliance = static_cast<Reliance>(
        sample_categorical(rng, model.emit_trust[static_cast<std::size_t>(state.trust)]));
    o.gaze = static_cast<Gaze>(
        sample_categorical(rng, model.emit_workload[static_cast<std::size_t>(state.workload)]));
    seq.steps.push_back({static_cast<std::int64_t>(t), scenario[t], o});
  }
  return seq;
}

Dataset synthetic_study(const TrustWorkloadModel& model, const StudyDesign& design,
                        std::uint64_t seed) {
  if (design.participants < 1 || design.intersections_per_condition < 1 ||
      design.frames_per_episode < 1) {
    fail(ErrorCode::InvalidArgument, "study design counts must be positive");
  }
  Dataset ds;
  ds.provenance.push_back("synthetic study: " + std::to_string(design.participants) +
                          " participants x 8 conditions x " +
                          std::to_string(design.intersections_per_condition) +
                          " intersections x " + std::to_string(design.frames_per_episode) +
                          " frames, seed " + std::to_string(seed));
  Rng rng(seed);
  std::uint64_t stream = 0;
  for (int p = 0; p < design.participants; ++p) {
    for (int c = 0; c < 8; ++c) {
      const auto transparency = static_cast<Transparency>(c / 4);
      const auto traffic = static_cast<Traffic>((c / 2) % 2);
      const auto peds = static_cast<Pedestrians>(c % 2);
      for (int i = 0; i < design.intersections_per_condition; ++i) {
        const auto rel = static_cast<Reliability>(uniform_index(rng, kReliabilityLevels));
        std::vector<ActionTuple> scenario(static_cast<std::size_t>(design.frames_per_episode),
                                          ActionTuple{transparency, rel, traffic, peds});
        char id[64];
        std::snprintf(id, sizeof id, "p%02d/c%d/i%d", p, c, i);
        ds.sequences.push_back(generate_synthetic(model, scenario, child_seed(seed, stream++), id));
      }
    }
  }
  return ds;
}

std::string stratum_of(std::string_view sequence_id) {
  auto first = sequence_id.find('/');
  if (first == std::string_view::npos || first == 0) return {};
  auto second = sequence_id.find('/', first + 1);
  if (second == std::string_view::npos || second == first + 1) return {};
  return std::string(sequence_id.substr(0, second));
}

Dataset read_dataset_csv(std::string_view text) {
  Dataset ds;
  std::unordered_map<std::string, std::size_t> index;
  bool header = false;
  for_each_record(text, [&](std::size_t number, std::string_view line) {
    if (!header) {
      if (line != kSequenceHeader) {
        csv_error(number, "expected header '" + std::string(kSequenceHeader) + "'");
      }
      header = true;
      return;
    }
    auto f = split_csv(line);
    if (f.size() != 8) csv_error(number, "expected 8 fields");
    try {
      Step step;
      step.t = textdoc::parse_int(f[1]);
      step.action = {parse_transparency(f[2]), parse_reliability(f[3]), parse_traffic(f[4]),
                     parse_pedestrians(f[5])};
      step.observation = {parse_reliance(f[6]), parse_gaze(f[7])};
      std::string id(f[0]);
      if (id.empty()) csv_error(number, "empty seq_id");
      auto [it, inserted] = index.try_emplace(id, ds.sequences.size());
      if (inserted) ds.sequences.push_back({id, {}});
      auto& seq = ds.sequences[it->second];
      if (!seq.steps.empty() && step.t != seq.steps.back().t + 1) {
        csv_error(number, "frame index of '" + id + "' must increase by 1");
      }
      seq.steps.push_back(step);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Parse && std::string_view(e.what()).substr(0, 5) != "line ") {
        csv_error(number, e.what());
      }
      throw;
    }
  }, [&](std::string_view comment) {
    // preamble lines are regenerated on write; anything else before the
    // header is provenance
    if (header || comment.starts_with("schema:") || comment.starts_with("generator:")) return;
    ds.provenance.emplace_back(comment);
  });
  if (!header) fail(ErrorCode::Parse, "missing sequence CSV header");
  if (ds.sequences.empty()) fail(ErrorCode::EmptyDataset, "sequence file has no rows");
  return ds;
}

std::string csv_preamble(std::string_view schema, std::string_view generator) {
  std::string out = "# schema: ";
  out += schema;
  out += '\n';
  if (!generator.empty()) {
    out += "# generator: ";
    out += generator;
    out += '\n';
  }
  return out;
}

std::string write_dataset_csv(const Dataset& dataset, std::string_view generator) {
  std::string out = csv_preamble("twdata/1", generator);
  for (const auto& p : dataset.provenance) out += "# " + p + '\n';
  out += kSequenceHeader;
  out += '\n';
  for (const auto& seq : dataset.sequences) {
    for (const auto& st : seq.steps) {
      out += seq.id;
      out += ',';
      out += std::to_string(st.t);
      out += ',';
      out += name(st.action.transparency);
      out += ',';
      out += name(st.action.reliability);
      out += ',';
      out += name(st.action.traffic);
      out += ',';
      out += name(st.action.pedestrians);
      out += ',';
      out += name(st.observation.reliance);
      out += ',';
      out += name(st.observation.gaze);
      out += '\n';
    }
  }
  return out;
}

std::vector<FixationEvent> read_fixations_csv(std::string_view text) {
  std::vector<FixationEvent> events;
  bool header = false;
  for_each_record(text, [&](std::size_t number, std::string_view line) {
    if (!header) {
      if (line != "start_frame,label") csv_error(number, "expected header 'start_frame,label'");
      header = true;
      return;
    }
    auto f = split_csv(line);
    if (f.size() != 2) csv_error(number, "expected 2 fields");
    events.push_back({textdoc::parse_int(f[0]), parse_gaze(f[1])});
  });
  if (!header) fail(ErrorCode::Parse, "missing fixation CSV header");
  return events;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write '" + path + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) fail(ErrorCode::Io, "write failed for '" + path + "'");
}

}  // namespace trustcal
