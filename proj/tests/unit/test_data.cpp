#include "doctest.h"

#include <cmath>
#include <limits>
#include <set>

#include "data.hpp"
#include "error.hpp"
#include "support/oracles.hpp"

using namespace trustcal;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

// chi-square critical value, 9 degrees of freedom, alpha = 0.001
constexpr double kChi2Crit9 = 27.877;

double chi_square(const std::array<long, kObservations>& counts, const std::array<double, kObservations>& p,
                  long n) {
  double x = 0.0;
  for (std::size_t i = 0; i < kObservations; ++i) {
    const double e = p[i] * static_cast<double>(n);
    if (e > 0.0) x += (static_cast<double>(counts[i]) - e) * (static_cast<double>(counts[i]) - e) / e;
  }
  return x;
}

}  // namespace

TEST_CASE("propagate_fixations examples") {
  using G = Gaze;
  std::vector<FixationEvent> one{{0, G::Road}};
  CHECK(propagate_fixations(one, 3) == std::vector<G>{G::Road, G::Road, G::Road});
  std::vector<FixationEvent> two{{0, G::Road}, {2, G::Pedestrian}};
  CHECK(propagate_fixations(two, 4) == std::vector<G>{G::Road, G::Road, G::Pedestrian, G::Pedestrian});
  std::vector<FixationEvent> late{{1, G::Vehicle}};
  CHECK(propagate_fixations(late, 3) == std::vector<G>{G::Other, G::Vehicle, G::Vehicle});
}

TEST_CASE("propagate_fixations errors") {
  std::vector<FixationEvent> none;
  CHECK(code_of([&] { propagate_fixations(none, 3); }) == ErrorCode::EmptyFixations);
  std::vector<FixationEvent> unsorted{{2, Gaze::Road}, {1, Gaze::Pedestrian}};
  CHECK(code_of([&] { propagate_fixations(unsorted, 4); }) == ErrorCode::UnsortedFixations);
  std::vector<FixationEvent> dup{{1, Gaze::Road}, {1, Gaze::Pedestrian}};
  CHECK(code_of([&] { propagate_fixations(dup, 4); }) == ErrorCode::UnsortedFixations);
  std::vector<FixationEvent> outside{{5, Gaze::Road}};
  CHECK_THROWS_AS(propagate_fixations(outside, 4), Error);
  std::vector<FixationEvent> negative{{-1, Gaze::Road}};
  CHECK_THROWS_AS(propagate_fixations(negative, 4), Error);
}

TEST_CASE("propagate_fixations output length and labels on random inputs") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::int64_t>(1 + uniform_index(rng, 60));
    std::vector<FixationEvent> events;
    std::set<Gaze> used;
    std::int64_t f = static_cast<std::int64_t>(uniform_index(rng, static_cast<std::size_t>(n)));
    while (f < n) {
      const auto g = static_cast<Gaze>(uniform_index(rng, 4));
      events.push_back({f, g});
      used.insert(g);
      f += 1 + static_cast<std::int64_t>(uniform_index(rng, 8));
    }
    const auto out = propagate_fixations(events, n);
    CHECK(static_cast<std::int64_t>(out.size()) == n);
    for (std::int64_t i = 0; i < n; ++i) {
      const auto g = out[static_cast<std::size_t>(i)];
      CHECK((used.count(g) || g == Gaze::Other));
      if (i < events.front().start_frame) CHECK(g == Gaze::Other);
    }
  }
}

TEST_CASE("label_reliability thresholds") {
  CHECK(label_reliability(-2.0) == Reliability::Low);
  CHECK(label_reliability(10.0) == Reliability::Mid);
  CHECK(label_reliability(20.0) == Reliability::High);
  CHECK(label_reliability(4.999999) == Reliability::Low);
  CHECK(label_reliability(5.0) == Reliability::Mid);
  CHECK(label_reliability(15.0) == Reliability::Mid);
  CHECK(label_reliability(15.000001) == Reliability::High);
  CHECK(code_of([] { label_reliability(std::nan("")); }) == ErrorCode::NonFinite);
  CHECK(code_of([] { label_reliability(std::numeric_limits<double>::infinity()); }) == ErrorCode::NonFinite);
}

TEST_CASE("label_reliability is a monotone step function") {
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const double a = -50.0 + 100.0 * uniform01(rng);
    const double b = -50.0 + 100.0 * uniform01(rng);
    const double lo = std::min(a, b), hi = std::max(a, b);
    CHECK(label_reliability(lo) <= label_reliability(hi));
  }
}

TEST_CASE("segment_episode pads by 25 frames per second and clamps") {
  std::vector<FrameRecord> rec(400);
  for (std::size_t i = 0; i < rec.size(); ++i) rec[i].action = ActionTuple::from_index(i % kActions);
  auto s = segment_episode(rec, {100, 200}, 3.0);
  CHECK(s.steps.front().t == 25);
  CHECK(s.steps.back().t == 275);
  CHECK(s.steps.size() == 251);
  CHECK(s.steps[0].action == rec[25].action);
  s = segment_episode(rec, {100, 200}, 0.0);
  CHECK(s.steps.front().t == 100);
  CHECK(s.steps.back().t == 200);

  std::vector<FrameRecord> short_rec(60);
  s = segment_episode(short_rec, {10, 50}, 3.0);
  CHECK(s.steps.front().t == 0);
  CHECK(s.steps.back().t == 59);
  CHECK_NOTHROW(s.validate());

  CHECK(code_of([&] { segment_episode(short_rec, {50, 10}); }) == ErrorCode::EmptyWindow);
  CHECK(code_of([&] { segment_episode(short_rec, {10, 60}); }) == ErrorCode::EmptyWindow);
  CHECK_THROWS_AS(segment_episode(short_rec, {10, 20}, -1.0), Error);
}

TEST_CASE("generate_synthetic on a deterministic model ignores the seed") {
  auto m = TrustWorkloadModel::uniform(ActionStructure::paper());
  m.prior_trust = {1.0, 0.0};
  m.prior_workload = {0.0, 1.0};
  // trust alternates, workload stays high
  for (std::size_t s = 0; s < 4; ++s) {
    const auto js = JointState::from_index(s);
    for (std::size_t r = 0; r < m.trust_actions(); ++r) {
      m.trust_row(s, r) = js.trust == Trust::High ? Dist2{1, 0} : Dist2{0, 1};
    }
    for (std::size_t r = 0; r < m.workload_actions(); ++r) m.workload_row(s, r) = {0, 1};
  }
  m.emit_trust[0] = {1, 0};
  m.emit_trust[1] = {0, 1};
  m.emit_workload[0] = {1, 0, 0, 0, 0};
  m.emit_workload[1] = {0, 0, 0, 1, 0};
  std::vector<ActionTuple> scen(12, ActionTuple{});
  const auto a = generate_synthetic(m, scen, 1);
  const auto b = generate_synthetic(m, scen, 999);
  REQUIRE(a.steps.size() == 12);
  for (std::size_t t = 0; t < 12; ++t) {
    CHECK(a.steps[t].observation == b.steps[t].observation);
    CHECK(a.steps[t].t == static_cast<std::int64_t>(t));
    CHECK(a.steps[t].observation.reliance == (t % 2 == 0 ? Reliance::Minus : Reliance::Plus));
    CHECK(a.steps[t].observation.gaze == Gaze::Sidewalk);
  }
}

TEST_CASE("generate_synthetic is deterministic given the seed") {
  const auto m = reference_model();
  Rng rng(1);
  std::vector<ActionTuple> scen;
  for (int i = 0; i < 300; ++i) scen.push_back(oracle::random_action(rng));
  const auto a = generate_synthetic(m, scen, 42, "x");
  const auto b = generate_synthetic(m, scen, 42, "x");
  for (std::size_t t = 0; t < scen.size(); ++t) {
    CHECK(a.steps[t].observation == b.steps[t].observation);
    CHECK(a.steps[t].action == scen[t]);
  }
  std::vector<ActionTuple> empty;
  CHECK_THROWS_AS(generate_synthetic(m, empty, 1), Error);
}

TEST_CASE("first-observation reliance frequency is within 3 sigma of the model") {
  Rng rng(17);
  const auto m = oracle::random_model(rng);
  double p = 0.0;
  for (int s = 0; s < 4; ++s) p += oracle::prior(m, s) * m.emit_trust[static_cast<std::size_t>(s / 2)][1];
  const int n = 10000;
  int plus = 0;
  std::vector<ActionTuple> scen{ActionTuple{}};
  for (int i = 0; i < n; ++i) {
    if (generate_synthetic(m, scen, static_cast<std::uint64_t>(i)).steps[0].observation.reliance == Reliance::Plus) {
      ++plus;
    }
  }
  const double sigma = std::sqrt(p * (1 - p) / n);
  CHECK(std::abs(static_cast<double>(plus) / n - p) <= 3 * sigma);
}

TEST_CASE("sampled observations pass a chi-square goodness-of-fit test") {
  const auto m = reference_model();
  const ActionTuple a1{}, a2(Transparency::On, Reliability::High, Traffic::Low, Pedestrians::Present);
  std::vector<ActionTuple> scen{a1, a2};

  // exact marginals of o_1 and o_2 by enumeration
  std::array<double, kObservations> p1{}, p2{};
  for (std::size_t oi = 0; oi < kObservations; ++oi) {
    const auto o = ObservationTuple::from_index(oi);
    for (int s = 0; s < 4; ++s) {
      p1[oi] += oracle::prior(m, s) * oracle::emit(m, s, o);
      for (int sp = 0; sp < 4; ++sp) p2[oi] += oracle::prior(m, s) * oracle::trans(m, s, a2, sp) * oracle::emit(m, sp, o);
    }
  }
  const long n = 100000;
  std::array<long, kObservations> c1{}, c2{};
  for (long i = 0; i < n; ++i) {
    const auto seq = generate_synthetic(m, scen, child_seed(2718, static_cast<std::uint64_t>(i)));
    ++c1[seq.steps[0].observation.index()];
    ++c2[seq.steps[1].observation.index()];
  }
  CHECK(chi_square(c1, p1, n) < kChi2Crit9);
  CHECK(chi_square(c2, p2, n) < kChi2Crit9);
}

TEST_CASE("synthetic_study mirrors the study design") {
  StudyDesign d;
  d.frames_per_episode = 5;
  const auto ds = synthetic_study(reference_model(), d, 3);
  CHECK(ds.sequences.size() == 240);
  CHECK(ds.total_steps() == 1200);
  CHECK_NOTHROW(ds.validate());
  CHECK(ds.sequences[0].id == "p00/c0/i0");
  CHECK(ds.sequences.back().id == "p09/c7/i2");
  CHECK(stratum_of("p03/c5/i1") == "p03/c5");
  CHECK(stratum_of("loose-id") == "");
  // condition encodes transparency, traffic, pedestrians; reliability varies
  for (const auto& s : ds.sequences) {
    const int c = s.id[5] - '0';
    const auto& a = s.steps[0].action;
    CHECK(static_cast<int>(a.transparency) == c / 4);
    CHECK(static_cast<int>(a.traffic) == (c / 2) % 2);
    CHECK(static_cast<int>(a.pedestrians) == c % 2);
  }
  const auto again = synthetic_study(reference_model(), d, 3);
  CHECK(write_dataset_csv(again) == write_dataset_csv(ds));
}

TEST_CASE("dataset CSV round-trips and validates") {
  StudyDesign d;
  d.participants = 1;
  d.frames_per_episode = 4;
  const auto ds = synthetic_study(reference_model(), d, 9);
  const auto text = write_dataset_csv(ds, "gen line");
  CHECK(text.rfind("# schema: twdata/1\n# generator: gen line\n", 0) == 0);
  const auto back = read_dataset_csv(text);
  REQUIRE(back.sequences.size() == ds.sequences.size());
  for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
    CHECK(back.sequences[i].id == ds.sequences[i].id);
    REQUIRE(back.sequences[i].steps.size() == ds.sequences[i].steps.size());
    for (std::size_t t = 0; t < ds.sequences[i].steps.size(); ++t) {
      CHECK(back.sequences[i].steps[t].action == ds.sequences[i].steps[t].action);
      CHECK(back.sequences[i].steps[t].observation == ds.sequences[i].steps[t].observation);
    }
  }
  CHECK(write_dataset_csv(back, "gen line") == text);
}

TEST_CASE("dataset CSV errors") {
  const std::string header = "seq_id,t,transparency,reliability,traffic,pedestrians,reliance,gaze\n";
  CHECK(code_of([&] { read_dataset_csv(header); }) == ErrorCode::EmptyDataset);
  CHECK(code_of([&] { read_dataset_csv("a,b,c\n"); }) == ErrorCode::Parse);
  CHECK(code_of([&] { read_dataset_csv(header + "s,0,AR_on,Rel_low,Traffic_low,Peds_absent,R_plus,G_sky\n"); }) ==
        ErrorCode::Parse);
  CHECK_THROWS_AS(read_dataset_csv(header + "s,0,AR_on,Rel_low,Traffic_low,Peds_absent,R_plus,G_road\n"
                                            "s,2,AR_on,Rel_low,Traffic_low,Peds_absent,R_plus,G_road\n"),
                  Error);
  CHECK_THROWS_AS(read_dataset_csv(header + "s,0,AR_on,Rel_low,Traffic_low,Peds_absent,R_plus\n"), Error);
  const auto ok = read_dataset_csv("# comment\n" + header +
                                   "s,7,AR_on,Rel_low,Traffic_low,Peds_absent,R_plus,G_road\n"
                                   "# mid comment\n"
                                   "s,8,AR_off,Rel_mid,Traffic_high,Peds_present,R_minus,G_side\n");
  REQUIRE(ok.sequences.size() == 1);
  CHECK(ok.sequences[0].steps[1].observation.gaze == Gaze::Sidewalk);

  Dataset dup;
  dup.sequences = {ok.sequences[0], ok.sequences[0]};
  CHECK_THROWS_AS(dup.validate(), Error);
  CHECK(code_of([] { Dataset{}.validate(); }) == ErrorCode::EmptyDataset);
}

TEST_CASE("fixation CSV parsing") {
  const auto ev = read_fixations_csv("start_frame,label\n0,G_road\n12,G_ped\n");
  REQUIRE(ev.size() == 2);
  CHECK(ev[1].start_frame == 12);
  CHECK(ev[1].label == Gaze::Pedestrian);
  CHECK_THROWS_AS(read_fixations_csv("frame,label\n0,G_road\n"), Error);
}
