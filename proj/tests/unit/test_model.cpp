#include "doctest.h"

#include <cmath>
#include <limits>

#include "error.hpp"
#include "model.hpp"
#include "support/oracles.hpp"

using namespace trustcal;

namespace {

// Every transition forces (T_high, W_low); emissions are certain.
TrustWorkloadModel forced_model() {
  auto m = TrustWorkloadModel::uniform(ActionStructure::paper());
  m.prior_trust = {0.0, 1.0};
  m.prior_workload = {1.0, 0.0};
  for (auto& r : m.trans_trust) r = {0.0, 1.0};
  for (auto& r : m.trans_workload) r = {1.0, 0.0};
  m.emit_trust[0] = {1.0, 0.0};
  m.emit_trust[1] = {0.0, 1.0};
  m.emit_workload[0] = {1.0, 0.0, 0.0, 0.0, 0.0};
  m.emit_workload[1] = {0.0, 0.0, 1.0, 0.0, 0.0};
  return m;
}

const ObservationTuple kPlusRoad{Reliance::Plus, Gaze::Road};

}  // namespace

TEST_CASE("joint_transition is the outer product of the factor rows") {
  auto m = forced_model();
  const ActionTuple a(Transparency::On, Reliability::Mid, Traffic::High, Pedestrians::Present);
  const auto p = joint_transition(m, {Trust::Low, Workload::High}, a);
  CHECK(p == JointDist{0.0, 0.0, 1.0, 0.0});

  auto u = TrustWorkloadModel::uniform(ActionStructure::paper());
  for (auto v : joint_transition(u, {Trust::High, Workload::High}, a)) CHECK(v == doctest::Approx(0.25));

  const std::size_t s = JointState{Trust::Low, Workload::Low}.index();
  u.trust_row(s, reduced_index(u.structure.trust_dims, a)) = {0.3, 0.7};
  u.workload_row(s, reduced_index(u.structure.workload_dims, a)) = {0.2, 0.8};
  const auto q = joint_transition(u, JointState::from_index(s), a);
  CHECK(q[0] == doctest::Approx(0.06).epsilon(1e-15));
  CHECK(q[1] == doctest::Approx(0.24).epsilon(1e-15));
  CHECK(q[2] == doctest::Approx(0.14).epsilon(1e-15));
  CHECK(q[3] == doctest::Approx(0.56).epsilon(1e-15));
}

TEST_CASE("joint_transition rows sum to one and match the brute-force product on random models") {
  Rng rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = oracle::random_model(rng);
    for (std::size_t ai = 0; ai < kActions; ++ai) {
      const auto a = ActionTuple::from_index(ai);
      for (int s = 0; s < 4; ++s) {
        const auto p = joint_transition(m, JointState::from_index(static_cast<std::size_t>(s)), a);
        double sum = 0.0;
        for (int sp = 0; sp < 4; ++sp) {
          CHECK(p[static_cast<std::size_t>(sp)] == doctest::Approx(oracle::trans(m, s, a, sp)).epsilon(1e-14));
          sum += p[static_cast<std::size_t>(sp)];
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
      }
    }
  }
}

TEST_CASE("joint_emission multiplies the two factor emissions") {
  const auto m = forced_model();
  CHECK(joint_emission(m, {Trust::High, Workload::Low}, kPlusRoad) == 1.0);
  CHECK(joint_emission(m, {Trust::High, Workload::Low}, {Reliance::Minus, Gaze::Road}) == 0.0);

  auto u = TrustWorkloadModel::uniform(ActionStructure::paper());
  u.emit_trust[1] = {0.1, 0.9};
  u.emit_workload[1] = {0.2, 0.2, 0.2, 0.2, 0.2};
  CHECK(joint_emission(u, {Trust::High, Workload::High}, {Reliance::Plus, Gaze::Pedestrian}) ==
        doctest::Approx(0.18).epsilon(1e-15));
}

TEST_CASE("belief_update examples") {
  const auto u = TrustWorkloadModel::uniform(ActionStructure::paper());
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const auto b = belief_update(u, Belief{}, oracle::random_action(rng), oracle::random_observation(rng));
    for (auto v : b.probs) CHECK(v == doctest::Approx(0.25));
  }

  // identity transitions keep a consistent point mass in place
  auto m = forced_model();
  for (std::size_t s = 0; s < 4; ++s) {
    const auto js = JointState::from_index(s);
    for (std::size_t r = 0; r < m.trust_actions(); ++r) {
      m.trust_row(s, r) = js.trust == Trust::High ? Dist2{0, 1} : Dist2{1, 0};
    }
    for (std::size_t r = 0; r < m.workload_actions(); ++r) {
      m.workload_row(s, r) = js.workload == Workload::High ? Dist2{0, 1} : Dist2{1, 0};
    }
  }
  const auto pm = Belief::point_mass({Trust::High, Workload::Low});
  const auto b = belief_update(m, pm, ActionTuple{}, kPlusRoad);
  CHECK(b.probs == pm.probs);

  CHECK_THROWS_AS(belief_update(m, pm, ActionTuple{}, {Reliance::Minus, Gaze::Road}), Error);
  try {
    belief_update(m, pm, ActionTuple{}, {Reliance::Minus, Gaze::Road});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroLikelihood);
  }
}

TEST_CASE("two-step belief_update equals the path-enumerated filter") {
  Rng rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    const auto m = oracle::random_model(rng);
    const auto seq = oracle::random_sequence(rng, 2);
    const auto expected = oracle::filtered(m, seq);
    // step 1 is emitted from the priors: condition on o_1 without a transition
    Belief b = prior_belief(m);
    JointDist post{};
    double z = 0.0;
    for (int s = 0; s < 4; ++s) {
      post[static_cast<std::size_t>(s)] = b.probs[static_cast<std::size_t>(s)] * oracle::emit(m, s, seq.steps[0].observation);
      z += post[static_cast<std::size_t>(s)];
    }
    for (auto& v : post) v /= z;
    CHECK(oracle::max_abs_diff(post, expected[0]) < 1e-12);
    const auto b2 = belief_update(m, Belief{post}, seq.steps[1].action, seq.steps[1].observation);
    CHECK(oracle::max_abs_diff(b2.probs, expected[1]) < 1e-12);
  }
}

TEST_CASE("belief_update is invariant to scaling one observation's emissions") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = oracle::random_model(rng);
    const auto a = oracle::random_action(rng);
    const auto o = oracle::random_observation(rng);
    const Belief b = oracle::random_belief(rng);
    const auto got = belief_update(m, b, a, o);
    const double c = 0.01 + 100.0 * uniform01(rng);
    JointDist post{};
    double z = 0.0;
    for (int sp = 0; sp < 4; ++sp) {
      double pred = 0.0;
      for (int s = 0; s < 4; ++s) pred += b.probs[static_cast<std::size_t>(s)] * oracle::trans(m, s, a, sp);
      post[static_cast<std::size_t>(sp)] = pred * c * oracle::emit(m, sp, o);
      z += post[static_cast<std::size_t>(sp)];
    }
    for (auto& v : post) v /= z;
    CHECK(oracle::max_abs_diff(got.probs, post) < 1e-12);
  }
}

TEST_CASE("sequence_log_likelihood examples") {
  Rng rng(3);
  const auto m = oracle::random_model(rng);
  InteractionSequence one{"one", {{0, oracle::random_action(rng), oracle::random_observation(rng)}}};
  double direct = 0.0;
  for (int s = 0; s < 4; ++s) direct += oracle::prior(m, s) * oracle::emit(m, s, one.steps[0].observation);
  CHECK(sequence_log_likelihood(m, one) == doctest::Approx(std::log(direct)).epsilon(1e-14));

  const auto f = forced_model();
  InteractionSequence forced{"f", {}};
  for (int t = 0; t < 10; ++t) forced.steps.push_back({t, ActionTuple::from_index(static_cast<std::size_t>(t) % kActions), kPlusRoad});
  CHECK(sequence_log_likelihood(f, forced) == 0.0);

  forced.steps[4].observation = {Reliance::Minus, Gaze::Road};
  CHECK(sequence_log_likelihood(f, forced) == -std::numeric_limits<double>::infinity());

  InteractionSequence empty{"e", {}};
  CHECK_THROWS_AS(sequence_log_likelihood(m, empty), Error);
}

TEST_CASE("sequence_log_likelihood and filter_sequence agree with path enumeration") {
  Rng rng(2024);
  for (int trial = 0; trial < 40; ++trial) {
    const auto m = oracle::random_model(rng);
    const auto seq = oracle::random_sequence(rng, 1 + uniform_index(rng, 6));
    CHECK(std::abs(sequence_log_likelihood(m, seq) - std::log(oracle::likelihood(m, seq))) < 1e-10);
    const auto filt = filter_sequence(m, seq);
    const auto expected = oracle::filtered(m, seq);
    REQUIRE(filt.size() == expected.size());
    for (std::size_t t = 0; t < filt.size(); ++t) CHECK(oracle::max_abs_diff(filt[t].probs, expected[t]) < 1e-9);
  }
}

TEST_CASE("label_states examples") {
  auto m = TrustWorkloadModel::uniform(ActionStructure::paper());
  m.emit_trust[0] = {0.0, 1.0};
  m.emit_trust[1] = {1.0, 0.0};
  m.emit_workload[0] = {0.2, 0.2, 0.2, 0.2, 0.2};
  m.emit_workload[1] = {1.0, 0.0, 0.0, 0.0, 0.0};
  const auto l = label_states(m);
  CHECK(l.trust_swapped);
  CHECK(l.workload_swapped);
  CHECK(l.model.emit_trust[1] == Dist2{0.0, 1.0});
  CHECK(l.model.emit_workload[1] == GazeDist{0.2, 0.2, 0.2, 0.2, 0.2});
  CHECK(emission_entropy({0.2, 0.2, 0.2, 0.2, 0.2}) == doctest::Approx(std::log(5.0)));
  CHECK(emission_entropy({1.0, 0.0, 0.0, 0.0, 0.0}) == 0.0);

  // entropies by hand: 0.7,0.2,0.03,0.04,0.03 -> 0.9107; 0.3,0.2,0.2,0.15,0.15 -> 1.5741
  const GazeDist low{0.7, 0.2, 0.03, 0.04, 0.03};
  const GazeDist high{0.3, 0.2, 0.2, 0.15, 0.15};
  CHECK(emission_entropy(low) == doctest::Approx(0.910709).epsilon(1e-4));
  CHECK(emission_entropy(high) == doctest::Approx(1.57412).epsilon(1e-4));
  m.emit_trust[0] = {0.9, 0.1};
  m.emit_trust[1] = {0.2, 0.8};
  m.emit_workload[0] = high;
  m.emit_workload[1] = low;
  const auto l2 = label_states(m);
  CHECK_FALSE(l2.trust_swapped);
  CHECK(l2.workload_swapped);
  CHECK(l2.model.emit_workload[1] == high);

  m.emit_trust[0] = m.emit_trust[1];
  CHECK_THROWS_AS(label_states(m), Error);
}

TEST_CASE("label_states is idempotent and permutations preserve the likelihood") {
  Rng rng(44);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = oracle::random_model(rng);
    const auto seq = oracle::random_sequence(rng, 6);
    const auto once = label_states(m).model;
    const auto twice = label_states(once);
    CHECK_FALSE(twice.trust_swapped);
    CHECK_FALSE(twice.workload_swapped);
    CHECK(twice.model == once);
    for (int mask = 0; mask < 4; ++mask) {
      const auto p = permute_states(m, mask & 1, mask & 2);
      CHECK(sequence_log_likelihood(p, seq) == doctest::Approx(sequence_log_likelihood(m, seq)).epsilon(1e-12));
      CHECK(permute_states(p, mask & 1, mask & 2) == m);
      CHECK(label_states(p).model == once);
    }
  }
}

TEST_CASE("embedding into a superset structure keeps the dynamics") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = oracle::random_model(rng);
    const auto big = embed_structure(m, ActionStructure::full());
    CHECK(big.structure == ActionStructure::full());
    for (std::size_t ai = 0; ai < kActions; ++ai) {
      const auto a = ActionTuple::from_index(ai);
      CHECK(transition_matrix(big, a) == transition_matrix(m, a));
    }
  }
}

TEST_CASE("model documents round-trip losslessly") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = oracle::random_model(rng);
    const auto doc = model_to_document(m, "unit test");
    const auto back = model_from_document(doc);
    CHECK(back == m);
    CHECK(model_to_document(back, "unit test") == doc);
  }
}

TEST_CASE("model documents reject foreign category sets and malformed input") {
  const auto doc = model_to_document(reference_model());
  auto bad = doc;
  const std::string line = "categories gaze G_road G_vehi G_ped G_side G_oth";
  REQUIRE(bad.find(line) != std::string::npos);
  bad.replace(bad.find(line), line.size(), "categories gaze G_road G_vehi G_ped G_side G_other");
  try {
    model_from_document(bad);
    FAIL("expected SchemaMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SchemaMismatch);
  }
  CHECK_THROWS_AS(model_from_document("twpolicy/1\n"), Error);
  CHECK_THROWS_AS(model_from_document(""), Error);
  auto truncated = doc.substr(0, doc.find("emission trust"));
  CHECK_THROWS_AS(model_from_document(truncated), Error);
  auto unnormalized = doc;
  const auto pos = unnormalized.find("emission trust T_low ");
  unnormalized.replace(pos, std::string("emission trust T_low ").size(), "emission trust T_low 5 ");
  CHECK_THROWS_AS(model_from_document(unnormalized), Error);
}

TEST_CASE("reference model is valid and starts from the published priors") {
  const auto m = reference_model();
  CHECK_NOTHROW(m.validate());
  CHECK(m.structure == ActionStructure::paper());
  const auto b = prior_belief(m);
  CHECK(b.p_trust_high() == 1.0);
  CHECK(b.p_workload_high() == doctest::Approx(0.4167));
}
