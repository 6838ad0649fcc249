#include "trustcal/trustcal.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <string>
#include <thread>

#include "data.hpp"
#include "error.hpp"
#include "estimation.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "selection.hpp"
#include "service.hpp"
#include "simulation.hpp"
#include "solver.hpp"

using namespace trustcal;

struct tc_model {
  TrustWorkloadModel m;
};
struct tc_dataset {
  Dataset d;
};
struct tc_policy {
  QmdpPolicy p;
};
struct tc_service {
  std::unique_ptr<SessionManager> sessions;
  std::unique_ptr<HttpService> http;
  bool bound = false;
};

namespace {

thread_local std::string g_last_error;

static_assert(static_cast<int>(ErrorCode::UnknownSession) + 1 == TC_ERR_UNKNOWN_SESSION);

tc_status to_status(ErrorCode code) { return static_cast<tc_status>(static_cast<int>(code) + 1); }

template <class F>
tc_status guard(F&& f) noexcept {
  try {
    f();
    g_last_error.clear();
    return TC_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return TC_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return TC_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) fail(ErrorCode::InvalidArgument, std::string(what) + " must not be null");
}

char* dup_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

std::string_view gen(const char* generator) { return generator ? generator : ""; }

ActionStructure to_structure(tc_structure s) {
  if (s.trust_dims > 0xF || s.workload_dims > 0xF) {
    fail(ErrorCode::InvalidArgument, "dimension mask out of range");
  }
  ActionStructure out{DimSet(static_cast<std::uint8_t>(s.trust_dims)),
                      DimSet(static_cast<std::uint8_t>(s.workload_dims))};
  out.validate();
  return out;
}

tc_structure from_structure(const ActionStructure& s) {
  return {s.trust_dims.bits(), s.workload_dims.bits()};
}

RewardSpec to_reward(const double* r) {
  RewardSpec out;
  if (r) {
    for (int t = 0; t < 2; ++t)
      for (int u = 0; u < 3; ++u) out.table[t][u] = r[t * 3 + u];
  }
  out.validate();
  return out;
}

}  // namespace

extern "C" {

const char* tc_version(void) { return "1.0.0"; }

const char* tc_last_error(void) { return g_last_error.c_str(); }

const char* tc_status_name(tc_status status) {
  if (status == TC_OK) return "Ok";
  if (status == TC_ERR_INTERNAL) return "Internal";
  if (status > TC_OK && status < TC_ERR_INTERNAL) {
    return error_code_name(static_cast<ErrorCode>(static_cast<int>(status) - 1));
  }
  return "Unknown";
}

int tc_status_is_input_error(tc_status status) {
  switch (status) {
    case TC_ERR_ZERO_LIKELIHOOD:
    case TC_ERR_AMBIGUOUS_LABEL:
    case TC_ERR_ALL_RESTARTS_FAILED:
    case TC_ERR_NON_CONVERGENCE:
    case TC_ERR_INTERNAL:
    case TC_OK:
      return 0;
    default:
      return 1;
  }
}

void tc_string_free(char* s) { std::free(s); }

tc_structure tc_structure_paper(void) { return from_structure(ActionStructure::paper()); }

tc_status tc_parse_dims(const char* text, unsigned* out_dims) {
  return guard([&] {
    require(text, "text");
    require(out_dims, "out_dims");
    *out_dims = parse_dim_set(text).bits();
  });
}

tc_status tc_structure_to_string(tc_structure s, char** out) {
  return guard([&] {
    require(out, "out");
    const auto st = to_structure(s);
    *out = dup_string("trust=" + to_string(st.trust_dims) + " workload=" + to_string(st.workload_dims));
  });
}

int tc_count_parameters(tc_structure s) {
  int n = -1;
  guard([&] { n = count_parameters(to_structure(s)); });
  return n;
}

tc_status tc_model_parse(const char* document, tc_model** out) {
  return guard([&] {
    require(document, "document");
    require(out, "out");
    *out = new tc_model{model_from_document(document)};
  });
}

tc_status tc_model_load(const char* path, tc_model** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new tc_model{model_from_document(read_text_file(path))};
  });
}

tc_status tc_model_reference(tc_model** out) {
  return guard([&] {
    require(out, "out");
    *out = new tc_model{reference_model()};
  });
}

tc_status tc_model_to_string(const tc_model* model, const char* generator, char** out) {
  return guard([&] {
    require(model, "model");
    require(out, "out");
    *out = dup_string(model_to_document(model->m, gen(generator)));
  });
}

tc_status tc_model_structure(const tc_model* model, tc_structure* out) {
  return guard([&] {
    require(model, "model");
    require(out, "out");
    *out = from_structure(model->m.structure);
  });
}

void tc_model_free(tc_model* model) { delete model; }

tc_status tc_dataset_parse_csv(const char* text, tc_dataset** out) {
  return guard([&] {
    require(text, "text");
    require(out, "out");
    *out = new tc_dataset{read_dataset_csv(text)};
  });
}

tc_status tc_dataset_load_csv(const char* path, tc_dataset** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    auto d = read_dataset_csv(read_text_file(path));
    d.provenance.push_back(std::string("source ") + path);
    *out = new tc_dataset{std::move(d)};
  });
}

tc_status tc_dataset_to_csv(const tc_dataset* data, const char* generator, char** out) {
  return guard([&] {
    require(data, "data");
    require(out, "out");
    *out = dup_string(write_dataset_csv(data->d, gen(generator)));
  });
}

tc_status tc_dataset_counts(const tc_dataset* data, size_t* sequences, size_t* steps) {
  return guard([&] {
    require(data, "data");
    if (sequences) *sequences = data->d.sequences.size();
    if (steps) *steps = data->d.total_steps();
  });
}

void tc_dataset_free(tc_dataset* data) { delete data; }

tc_study_options tc_study_options_default(void) {
  StudyDesign d;
  return {d.participants, d.intersections_per_condition, d.frames_per_episode, 0};
}

tc_status tc_dataset_synthetic(const tc_model* model, const tc_study_options* options,
                               tc_dataset** out) {
  return guard([&] {
    require(model, "model");
    require(out, "out");
    const auto o = options ? *options : tc_study_options_default();
    StudyDesign design;
    design.participants = o.participants;
    design.intersections_per_condition = o.intersections_per_condition;
    design.frames_per_episode = o.frames_per_episode;
    *out = new tc_dataset{synthetic_study(model->m, design, o.seed)};
  });
}

tc_fit_options tc_fit_options_default(void) {
  FitConfig c;
  return {c.tol, c.max_iter, c.n_restarts, c.rng_seed, c.prob_floor, c.jobs};
}

tc_status tc_estimate(const tc_dataset* data, tc_structure structure,
                      const tc_fit_options* options, const char* generator, tc_model** out_model,
                      char** out_report) {
  return guard([&] {
    require(data, "data");
    require(out_model, "out_model");
    const auto o = options ? *options : tc_fit_options_default();
    FitConfig c;
    c.tol = o.tol;
    c.max_iter = o.max_iter;
    c.n_restarts = o.n_restarts;
    c.rng_seed = o.seed;
    c.prob_floor = o.prob_floor;
    c.jobs = o.jobs;
    const auto fit = multi_restart_fit(data->d, to_structure(structure), c);
    std::string report;
    if (out_report) report = fit_report(fit, gen(generator));
    auto model = std::make_unique<tc_model>(tc_model{fit.best.model});
    if (out_report) *out_report = dup_string(report);
    *out_model = model.release();
  });
}

tc_status tc_log_likelihood(const tc_model* model, const tc_dataset* data, double* out) {
  return guard([&] {
    require(model, "model");
    require(data, "data");
    require(out, "out");
    *out = dataset_log_likelihood(model->m, data->d);
  });
}

tc_select_options tc_select_options_default(void) {
  SelectionConfig c;
  return {c.k_folds, c.n_repeats, c.restarts_per_fit, c.rng_seed,
          c.stratify_by == Stratify::ParticipantCondition ? 1 : 0,
          c.tol, c.max_iter, c.jobs};
}

tc_status tc_select(const tc_dataset* data, const tc_select_options* options,
                    const char* generator, char** out_report_csv, tc_structure* out_chosen) {
  return guard([&] {
    require(data, "data");
    const auto o = options ? *options : tc_select_options_default();
    SelectionConfig c;
    c.k_folds = o.k_folds;
    c.n_repeats = o.n_repeats;
    c.restarts_per_fit = o.restarts_per_fit;
    c.rng_seed = o.seed;
    c.stratify_by = o.stratify ? Stratify::ParticipantCondition : Stratify::None;
    c.tol = o.tol;
    c.max_iter = o.max_iter;
    c.jobs = o.jobs;
    const auto report = select_structure(data->d, c);
    if (out_report_csv) *out_report_csv = dup_string(selection_report_csv(report, gen(generator)));
    if (out_chosen) *out_chosen = from_structure(report.chosen);
  });
}

tc_solve_options tc_solve_options_default(void) {
  SolverConfig c;
  return {c.gamma, c.vi_tol};
}

tc_status tc_reward_default(double out[6]) {
  return guard([&] {
    require(out, "out");
    RewardSpec r;
    for (int t = 0; t < 2; ++t)
      for (int u = 0; u < 3; ++u) out[t * 3 + u] = r.table[t][u];
  });
}

tc_status tc_reward_parse_csv(const char* text, double out[6]) {
  return guard([&] {
    require(text, "text");
    require(out, "out");
    const auto r = reward_from_csv(text);
    for (int t = 0; t < 2; ++t)
      for (int u = 0; u < 3; ++u) out[t * 3 + u] = r.table[t][u];
  });
}

tc_status tc_solve(const tc_model* model, const double* reward, const tc_solve_options* options,
                   tc_policy** out) {
  return guard([&] {
    require(model, "model");
    require(out, "out");
    const auto o = options ? *options : tc_solve_options_default();
    SolverConfig c;
    c.gamma = o.gamma;
    c.vi_tol = o.vi_tol;
    *out = new tc_policy{value_iteration(model->m, to_reward(reward), c)};
  });
}

tc_status tc_policy_parse(const char* document, tc_policy** out) {
  return guard([&] {
    require(document, "document");
    require(out, "out");
    *out = new tc_policy{policy_from_document(document)};
  });
}

tc_status tc_policy_load(const char* path, tc_policy** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new tc_policy{policy_from_document(read_text_file(path))};
  });
}

tc_status tc_policy_to_string(const tc_policy* policy, const char* generator, char** out) {
  return guard([&] {
    require(policy, "policy");
    require(out, "out");
    *out = dup_string(policy_to_document(policy->p, gen(generator)));
  });
}

tc_status tc_policy_grid_csv(const tc_policy* policy, int resolution, const char* generator,
                             char** out) {
  return guard([&] {
    require(policy, "policy");
    require(out, "out");
    *out = dup_string(policy_grid_csv(policy_grid(policy->p, resolution), gen(generator)));
  });
}

tc_status tc_policy_action(const tc_policy* policy, const double belief[4], const char* context,
                           int* out_action) {
  return guard([&] {
    require(policy, "policy");
    require(belief, "belief");
    require(context, "context");
    require(out_action, "out_action");
    Belief b{{belief[0], belief[1], belief[2], belief[3]}};
    b.validate();
    *out_action = qmdp_action(policy->p, b, parse_context(context)) == Transparency::On ? 1 : 0;
  });
}

void tc_policy_free(tc_policy* policy) { delete policy; }

tc_status tc_step_response_csv(const tc_model* model, const char* const* actions, size_t n_actions,
                               int horizon, const char* generator, char** out) {
  return guard([&] {
    require(model, "model");
    require(out, "out");
    if (n_actions == 0) fail(ErrorCode::InvalidArgument, "at least one action is required");
    require(actions, "actions");
    std::vector<StepResponse> responses;
    for (size_t i = 0; i < n_actions; ++i) {
      require(actions[i], "action");
      responses.push_back(step_response(model->m, parse_action(actions[i]), horizon));
    }
    *out = dup_string(step_response_csv(responses, gen(generator)));
  });
}

tc_simulate_options tc_simulate_options_default(void) { return {0, 0, 0, 12, 200}; }

tc_status tc_simulate(const tc_model* true_model, const tc_model* belief_model,
                      const tc_policy* policy, const char* scenario_csv,
                      const tc_simulate_options* options, const char* generator,
                      char** out_metrics_json, char** out_trace_csv) {
  return guard([&] {
    require(true_model, "true_model");
    require(policy, "policy");
    const auto& believed = belief_model ? belief_model->m : true_model->m;
    const auto o = options ? *options : tc_simulate_options_default();
    if (o.min_dwell < 0) fail(ErrorCode::InvalidArgument, "min_dwell must be >= 0");
    const Scenario scenario =
        scenario_csv ? scenario_from_segments(scenario_segments_from_csv(scenario_csv))
                     : scenario_random(o.n_episodes, o.frames_per_episode,
                                       policy->p.config.uncontrollable_dist, child_seed(o.seed, 1));
    const auto result = run_closed_loop(true_model->m, believed, policy->p, scenario,
                                        child_seed(o.seed, 0), o.min_dwell, o.carry_belief != 0);
    std::string metrics = metrics_json(result.metrics, gen(generator));
    std::string trace = trace_csv(result.trace, gen(generator));
    if (out_metrics_json) *out_metrics_json = dup_string(metrics);
    if (out_trace_csv) *out_trace_csv = dup_string(trace);
  });
}

tc_service_options tc_service_options_default(void) {
  return {0, 0, nullptr, nullptr, nullptr, 0};
}

tc_status tc_service_create(const tc_service_options* options, tc_service** out) {
  return guard([&] {
    require(out, "out");
    const auto o = options ? *options : tc_service_options_default();
    ServiceOptions so;
    so.seed = o.seed;
    so.min_dwell = o.min_dwell;
    if (o.journal_dir) so.journal_dir = o.journal_dir;
    if (o.model_document) {
      model_from_document(o.model_document);  // fail early on a bad default
      so.default_model_document = o.model_document;
    }
    if (o.policy_document) {
      policy_from_document(o.policy_document);
      so.default_policy_document = o.policy_document;
    }
    auto svc = std::make_unique<tc_service>();
    svc->sessions = std::make_unique<SessionManager>(so);
    if (o.recover) svc->sessions->recover();
    svc->http = std::make_unique<HttpService>(*svc->sessions);
    *out = svc.release();
  });
}

tc_status tc_service_bind(tc_service* service, const char* host, int port, int* out_port) {
  return guard([&] {
    require(service, "service");
    if (port < 0 || port > 65535) fail(ErrorCode::InvalidArgument, "port out of range");
    const int bound = service->http->bind(host ? host : "127.0.0.1", port);
    if (bound < 0) fail(ErrorCode::Io, "cannot bind port " + std::to_string(port));
    service->bound = true;
    if (out_port) *out_port = bound;
  });
}

tc_status tc_service_run(tc_service* service) {
  return guard([&] {
    require(service, "service");
    if (!service->bound) fail(ErrorCode::InvalidArgument, "service is not bound");
    if (!service->http->listen_after_bind()) fail(ErrorCode::Io, "listener failed");
  });
}

void tc_service_stop(tc_service* service) {
  if (service && service->http) service->http->stop();
}

void tc_service_free(tc_service* service) {
  if (!service) return;
  service->http.reset();
  service->sessions.reset();
  delete service;
}

}  // extern "C"
