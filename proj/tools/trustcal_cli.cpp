// trustcal command-line front end. Talks to the library only through the C API.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <pthread.h>
#include <unistd.h>

#include "CLI11.hpp"
#include "trustcal/trustcal.h"

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;
constexpr int kFramesPerSecond = 25;

struct Failure {
  int exit_code;
  std::string message;
};

void check(tc_status st, const std::string& context) {
  if (st == TC_OK) return;
  throw Failure{tc_status_is_input_error(st) ? kExitInput : kExitNumerical,
                context + ": " + tc_status_name(st) + ": " + tc_last_error()};
}

struct Str {
  char* p = nullptr;
  ~Str() { tc_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
};
using Model = Handle<tc_model, tc_model_free>;
using DatasetH = Handle<tc_dataset, tc_dataset_free>;
using Policy = Handle<tc_policy, tc_policy_free>;
using Service = Handle<tc_service, tc_service_free>;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{kExitInput, "cannot read " + path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Failure{kExitInput, "cannot write " + path};
  out << content;
  if (!out) throw Failure{kExitInput, "write failed for " + path};
  std::cout << "wrote " << path << "\n";
}

std::string invocation_line(int argc, char** argv) {
  std::string s = "trustcal";
  for (int i = 1; i < argc; ++i) {
    s += ' ';
    s += argv[i];
  }
  return s;
}

int default_jobs() {
  if (const char* env = std::getenv("TRUSTCAL_JOBS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
    throw Failure{kExitInput, std::string("TRUSTCAL_JOBS must be a positive integer, got '") + env + "'"};
  }
  return 1;
}

void print_config(const std::vector<std::pair<std::string, std::string>>& kv) {
  std::cout << "config:\n";
  for (const auto& [k, v] : kv) std::cout << "  " << k << " = " << v << "\n";
  std::cout.flush();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct StructureOpts {
  std::string preset;
  std::string trust_dims;
  std::string workload_dims;

  void add(CLI::App* app) {
    auto* preset_opt = app->add_option("--structure", preset, "named structure (paper)")
                           ->check(CLI::IsMember({"paper"}));
    auto* t = app->add_option("--trust-dims", trust_dims, "action dims affecting trust, e.g. transparency,reliability");
    auto* w = app->add_option("--workload-dims", workload_dims, "action dims affecting workload ('none' allowed)");
    preset_opt->excludes(t)->excludes(w);
    t->needs(w);
    w->needs(t);
  }

  tc_structure resolve() const {
    if (trust_dims.empty() && workload_dims.empty()) return tc_structure_paper();
    tc_structure s{};
    check(tc_parse_dims(trust_dims.c_str(), &s.trust_dims), "--trust-dims");
    check(tc_parse_dims(workload_dims.c_str(), &s.workload_dims), "--workload-dims");
    return s;
  }
};

std::string structure_name(tc_structure s) {
  Str out;
  check(tc_structure_to_string(s, &out.p), "structure");
  return out.str();
}

std::atomic<tc_service*> g_service{nullptr};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trust/workload POMDP toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tc_version());

  std::uint64_t seed = 0;
  int jobs = 0;
  const auto add_common = [&](CLI::App* sub, bool with_jobs) {
    sub->add_option("--seed", seed, "random seed")->capture_default_str();
    if (with_jobs) sub->add_option("--jobs", jobs, "worker threads (env TRUSTCAL_JOBS)")->check(CLI::PositiveNumber);
  };

  // estimate
  auto* est = app.add_subcommand("estimate", "fit model parameters with multi-restart EM");
  std::string est_data, est_out, est_report;
  StructureOpts est_structure;
  auto fit_defaults = tc_fit_options_default();
  int est_restarts = fit_defaults.n_restarts;
  double est_tol = fit_defaults.tol;
  int est_max_iter = fit_defaults.max_iter;
  double est_floor = fit_defaults.prob_floor;
  est->add_option("--data", est_data, "dataset CSV")->required()->check(CLI::ExistingFile);
  est_structure.add(est);
  est->add_option("--restarts", est_restarts, "EM restarts")->check(CLI::PositiveNumber)->capture_default_str();
  est->add_option("--tol", est_tol, "log-likelihood improvement threshold")->capture_default_str();
  est->add_option("--max-iter", est_max_iter, "M-steps per restart")->capture_default_str();
  est->add_option("--prob-floor", est_floor, "probability floor")->capture_default_str();
  est->add_option("--out", est_out, "model document path")->required();
  est->add_option("--report", est_report, "fit report path (default <out>.report)");
  add_common(est, true);

  // select
  auto* sel = app.add_subcommand("select", "choose the action structure by cross-validated AIC");
  std::string sel_data, sel_out;
  auto sel_defaults = tc_select_options_default();
  bool sel_no_stratify = false;
  sel->add_option("--data", sel_data, "dataset CSV")->required()->check(CLI::ExistingFile);
  sel->add_option("--folds", sel_defaults.k_folds, "folds per repeat")->capture_default_str();
  sel->add_option("--repeats", sel_defaults.n_repeats, "cross-validation repeats")->capture_default_str();
  sel->add_option("--restarts", sel_defaults.restarts_per_fit, "EM restarts per fit")->capture_default_str();
  sel->add_option("--tol", sel_defaults.tol, "EM tolerance")->capture_default_str();
  sel->add_option("--max-iter", sel_defaults.max_iter, "EM M-steps")->capture_default_str();
  sel->add_flag("--no-stratify", sel_no_stratify, "plain random folds");
  sel->add_option("--out", sel_out, "selection report CSV")->required();
  add_common(sel, true);

  // solve
  auto* sol = app.add_subcommand("solve", "synthesize the Q-MDP transparency policy");
  std::string sol_model, sol_reward, sol_out, sol_grid;
  auto solve_defaults = tc_solve_options_default();
  int sol_resolution = 21;
  sol->add_option("--model", sol_model, "model document")->required()->check(CLI::ExistingFile);
  sol->add_option("--reward", sol_reward, "reward table CSV")->check(CLI::ExistingFile);
  sol->add_option("--gamma", solve_defaults.gamma, "discount factor")->capture_default_str();
  sol->add_option("--vi-tol", solve_defaults.vi_tol, "value iteration tolerance")->capture_default_str();
  sol->add_option("--out", sol_out, "policy document path")->required();
  sol->add_option("--grid", sol_grid, "policy grid CSV path (default <out>.grid.csv)");
  sol->add_option("--resolution", sol_resolution, "grid points per belief axis")->capture_default_str();
  add_common(sol, false);

  // step-response
  auto* sr = app.add_subcommand("step-response", "belief-free marginals under constant actions");
  std::string sr_model, sr_out_dir;
  std::vector<std::string> sr_actions;
  double sr_seconds = 10.0;
  int sr_frames = -1;
  sr->add_option("--model", sr_model, "model document")->required()->check(CLI::ExistingFile);
  sr->add_option("--action", sr_actions, "AR_on+Rel_low+Traffic_low+Peds_absent (repeatable)")->required();
  auto* sec_opt = sr->add_option("--seconds", sr_seconds, "horizon in seconds")->capture_default_str();
  sr->add_option("--frames", sr_frames, "horizon in frames")->excludes(sec_opt);
  sr->add_option("--out-dir", sr_out_dir, "directory for one CSV per action")->required();
  add_common(sr, false);

  // simulate
  auto* sim = app.add_subcommand("simulate", "closed-loop evaluation of a policy");
  std::string sim_model, sim_belief_model, sim_policy, sim_scenario, sim_metrics, sim_trace;
  auto sim_defaults = tc_simulate_options_default();
  bool sim_carry = false;
  sim->add_option("--model", sim_model, "model driving the simulated human")->required()->check(CLI::ExistingFile);
  sim->add_option("--belief-model", sim_belief_model, "model used for belief tracking (default --model)")
      ->check(CLI::ExistingFile);
  sim->add_option("--policy", sim_policy, "policy document")->required()->check(CLI::ExistingFile);
  auto* scen = sim->add_option("--scenario", sim_scenario, "scenario CSV")->check(CLI::ExistingFile);
  sim->add_option("--episodes", sim_defaults.n_episodes, "random scenario episodes")->excludes(scen)->capture_default_str();
  sim->add_option("--frames", sim_defaults.frames_per_episode, "frames per random episode")->excludes(scen)->capture_default_str();
  sim->add_option("--min-dwell", sim_defaults.min_dwell, "minimum frames between switches")->capture_default_str();
  sim->add_flag("--carry-belief", sim_carry, "keep the belief across episodes");
  sim->add_option("--metrics", sim_metrics, "metrics JSON path")->required();
  sim->add_option("--trace", sim_trace, "trace CSV path")->required();
  add_common(sim, false);

  // serve
  auto* srv = app.add_subcommand("serve", "run the interaction service");
  std::string srv_model, srv_policy, srv_host = "127.0.0.1", srv_journal, srv_port_file;
  int srv_port = 8080, srv_dwell = 0;
  bool srv_recover = false;
  srv->add_option("--model", srv_model, "default model document")->check(CLI::ExistingFile);
  srv->add_option("--policy", srv_policy, "default policy document")->check(CLI::ExistingFile);
  srv->add_option("--host", srv_host, "bind address")->capture_default_str();
  srv->add_option("--port", srv_port, "port (0 picks a free one)")->check(CLI::Range(0, 65535))->capture_default_str();
  srv->add_option("--journal-dir", srv_journal, "per-session journal directory");
  srv->add_flag("--recover", srv_recover, "replay journals at startup");
  srv->add_option("--min-dwell", srv_dwell, "minimum frames between switches")->capture_default_str();
  srv->add_option("--port-file", srv_port_file, "write the bound port here");
  add_common(srv, false);

  // generate
  auto* gen = app.add_subcommand("generate", "sample a synthetic study dataset from a model");
  std::string gen_model, gen_out;
  auto study = tc_study_options_default();
  gen->add_option("--model", gen_model, "model document (default: built-in reference model)")
      ->check(CLI::ExistingFile);
  gen->add_option("--participants", study.participants, "participants")->capture_default_str();
  gen->add_option("--intersections", study.intersections_per_condition, "episodes per condition")->capture_default_str();
  gen->add_option("--frames", study.frames_per_episode, "frames per episode")->capture_default_str();
  gen->add_option("--out", gen_out, "dataset CSV path")->required();
  add_common(gen, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInput;
  }

  const std::string generator = invocation_line(argc, argv);
  try {
    if (jobs == 0) jobs = default_jobs();

    if (*est) {
      const auto structure = est_structure.resolve();
      auto opts = tc_fit_options_default();
      opts.n_restarts = est_restarts;
      opts.tol = est_tol;
      opts.max_iter = est_max_iter;
      opts.prob_floor = est_floor;
      opts.seed = seed;
      opts.jobs = jobs;
      if (est_report.empty()) est_report = est_out + ".report";
      print_config({{"subcommand", "estimate"}, {"data", est_data}, {"structure", structure_name(structure)},
                    {"restarts", std::to_string(opts.n_restarts)}, {"tol", fmt(opts.tol)},
                    {"max_iter", std::to_string(opts.max_iter)}, {"prob_floor", fmt(opts.prob_floor)},
                    {"seed", std::to_string(seed)}, {"jobs", std::to_string(jobs)}});
      DatasetH data;
      check(tc_dataset_load_csv(est_data.c_str(), &data.p), "load " + est_data);
      Model model;
      Str report;
      check(tc_estimate(data.p, structure, &opts, generator.c_str(), &model.p, &report.p), "estimate");
      Str doc;
      check(tc_model_to_string(model.p, generator.c_str(), &doc.p), "serialize model");
      write_file(est_out, doc.str());
      write_file(est_report, report.str());
    } else if (*sel) {
      auto opts = sel_defaults;
      opts.seed = seed;
      opts.jobs = jobs;
      opts.stratify = sel_no_stratify ? 0 : 1;
      print_config({{"subcommand", "select"}, {"data", sel_data}, {"folds", std::to_string(opts.k_folds)},
                    {"repeats", std::to_string(opts.n_repeats)},
                    {"restarts", std::to_string(opts.restarts_per_fit)},
                    {"stratify", opts.stratify ? "participant/condition" : "none"}, {"tol", fmt(opts.tol)},
                    {"max_iter", std::to_string(opts.max_iter)}, {"seed", std::to_string(seed)},
                    {"jobs", std::to_string(jobs)}});
      DatasetH data;
      check(tc_dataset_load_csv(sel_data.c_str(), &data.p), "load " + sel_data);
      Str report;
      tc_structure chosen{};
      check(tc_select(data.p, &opts, generator.c_str(), &report.p, &chosen), "select");
      write_file(sel_out, report.str());
      std::cout << "chosen: " << structure_name(chosen) << "\n";
    } else if (*sol) {
      if (sol_grid.empty()) sol_grid = sol_out + ".grid.csv";
      double reward[6];
      check(tc_reward_default(reward), "reward");
      if (!sol_reward.empty()) check(tc_reward_parse_csv(read_file(sol_reward).c_str(), reward), sol_reward);
      std::string reward_str;
      for (int i = 0; i < 6; ++i) reward_str += (i ? " " : "") + fmt(reward[i]);
      print_config({{"subcommand", "solve"}, {"model", sol_model},
                    {"reward", sol_reward.empty() ? "default" : sol_reward}, {"reward_table", reward_str},
                    {"gamma", fmt(solve_defaults.gamma)}, {"vi_tol", fmt(solve_defaults.vi_tol)},
                    {"resolution", std::to_string(sol_resolution)}, {"seed", std::to_string(seed)}});
      Model model;
      check(tc_model_load(sol_model.c_str(), &model.p), "load " + sol_model);
      Policy policy;
      check(tc_solve(model.p, reward, &solve_defaults, &policy.p), "solve");
      Str doc, grid;
      check(tc_policy_to_string(policy.p, generator.c_str(), &doc.p), "serialize policy");
      check(tc_policy_grid_csv(policy.p, sol_resolution, generator.c_str(), &grid.p), "policy grid");
      write_file(sol_out, doc.str());
      write_file(sol_grid, grid.str());
    } else if (*sr) {
      const int horizon =
          sr_frames >= 0 ? sr_frames : static_cast<int>(std::lround(sr_seconds * kFramesPerSecond));
      std::string actions;
      for (const auto& a : sr_actions) actions += (actions.empty() ? "" : " ") + a;
      print_config({{"subcommand", "step-response"}, {"model", sr_model}, {"actions", actions},
                    {"horizon_frames", std::to_string(horizon)}, {"seed", std::to_string(seed)}});
      Model model;
      check(tc_model_load(sr_model.c_str(), &model.p), "load " + sr_model);
      for (const auto& a : sr_actions) {
        const char* one[] = {a.c_str()};
        Str csv;
        check(tc_step_response_csv(model.p, one, 1, horizon, generator.c_str(), &csv.p), "step response " + a);
        write_file((std::filesystem::path(sr_out_dir) / ("step_response_" + a + ".csv")).string(), csv.str());
      }
    } else if (*sim) {
      auto opts = sim_defaults;
      opts.seed = seed;
      opts.carry_belief = sim_carry ? 1 : 0;
      print_config({{"subcommand", "simulate"}, {"model", sim_model},
                    {"belief_model", sim_belief_model.empty() ? sim_model : sim_belief_model},
                    {"policy", sim_policy},
                    {"scenario", sim_scenario.empty()
                                     ? "random " + std::to_string(opts.n_episodes) + "x" +
                                           std::to_string(opts.frames_per_episode)
                                     : sim_scenario},
                    {"min_dwell", std::to_string(opts.min_dwell)},
                    {"carry_belief", sim_carry ? "true" : "false"}, {"seed", std::to_string(seed)}});
      Model truth, believed;
      Policy policy;
      check(tc_model_load(sim_model.c_str(), &truth.p), "load " + sim_model);
      if (!sim_belief_model.empty()) {
        check(tc_model_load(sim_belief_model.c_str(), &believed.p), "load " + sim_belief_model);
      }
      check(tc_policy_load(sim_policy.c_str(), &policy.p), "load " + sim_policy);
      const std::string scenario = sim_scenario.empty() ? "" : read_file(sim_scenario);
      Str metrics, trace;
      check(tc_simulate(truth.p, believed.p, policy.p, sim_scenario.empty() ? nullptr : scenario.c_str(),
                        &opts, generator.c_str(), &metrics.p, &trace.p),
            "simulate");
      write_file(sim_metrics, metrics.str());
      write_file(sim_trace, trace.str());
    } else if (*srv) {
      const std::string model_doc = srv_model.empty() ? "" : read_file(srv_model);
      const std::string policy_doc = srv_policy.empty() ? "" : read_file(srv_policy);
      auto opts = tc_service_options_default();
      opts.seed = seed;
      opts.min_dwell = srv_dwell;
      opts.journal_dir = srv_journal.empty() ? nullptr : srv_journal.c_str();
      opts.model_document = model_doc.empty() ? nullptr : model_doc.c_str();
      opts.policy_document = policy_doc.empty() ? nullptr : policy_doc.c_str();
      opts.recover = srv_recover ? 1 : 0;

      // Signals go to a dedicated wait below, never to the server threads.
      sigset_t sigs;
      sigemptyset(&sigs);
      sigaddset(&sigs, SIGINT);
      sigaddset(&sigs, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

      Service service;
      check(tc_service_create(&opts, &service.p), "service");
      int bound = 0;
      check(tc_service_bind(service.p, srv_host.c_str(), srv_port, &bound), "bind");
      print_config({{"subcommand", "serve"}, {"host", srv_host}, {"port", std::to_string(bound)},
                    {"model", srv_model.empty() ? "per-session" : srv_model},
                    {"policy", srv_policy.empty() ? "per-session" : srv_policy},
                    {"journal_dir", srv_journal.empty() ? "none" : srv_journal},
                    {"recover", srv_recover ? "true" : "false"}, {"min_dwell", std::to_string(srv_dwell)},
                    {"seed", std::to_string(seed)}});
      if (!srv_port_file.empty()) {
        std::ofstream pf(srv_port_file, std::ios::trunc);
        pf << bound << "\n";
      }
      tc_status run_status = TC_OK;
      std::string run_error;
      std::thread runner([&] {
        run_status = tc_service_run(service.p);
        if (run_status != TC_OK) run_error = tc_last_error();
        kill(getpid(), SIGTERM);  // wake the waiter if the listener dies
      });
      int sig = 0;
      sigwait(&sigs, &sig);
      tc_service_stop(service.p);
      runner.join();
      if (run_status != TC_OK) {
        throw Failure{kExitInput, std::string("serve: ") + tc_status_name(run_status) + ": " + run_error};
      }
      std::cout << "stopped\n";
    } else if (*gen) {
      study.seed = seed;
      print_config({{"subcommand", "generate"}, {"model", gen_model.empty() ? "reference" : gen_model},
                    {"participants", std::to_string(study.participants)},
                    {"intersections", std::to_string(study.intersections_per_condition)},
                    {"frames", std::to_string(study.frames_per_episode)}, {"seed", std::to_string(seed)}});
      Model model;
      if (gen_model.empty()) {
        check(tc_model_reference(&model.p), "reference model");
      } else {
        check(tc_model_load(gen_model.c_str(), &model.p), "load " + gen_model);
      }
      DatasetH data;
      check(tc_dataset_synthetic(model.p, &study, &data.p), "generate");
      Str csv;
      check(tc_dataset_to_csv(data.p, generator.c_str(), &csv.p), "serialize dataset");
      write_file(gen_out, csv.str());
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return 0;
}
