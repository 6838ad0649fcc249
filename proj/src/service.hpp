#pragma once

// Session-scoped belief tracking and transparency decisions for live
// operation. Ordering contract per step: the transparency is chosen from the
// belief *before* the step's observation (act, then observe), exactly as in
// run_closed_loop.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "model.hpp"
#include "solver.hpp"

namespace httplib {
class Server;
}

namespace trustcal {

struct StepInput {
  Context context;
  ObservationTuple observation;
  bool new_episode = false;
};

struct StepOutput {
  long step = 0;
  Context context;
  ObservationTuple observation;
  Transparency action = Transparency::Off;
  Belief belief;        // posterior after the observation
  double reward = 0.0;  // belief-expected reward before the observation
  bool episode_start = false;
  bool zero_likelihood_reset = false;
};

struct ServiceOptions {
  std::uint64_t seed = 0;  // session ids are derived from it
  int min_dwell = 0;
  std::string journal_dir;  // empty disables journaling
  std::string default_model_document;
  std::string default_policy_document;
};

class SessionManager {
 public:
  explicit SessionManager(ServiceOptions options = {});
  ~SessionManager();
  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;

  /// Empty documents fall back to the configured defaults.
  /// Throws SchemaMismatch, Parse or InvalidArgument.
  std::string create_session(std::string_view model_document, std::string_view policy_document,
                             bool carry_belief = false);

  /// Throws UnknownSession.
  StepOutput step(const std::string& id, const StepInput& input);
  std::vector<StepOutput> steps(const std::string& id, std::span<const StepInput> inputs);
  std::vector<StepOutput> get_trace(const std::string& id) const;
  Belief current_belief(const std::string& id) const;

  /// Trace entries from index `from` on, waiting up to `timeout` for at
  /// least one to appear.
  std::vector<StepOutput> wait_for_steps(const std::string& id, std::size_t from,
                                         std::chrono::milliseconds timeout) const;

  /// Rebuilds sessions from the journal directory. Returns the count.
  std::size_t recover();

  std::size_t session_count() const;
  const ServiceOptions& options() const noexcept { return options_; }

 private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& id) const;
  std::shared_ptr<Session> make_session(const std::string& id, std::string_view model_document,
                                        std::string_view policy_document, bool carry_belief);
  std::string next_id();

  ServiceOptions options_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t counter_ = 0;
};

nlohmann::ordered_json to_json(const StepOutput& out);
StepInput step_input_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const Context& c);
Context context_from_json(const nlohmann::json& j);

/// HTTP front end:
///   POST /sessions, POST /sessions/{id}/step, POST /sessions/{id}/steps,
///   GET /sessions/{id}/trace, GET /sessions/{id}/events (server-sent
///   events), GET /healthz.
class HttpService {
 public:
  explicit HttpService(SessionManager& sessions);
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Returns false if the listener failed.
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  SessionManager& sessions_;
  std::unique_ptr<httplib::Server> server_;
  std::atomic<bool> stopping_{false};
};

}  // namespace trustcal
