#include "service.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "httplib.h"

#include "data.hpp"
#include "error.hpp"
#include "rng.hpp"

namespace trustcal {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

struct SessionManager::Session {
  std::string id;
  std::string model_document;
  std::string policy_document;
  TrustWorkloadModel model;
  QmdpPolicy policy;
  bool carry_belief = false;
  Belief initial;
  Belief belief;
  DwellFilter dwell;
  std::vector<StepOutput> trace;
  std::ofstream journal;

  mutable std::mutex mutex;
  mutable std::condition_variable changed;

  StepOutput advance(const StepInput& in) {
    const bool episode_start = in.new_episode;
    if (episode_start && !carry_belief) belief = initial;
    StepOutput out;
    out.step = static_cast<long>(trace.size());
    out.context = in.context;
    out.observation = in.observation;
    out.episode_start = episode_start;
    out.action = dwell.apply(qmdp_action(policy, belief, in.context));
    out.reward = expected_reward(policy.reward, belief, in.context);
    try {
      belief = belief_update(model, belief, ActionTuple(out.action, in.context), in.observation);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ZeroLikelihood) throw;
      std::fprintf(stderr, "session %s step %ld: zero-likelihood observation, belief reset\n",
                   id.c_str(), out.step);
      belief = initial;
      out.zero_likelihood_reset = true;
    }
    out.belief = belief;
    trace.push_back(out);
    return out;
  }
};

namespace {

ordered_json observation_json(const ObservationTuple& o) {
  ordered_json j;
  j["reliance"] = name(o.reliance);
  j["gaze"] = name(o.gaze);
  return j;
}

ObservationTuple observation_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorCode::Parse, "observation must be an object");
  return {parse_reliance(j.at("reliance").get<std::string>()),
          parse_gaze(j.at("gaze").get<std::string>())};
}

ordered_json belief_json(const Belief& b) {
  ordered_json j;
  j["probs"] = b.probs;
  j["p_trust_high"] = b.p_trust_high();
  j["p_workload_high"] = b.p_workload_high();
  return j;
}

std::string journal_path(const std::string& dir, const std::string& id) {
  return (fs::path(dir) / (id + ".jsonl")).string();
}

void write_journal(std::ofstream& out, const ordered_json& j) {
  if (!out.is_open()) return;
  out << j.dump() << '\n';
  out.flush();
}

ordered_json step_input_json(const StepInput& in) {
  ordered_json j;
  j["context"] = to_json(in.context);
  j["observation"] = observation_json(in.observation);
  j["new_episode"] = in.new_episode;
  return j;
}

}  // namespace

ordered_json to_json(const Context& c) {
  ordered_json j;
  j["reliability"] = name(c.reliability);
  j["traffic"] = name(c.traffic);
  j["pedestrians"] = name(c.pedestrians);
  return j;
}

Context context_from_json(const json& j) {
  if (j.is_string()) return parse_context(j.get<std::string>());
  if (!j.is_object()) fail(ErrorCode::Parse, "context must be an object or a string");
  return {parse_reliability(j.at("reliability").get<std::string>()),
          parse_traffic(j.at("traffic").get<std::string>()),
          parse_pedestrians(j.at("pedestrians").get<std::string>())};
}

ordered_json to_json(const StepOutput& out) {
  ordered_json j;
  j["step"] = out.step;
  j["context"] = to_json(out.context);
  j["observation"] = observation_json(out.observation);
  j["action"] = name(out.action);
  j["belief"] = belief_json(out.belief);
  j["reward"] = out.reward;
  j["episode_start"] = out.episode_start;
  j["zero_likelihood_reset"] = out.zero_likelihood_reset;
  return j;
}

StepInput step_input_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorCode::Parse, "step must be an object");
  try {
    StepInput in;
    in.context = context_from_json(j.at("context"));
    in.observation = observation_from_json(j.at("observation"));
    if (j.contains("new_episode")) in.new_episode = j.at("new_episode").get<bool>();
    return in;
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("malformed step: ") + e.what());
  }
}

SessionManager::SessionManager(ServiceOptions options) : options_(std::move(options)) {
  if (options_.min_dwell < 0) fail(ErrorCode::InvalidArgument, "min_dwell must be >= 0");
  if (!options_.journal_dir.empty()) {
    std::error_code ec;
    fs::create_directories(options_.journal_dir, ec);
    if (ec) fail(ErrorCode::Io, "cannot create journal directory " + options_.journal_dir);
  }
}

SessionManager::~SessionManager() = default;

std::string SessionManager::next_id() {
  // caller holds mutex_
  while (true) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "s%016llx",
                  static_cast<unsigned long long>(child_seed(options_.seed, counter_++)));
    std::string id(buf);
    if (!sessions_.count(id)) return id;
  }
}

std::shared_ptr<SessionManager::Session> SessionManager::make_session(
    const std::string& id, std::string_view model_document, std::string_view policy_document,
    bool carry_belief) {
  auto s = std::make_shared<Session>();
  s->id = id;
  s->model_document =
      std::string(model_document.empty() ? options_.default_model_document : model_document);
  s->policy_document =
      std::string(policy_document.empty() ? options_.default_policy_document : policy_document);
  if (s->model_document.empty() || s->policy_document.empty()) {
    fail(ErrorCode::InvalidArgument, "session needs a model and a policy document");
  }
  s->model = model_from_document(s->model_document);
  s->policy = policy_from_document(s->policy_document);
  s->carry_belief = carry_belief;
  s->initial = prior_belief(s->model);
  s->belief = s->initial;
  s->dwell = DwellFilter(options_.min_dwell);
  return s;
}

std::string SessionManager::create_session(std::string_view model_document,
                                           std::string_view policy_document, bool carry_belief) {
  std::string id;
  {
    std::lock_guard lock(mutex_);
    id = next_id();
  }
  auto s = make_session(id, model_document, policy_document, carry_belief);
  if (!options_.journal_dir.empty()) {
    s->journal.open(journal_path(options_.journal_dir, id), std::ios::out | std::ios::trunc);
    if (!s->journal) fail(ErrorCode::Io, "cannot open journal for " + id);
    ordered_json j;
    j["type"] = "create";
    j["id"] = id;
    j["carry_belief"] = carry_belief;
    j["model"] = s->model_document;
    j["policy"] = s->policy_document;
    write_journal(s->journal, j);
  }
  std::lock_guard lock(mutex_);
  sessions_.emplace(id, std::move(s));
  return id;
}

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) fail(ErrorCode::UnknownSession, "unknown session " + id);
  return it->second;
}

StepOutput SessionManager::step(const std::string& id, const StepInput& input) {
  return steps(id, std::span<const StepInput>(&input, 1)).front();
}

std::vector<StepOutput> SessionManager::steps(const std::string& id,
                                              std::span<const StepInput> inputs) {
  auto s = find(id);
  std::vector<StepOutput> out;
  out.reserve(inputs.size());
  {
    std::lock_guard lock(s->mutex);
    for (const auto& in : inputs) {
      out.push_back(s->advance(in));
      ordered_json j;
      j["type"] = "step";
      j["input"] = step_input_json(in);
      write_journal(s->journal, j);
    }
  }
  s->changed.notify_all();
  return out;
}

std::vector<StepOutput> SessionManager::get_trace(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  return s->trace;
}

Belief SessionManager::current_belief(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  return s->belief;
}

std::vector<StepOutput> SessionManager::wait_for_steps(const std::string& id, std::size_t from,
                                                       std::chrono::milliseconds timeout) const {
  auto s = find(id);
  std::unique_lock lock(s->mutex);
  s->changed.wait_for(lock, timeout, [&] { return s->trace.size() > from; });
  if (s->trace.size() <= from) return {};
  return {s->trace.begin() + static_cast<std::ptrdiff_t>(from), s->trace.end()};
}

std::size_t SessionManager::recover() {
  if (options_.journal_dir.empty()) return 0;
  std::size_t n = 0;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(options_.journal_dir)) {
    if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    std::ifstream in(path);
    std::string line;
    std::shared_ptr<Session> s;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception&) {
        break;  // torn final line after a crash
      }
      const auto type = j.value("type", "");
      if (type == "create") {
        s = make_session(j.at("id").get<std::string>(), j.at("model").get<std::string>(),
                         j.at("policy").get<std::string>(), j.value("carry_belief", false));
      } else if (type == "step" && s) {
        s->advance(step_input_from_json(j.at("input")));
      }
    }
    if (!s) continue;
    in.close();
    // Rewrite so a torn tail does not survive the next append.
    s->journal.open(path, std::ios::out | std::ios::trunc);
    ordered_json c;
    c["type"] = "create";
    c["id"] = s->id;
    c["carry_belief"] = s->carry_belief;
    c["model"] = s->model_document;
    c["policy"] = s->policy_document;
    write_journal(s->journal, c);
    for (const auto& row : s->trace) {
      ordered_json j;
      j["type"] = "step";
      j["input"] = step_input_json({row.context, row.observation, row.episode_start});
      write_journal(s->journal, j);
    }
    std::lock_guard lock(mutex_);
    sessions_[s->id] = s;
    ++n;
  }
  return n;
}

std::size_t SessionManager::session_count() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

// --- HTTP -------------------------------------------------------------------

namespace {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownSession:
      return 404;
    case ErrorCode::Io:
      return 500;
    default:
      return 400;
  }
}

void send_json(httplib::Response& res, const ordered_json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump() + "\n", "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  ordered_json j;
  j["error"] = error_code_name(code);
  j["message"] = message;
  send_json(res, j, http_status(code));
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    send_error(res, e.code(), e.what());
  } catch (const json::exception& e) {
    send_error(res, ErrorCode::Parse, e.what());
  } catch (const std::logic_error& e) {  // std::stoul on a bad query parameter
    send_error(res, ErrorCode::Parse, e.what());
  }
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("request body is not valid JSON: ") + e.what());
  }
}

}  // namespace

HttpService::HttpService(SessionManager& sessions)
    : sessions_(sessions), server_(std::make_unique<httplib::Server>()) {
  auto& srv = *server_;
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  srv.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  srv.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
    ordered_json j;
    j["status"] = "ok";
    j["sessions"] = sessions_.session_count();
    send_json(res, j);
  });

  srv.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = parse_body(req);
      const auto model = body.value("model", std::string());
      const auto policy = body.value("policy", std::string());
      const bool carry = body.value("carry_belief", false);
      const auto id = sessions_.create_session(model, policy, carry);
      ordered_json j;
      j["id"] = id;
      j["belief"] = belief_json(sessions_.current_belief(id));
      send_json(res, j, 201);
    });
  });

  srv.Post(R"(/sessions/([^/]+)/step)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto in = step_input_from_json(parse_body(req));
      send_json(res, to_json(sessions_.step(req.matches[1], in)));
    });
  });

  srv.Post(R"(/sessions/([^/]+)/steps)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = parse_body(req);
      const json& arr = body.is_array() ? body : body.at("steps");
      if (!arr.is_array()) fail(ErrorCode::Parse, "steps must be an array");
      std::vector<StepInput> inputs;
      inputs.reserve(arr.size());
      for (const auto& item : arr) inputs.push_back(step_input_from_json(item));
      ordered_json j = ordered_json::array();
      for (const auto& out : sessions_.steps(req.matches[1], inputs)) j.push_back(to_json(out));
      send_json(res, j);
    });
  });

  srv.Get(R"(/sessions/([^/]+)/trace)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      ordered_json j = ordered_json::array();
      for (const auto& out : sessions_.get_trace(req.matches[1])) j.push_back(to_json(out));
      send_json(res, j);
    });
  });

  srv.Get(R"(/sessions/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = req.matches[1];
      sessions_.get_trace(id);  // 404 before committing to a stream
      std::size_t from = 0;
      if (req.has_param("from")) from = static_cast<std::size_t>(std::stoul(req.get_param_value("from")));
      auto next = std::make_shared<std::size_t>(from);
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider(
          "text/event-stream", [this, id, next](std::size_t, httplib::DataSink& sink) {
            if (stopping_) return false;
            std::vector<StepOutput> batch;
            try {
              batch = sessions_.wait_for_steps(id, *next, std::chrono::milliseconds(500));
            } catch (const Error&) {
              return false;
            }
            if (batch.empty()) {
              static const std::string keepalive = ": keepalive\n\n";
              return sink.write(keepalive.data(), keepalive.size());
            }
            for (const auto& out : batch) {
              const auto msg = "event: step\ndata: " + to_json(out).dump() + "\n\n";
              if (!sink.write(msg.data(), msg.size())) return false;
            }
            *next += batch.size();
            return true;
          });
    });
  });
}

HttpService::~HttpService() { stop(); }

int HttpService::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool HttpService::listen_after_bind() { return server_->listen_after_bind(); }

void HttpService::stop() {
  stopping_ = true;
  if (server_) server_->stop();
}

void HttpService::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace trustcal
