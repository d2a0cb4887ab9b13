#include "sentilab/review.hpp"

#include <httplib.h>

#include <cstdio>

#include "sentilab/errors.hpp"
#include "sentilab/log.hpp"

namespace sentilab::review {

namespace {

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message) {
  send_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

// Maps library errors onto HTTP statuses.
void send_exception(httplib::Response& res, const std::exception& e) {
  if (dynamic_cast<const NotFoundError*>(&e)) return send_error(res, 404, "not_found", e.what());
  if (dynamic_cast<const ConflictError*>(&e)) return send_error(res, 409, "conflict", e.what());
  if (dynamic_cast<const NotAcceptableError*>(&e)) return send_error(res, 422, "not_acceptable", e.what());
  if (dynamic_cast<const PreconditionError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const Json::exception*>(&e)) {
    return send_error(res, 400, "bad_request", e.what());
  }
  send_error(res, 500, "internal", e.what());
}

template <typename F>
httplib::Server::Handler guarded(F&& f) {
  return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const std::exception& e) {
      send_exception(res, e);
    }
  };
}

}  // namespace

Json ReviewSession::to_json() const {
  return {{"reviewer", reviewer}, {"started_at", started_at}, {"decisions_made", decisions_made}};
}

Json Job::to_json() const {
  Json cands = Json::array();
  for (const auto& c : candidates) cands.push_back(forge::to_json(c));
  return {{"id", id},         {"status", status},       {"seed_prompt", seed_prompt}, {"params", params.to_json()},
          {"n", n},           {"candidates", cands},    {"error", error},             {"created_at", created_at}};
}

ReviewService::ReviewService(forge::PoolStore& store, ProviderFactory providers, ServiceConfig config)
    : store_(store), providers_(std::move(providers)), config_(std::move(config)) {
  if (config_.page_size == 0) throw PreconditionError("page_size must be >= 1");
  const std::size_t n = std::max<std::size_t>(1, config_.job_workers);
  for (std::size_t i = 0; i < n; ++i) workers_.emplace_back([this] { worker_loop(); });
}

ReviewService::~ReviewService() {
  stop();
  {
    std::lock_guard lock(jobs_mu_);
    shutting_down_ = true;
  }
  jobs_cv_.notify_all();
  for (auto& w : workers_) w.join();
}

std::string ReviewService::submit_job(const std::string& seed_prompt, const forge::GenerationParams& params,
                                      std::size_t n) {
  if (seed_prompt.empty()) throw PreconditionError("seed_prompt must not be empty");
  if (n < 1) throw PreconditionError("n must be >= 1");
  params.validate();
  Job job;
  char buf[32];
  std::snprintf(buf, sizeof buf, "job-%06llu", static_cast<unsigned long long>(++job_counter_));
  job.id = buf;
  job.status = "queued";
  job.seed_prompt = seed_prompt;
  job.params = params;
  job.n = n;
  job.created_at = now_iso8601();
  {
    std::lock_guard lock(jobs_mu_);
    if (queue_.size() >= config_.max_queued_jobs) throw Error("job queue is full");
    jobs_[job.id] = job;
    queue_.push_back(job.id);
  }
  jobs_cv_.notify_one();
  return job.id;
}

std::optional<Job> ReviewService::job(const std::string& id) const {
  std::lock_guard lock(jobs_mu_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

void ReviewService::worker_loop() {
  for (;;) {
    std::string id;
    {
      std::unique_lock lock(jobs_mu_);
      jobs_cv_.wait(lock, [&] { return shutting_down_ || !queue_.empty(); });
      if (shutting_down_) return;
      id = queue_.front();
      queue_.pop_front();
      jobs_[id].status = "running";
    }
    run_job(id);
  }
}

void ReviewService::run_job(const std::string& id) {
  Job snapshot;
  {
    std::lock_guard lock(jobs_mu_);
    snapshot = jobs_.at(id);
  }
  std::vector<forge::InstructionCandidate> stored;
  std::string error;
  try {
    if (!providers_) throw ProviderError("no completion provider configured");
    auto provider = providers_();
    if (!provider) throw ProviderError("no completion provider configured");
    auto cands = forge::generate_candidates(*provider, snapshot.seed_prompt, snapshot.params, snapshot.n,
                                            config_.generation);
    stored = store_.add_all(std::move(cands));
  } catch (const std::exception& e) {
    error = e.what();
    log::warn("generation " + id + " failed: " + error);
  }
  std::lock_guard lock(jobs_mu_);
  Job& j = jobs_.at(id);
  j.candidates = std::move(stored);
  j.error = error;
  j.status = error.empty() ? "succeeded" : "failed";
}

void ReviewService::record_decision(const std::string& reviewer) {
  std::lock_guard lock(sessions_mu_);
  auto [it, inserted] = sessions_.try_emplace(reviewer);
  if (inserted) {
    it->second.reviewer = reviewer;
    it->second.started_at = now_iso8601();
  }
  ++it->second.decisions_made;
}

std::vector<ReviewSession> ReviewService::sessions() const {
  std::lock_guard lock(sessions_mu_);
  std::vector<ReviewSession> out;
  for (const auto& [k, v] : sessions_) out.push_back(v);
  return out;
}

void ReviewService::bind(httplib::Server& server) {
  const std::string token = config_.token;
  server.set_pre_routing_handler([token](const httplib::Request& req, httplib::Response& res) {
    if (token.empty() || req.path.rfind("/v1/", 0) != 0) return httplib::Server::HandlerResponse::Unhandled;
    if (req.get_header_value(kTokenHeader) != token) {
      send_error(res, 401, "unauthorized", std::string("missing or wrong ") + kTokenHeader + " header");
      return httplib::Server::HandlerResponse::Handled;
    }
    return httplib::Server::HandlerResponse::Unhandled;
  });

  server.Get("/v1/candidates", guarded([this](const httplib::Request& req, httplib::Response& res) {
               std::optional<forge::Decision> filter;
               if (req.has_param("status") && !req.get_param_value("status").empty()) {
                 const std::string s = req.get_param_value("status");
                 if (s != "pending" && s != "accepted" && s != "rejected") {
                   return send_error(res, 400, "bad_request", "invalid status filter: " + s);
                 }
                 filter = forge::decision_from_string(s);
               }
               std::size_t page = 1;
               if (req.has_param("page")) {
                 const std::string p = req.get_param_value("page");
                 std::size_t used = 0;
                 long v = 0;
                 try {
                   v = std::stol(p, &used);
                 } catch (const std::exception&) {
                   used = 0;
                 }
                 if (used != p.size() || v < 1) return send_error(res, 400, "bad_request", "invalid page: " + p);
                 page = static_cast<std::size_t>(v);
               }
               const auto pool = store_.snapshot();
               std::vector<const forge::InstructionCandidate*> match;
               const auto& all = pool.candidates();
               for (auto it = all.rbegin(); it != all.rend(); ++it) {
                 if (!filter || it->human_decision == *filter) match.push_back(&*it);
               }
               const std::size_t ps = config_.page_size;
               Json items = Json::array();
               for (std::size_t i = (page - 1) * ps; i < match.size() && i < page * ps; ++i) {
                 items.push_back(forge::to_json(*match[i]));
               }
               send_json(res, 200,
                         {{"items", items},
                          {"page", page},
                          {"page_size", ps},
                          {"total", match.size()},
                          {"pages", (match.size() + ps - 1) / ps},
                          {"version", pool.version()}});
             }));

  server.Post(R"(/v1/candidates/([^/]+)/decision)",
              guarded([this](const httplib::Request& req, httplib::Response& res) {
                const std::string id = req.matches[1];
                const Json body = Json::parse(req.body);
                const std::string d = body.at("decision").get<std::string>();
                if (d != "accepted" && d != "rejected") {
                  return send_error(res, 400, "bad_request", "decision must be accepted or rejected");
                }
                const std::string reviewer = body.value("reviewer", std::string());
                if (reviewer.empty()) return send_error(res, 400, "bad_request", "reviewer must not be empty");
                const auto before = store_.snapshot().version();
                const auto cand = store_.decide(id, forge::decision_from_string(d), reviewer);
                if (store_.snapshot().version() != before) record_decision(reviewer);
                send_json(res, 200, forge::to_json(cand));
              }));

  server.Post("/v1/generate", guarded([this](const httplib::Request& req, httplib::Response& res) {
                const Json body = Json::parse(req.body);
                const std::string seed = body.value("seed_prompt", std::string());
                const auto params = forge::GenerationParams::from_json(body.value("params", Json::object()));
                const Json jn = body.value("n", Json(1));
                if (!jn.is_number_integer() || jn.get<long long>() < 1) {
                  return send_error(res, 400, "bad_request", "n must be a positive integer");
                }
                std::string id;
                try {
                  id = submit_job(seed, params, jn.get<std::size_t>());
                } catch (const PreconditionError&) {
                  throw;
                } catch (const Error& e) {
                  return send_error(res, 503, "unavailable", e.what());
                }
                send_json(res, 202, {{"job_id", id}, {"status", "queued"}});
              }));

  server.Get(R"(/v1/jobs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
               const auto j = job(req.matches[1]);
               if (!j) return send_error(res, 404, "not_found", "unknown job " + std::string(req.matches[1]));
               send_json(res, 200, j->to_json());
             }));

  server.Get("/v1/pool/stats", guarded([this](const httplib::Request&, httplib::Response& res) {
               Json body = forge::pool_stats(store_.snapshot()).to_json();
               Json sessions = Json::array();
               for (const auto& s : this->sessions()) sessions.push_back(s.to_json());
               body["sessions"] = sessions;
               send_json(res, 200, body);
             }));

  if (!config_.static_dir.empty()) server.set_mount_point("/", config_.static_dir.string());
}

int ReviewService::start(const std::string& host, int port) {
  if (server_) throw PreconditionError("review service already started");
  server_ = std::make_unique<httplib::Server>();
  bind(*server_);
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) {
    server_.reset();
    throw Error("cannot bind " + host + ":" + std::to_string(port));
  }
  server_thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void ReviewService::stop() {
  if (!server_) return;
  server_->stop();
  if (server_thread_.joinable()) server_thread_.join();
  server_.reset();
}

void ReviewService::listen(const std::string& host, int port) {
  httplib::Server server;
  bind(server);
  if (!server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

CannedProvider::CannedProvider(std::vector<std::string> completions, std::size_t refuse_every)
    : completions_(std::move(completions)), refuse_every_(refuse_every) {
  if (completions_.empty()) throw PreconditionError("canned provider needs at least one completion");
}

std::vector<std::string> CannedProvider::default_completions() {
  return {"Please detect the sentiment.",
          "Detect the sentiment of the text.",
          "Classify the sentiment of the provided cryptocurrency related social media posts or messages.",
          "ok",
          "Determine the emotional tone of the given text, which primarily revolves around cryptocurrencies.",
          "Please detect the sentiment of the given text.",
          "Write a poem about the ocean and the sky at night.",
          "Categorize the sentiment expressed in the provided text snippets about cryptocurrency."};
}

forge::CompletionResult CannedProvider::complete(const Json& request) {
  const std::size_t k = calls_++;
  forge::CompletionResult r;
  if (refuse_every_ && (k + 1) % refuse_every_ == 0) {
    r.kind = forge::CompletionResult::Kind::refusal;
    r.text = "I'm sorry, but I can't help with that request.";
    r.finish_reason = "content_filter";
  } else {
    r.text = completions_[k % completions_.size()];
    r.finish_reason = "stop";
  }
  r.response = {{"choices", {{{"text", r.text}, {"finish_reason", r.finish_reason}}}},
                {"model", request.value("model", std::string())}};
  return r;
}

}  // namespace sentilab::review
