#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "sentilab/pool.hpp"
#include "sentilab/provider.hpp"

namespace httplib {
class Server;
}

namespace sentilab::review {

struct ReviewSession {
  std::string reviewer;
  std::string started_at;
  std::size_t decisions_made = 0;

  Json to_json() const;
};

struct ServiceConfig {
  // Shared static token expected in the X-Review-Token header. Empty
  // disables the check.
  std::string token;
  std::size_t page_size = 20;
  std::size_t job_workers = 2;
  std::size_t max_queued_jobs = 32;
  forge::GenerationOptions generation;
  // Served at / when set (the curation UI build).
  fs::path static_dir;
};

inline constexpr const char* kTokenHeader = "X-Review-Token";

// Creates the provider for one generation job; may throw to signal a
// misconfigured provider.
using ProviderFactory = std::function<std::unique_ptr<forge::CompletionProvider>()>;

struct Job {
  std::string id;
  std::string status;  // queued, running, succeeded, failed
  std::string seed_prompt;
  forge::GenerationParams params;
  std::size_t n = 0;
  std::vector<forge::InstructionCandidate> candidates;
  std::string error;
  std::string created_at;

  Json to_json() const;
};

// HTTP front of an instruction pool. All writes go through the store's
// single writer; generation runs on a bounded worker pool.
class ReviewService {
 public:
  ReviewService(forge::PoolStore& store, ProviderFactory providers, ServiceConfig config = {});
  ~ReviewService();
  ReviewService(const ReviewService&) = delete;
  ReviewService& operator=(const ReviewService&) = delete;

  void bind(httplib::Server& server);

  // Listens on host:port in a background thread. Port 0 picks a free port;
  // the chosen port is returned.
  int start(const std::string& host, int port);
  void stop();
  // Blocks until the server stops.
  void listen(const std::string& host, int port);

  std::string submit_job(const std::string& seed_prompt, const forge::GenerationParams& params, std::size_t n);
  std::optional<Job> job(const std::string& id) const;
  std::vector<ReviewSession> sessions() const;

 private:
  void worker_loop();
  void run_job(const std::string& id);
  void record_decision(const std::string& reviewer);

  forge::PoolStore& store_;
  ProviderFactory providers_;
  ServiceConfig config_;

  mutable std::mutex jobs_mu_;
  std::condition_variable jobs_cv_;
  std::map<std::string, Job> jobs_;
  std::deque<std::string> queue_;
  std::atomic<std::uint64_t> job_counter_{0};
  bool shutting_down_ = false;
  std::vector<std::thread> workers_;

  mutable std::mutex sessions_mu_;
  std::map<std::string, ReviewSession> sessions_;

  std::unique_ptr<httplib::Server> server_;
  std::thread server_thread_;
};

// Offline provider cycling through canned completions, with an occasional
// refusal. Used by `labbench serve --mock-provider` and tests.
class CannedProvider : public forge::CompletionProvider {
 public:
  explicit CannedProvider(std::vector<std::string> completions = default_completions(), std::size_t refuse_every = 0);
  forge::CompletionResult complete(const Json& request) override;
  static std::vector<std::string> default_completions();

 private:
  std::vector<std::string> completions_;
  std::size_t refuse_every_;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace sentilab::review
