#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "sentilab/forge.hpp"

namespace sentilab::forge {

struct CompletionResult {
  enum class Kind { ok, refusal, rate_limited, transient, fatal };

  Kind kind = Kind::ok;
  std::string text;
  std::string finish_reason;
  Json response;  // raw provider body, or an error description
  double retry_after_s = 0.0;
  std::string error;
};

// One HTTP-style completion call. Implementations classify the outcome; the
// retry policy lives in generate_candidates.
class CompletionProvider {
 public:
  virtual ~CompletionProvider() = default;
  virtual CompletionResult complete(const Json& request) = 0;
};

// Request body with fields model, prompt (or messages), temperature,
// max_tokens, top_p, frequency_penalty.
Json build_request(const GenerationParams& params, const std::string& prompt);

// Classifies a provider HTTP response (status + body) into a result.
CompletionResult interpret_response(int status, const std::string& body, const std::string& retry_after_header,
                                    const std::vector<std::string>& refusal_patterns);

std::vector<std::string> default_refusal_patterns();

struct HttpProviderConfig {
  std::string base_url = "http://127.0.0.1:8089";  // scheme://host:port
  std::string completions_path = "/v1/completions";
  std::string chat_path = "/v1/chat/completions";
  std::string token_env = "SENTILAB_PROVIDER_TOKEN";
  double timeout_s = 30.0;
  std::vector<std::string> refusal_patterns = default_refusal_patterns();

  static HttpProviderConfig from_json(const Json& j);
};

class HttpCompletionProvider : public CompletionProvider {
 public:
  explicit HttpCompletionProvider(HttpProviderConfig cfg);
  CompletionResult complete(const Json& request) override;

 private:
  HttpProviderConfig cfg_;
};

struct GenerationOptions {
  int max_attempts = 4;  // per candidate, transport failures only
  int max_rate_limit_retries = 16;
  std::chrono::milliseconds base_backoff{250};
  std::chrono::milliseconds max_backoff{8000};
  std::chrono::milliseconds min_request_interval{0};
  std::size_t max_in_flight = 4;
  std::filesystem::path audit_log;  // empty disables auditing
  std::vector<std::string> refusal_patterns = default_refusal_patterns();
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to this_thread::sleep_for
};

// Backoff before retry `attempt` (1-based): base * 2^(attempt-1), capped.
std::chrono::milliseconds backoff_delay(const GenerationOptions& opts, int attempt);

// Issues `n` completion requests for the seed prompt and turns every answer
// into a pending candidate. A refusal yields a candidate with verdict
// fail_refusal. Transport failures are retried with bounded exponential
// backoff and then rethrown as ProviderError.
std::vector<InstructionCandidate> generate_candidates(CompletionProvider& provider, const std::string& seed_prompt,
                                                      const GenerationParams& params, std::size_t n,
                                                      const GenerationOptions& opts = {});

// Trims whitespace, wrapping quotes and a leading list marker ("1.", "-").
std::string tidy_completion(std::string_view text);

}  // namespace sentilab::forge
