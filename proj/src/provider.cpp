#include "sentilab/provider.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <optional>
#include <thread>

#include <httplib.h>

#include "sentilab/errors.hpp"
#include "sentilab/text.hpp"

namespace sentilab::forge {

Json build_request(const GenerationParams& params, const std::string& prompt) {
  Json req = {{"model", params.model_id},
              {"temperature", params.temperature},
              {"max_tokens", params.max_len},
              {"top_p", params.top_p},
              {"frequency_penalty", params.penalty}};
  if (params.mode == Mode::chat) {
    req["messages"] = Json::array({{{"role", "user"}, {"content", prompt}}});
  } else {
    req["prompt"] = prompt;
  }
  return req;
}

std::vector<std::string> default_refusal_patterns() {
  return {"i'm sorry", "i am sorry", "i cannot", "i can't", "as an ai", "content policy", "unable to comply"};
}

namespace {

bool matches_refusal(const std::string& text, const std::vector<std::string>& patterns) {
  const std::string lower = text::ascii_lower(text.substr(0, 160));
  return std::any_of(patterns.begin(), patterns.end(),
                     [&](const std::string& p) { return lower.find(text::ascii_lower(p)) != std::string::npos; });
}

}  // namespace

CompletionResult interpret_response(int status, const std::string& body, const std::string& retry_after_header,
                                    const std::vector<std::string>& refusal_patterns) {
  CompletionResult r;
  Json parsed = Json::parse(body, nullptr, false);
  r.response = parsed.is_discarded() ? Json(body) : parsed;

  if (status == 429) {
    r.kind = CompletionResult::Kind::rate_limited;
    r.retry_after_s = std::atof(retry_after_header.c_str());
    r.error = "rate limited";
    return r;
  }
  if (status >= 500 || status <= 0) {
    r.kind = CompletionResult::Kind::transient;
    r.error = "provider returned HTTP " + std::to_string(status);
    return r;
  }
  if (status >= 400) {
    std::string code;
    std::string message;
    if (parsed.is_object() && parsed.contains("error") && parsed["error"].is_object()) {
      code = parsed["error"].value("code", std::string());
      message = parsed["error"].value("message", std::string());
    }
    if (code == "content_filter" || code == "content_policy_violation") {
      r.kind = CompletionResult::Kind::refusal;
      r.text = message;
      r.finish_reason = code;
      return r;
    }
    r.kind = CompletionResult::Kind::fatal;
    r.error = "provider returned HTTP " + std::to_string(status) + (message.empty() ? "" : ": " + message);
    return r;
  }
  if (!parsed.is_object() || !parsed.contains("choices") || !parsed["choices"].is_array() ||
      parsed["choices"].empty()) {
    r.kind = CompletionResult::Kind::fatal;
    r.error = "malformed provider response";
    return r;
  }
  const auto& choice = parsed["choices"][0];
  if (choice.contains("message") && choice["message"].is_object()) {
    r.text = choice["message"].value("content", std::string());
  } else {
    r.text = choice.value("text", std::string());
  }
  if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
    r.finish_reason = choice["finish_reason"].get<std::string>();
  }
  r.kind = (r.finish_reason == "content_filter" || matches_refusal(r.text, refusal_patterns))
               ? CompletionResult::Kind::refusal
               : CompletionResult::Kind::ok;
  return r;
}

HttpProviderConfig HttpProviderConfig::from_json(const Json& j) {
  HttpProviderConfig c;
  c.base_url = j.value("base_url", c.base_url);
  c.completions_path = j.value("completions_path", c.completions_path);
  c.chat_path = j.value("chat_path", c.chat_path);
  c.token_env = j.value("token_env", c.token_env);
  c.timeout_s = j.value("timeout_s", c.timeout_s);
  if (j.contains("refusal_patterns")) c.refusal_patterns = j["refusal_patterns"].get<std::vector<std::string>>();
  return c;
}

HttpCompletionProvider::HttpCompletionProvider(HttpProviderConfig cfg) : cfg_(std::move(cfg)) {}

CompletionResult HttpCompletionProvider::complete(const Json& request) {
  httplib::Client client(cfg_.base_url);
  const auto secs = static_cast<time_t>(cfg_.timeout_s);
  client.set_connection_timeout(secs, 0);
  client.set_read_timeout(secs, 0);
  httplib::Headers headers;
  if (const char* token = std::getenv(cfg_.token_env.c_str()); token && *token) {
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }
  const std::string& path = request.contains("messages") ? cfg_.chat_path : cfg_.completions_path;
  auto res = client.Post(path, headers, request.dump(), "application/json");
  if (!res) {
    CompletionResult r;
    r.kind = CompletionResult::Kind::transient;
    r.error = "transport failure: " + httplib::to_string(res.error());
    r.response = r.error;
    return r;
  }
  return interpret_response(res->status, res->body, res->get_header_value("Retry-After"), cfg_.refusal_patterns);
}

std::chrono::milliseconds backoff_delay(const GenerationOptions& opts, int attempt) {
  auto d = opts.base_backoff;
  for (int i = 1; i < attempt && d < opts.max_backoff; ++i) d *= 2;
  return std::min(d, opts.max_backoff);
}

std::string tidy_completion(std::string_view raw) {
  std::string s = text::join(text::split_whitespace(raw), " ");
  // "1." / "1)" / "-" / "*" list markers
  std::size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i > 0 && i + 1 < s.size() && (s[i] == '.' || s[i] == ')') && s[i + 1] == ' ') {
    s.erase(0, i + 2);
  } else if (s.size() > 2 && (s[0] == '-' || s[0] == '*') && s[1] == ' ') {
    s.erase(0, 2);
  }
  while (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\''))) {
    s = s.substr(1, s.size() - 2);
  }
  return s;
}

namespace {

struct Throttle {
  std::mutex mu;
  std::chrono::steady_clock::time_point next = std::chrono::steady_clock::now();
};

}  // namespace

std::vector<InstructionCandidate> generate_candidates(CompletionProvider& provider, const std::string& seed_prompt,
                                                      const GenerationParams& params, std::size_t n,
                                                      const GenerationOptions& opts) {
  if (n == 0) throw PreconditionError("n must be at least 1");
  if (seed_prompt.empty()) throw PreconditionError("seed prompt must be non-empty");
  params.validate();

  const auto sleep = opts.sleep ? opts.sleep : [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  const Json request = build_request(params, seed_prompt);
  std::mutex audit_mu;
  Throttle throttle;

  auto audit = [&](const CompletionResult& r) {
    if (opts.audit_log.empty()) return;
    Json line = {{"request", request}, {"response", r.response}, {"timestamp", now_iso8601()}};
    std::lock_guard lock(audit_mu);
    append_line(opts.audit_log, line.dump(-1, ' ', false, Json::error_handler_t::replace));
  };
  auto wait_turn = [&] {
    if (opts.min_request_interval.count() <= 0) return;
    std::chrono::steady_clock::time_point slot;
    {
      std::lock_guard lock(throttle.mu);
      slot = std::max(throttle.next, std::chrono::steady_clock::now());
      throttle.next = slot + opts.min_request_interval;
    }
    const auto wait = std::chrono::duration_cast<std::chrono::milliseconds>(slot - std::chrono::steady_clock::now());
    if (wait.count() > 0) sleep(wait);
  };

  auto one = [&]() -> InstructionCandidate {
    int attempts = 0;
    int rate_limited = 0;
    while (true) {
      wait_turn();
      const CompletionResult r = provider.complete(request);
      audit(r);
      switch (r.kind) {
        case CompletionResult::Kind::ok:
          return make_candidate(tidy_completion(r.text), Source::generated);
        case CompletionResult::Kind::refusal: {
          auto c = make_candidate(tidy_completion(r.text), Source::generated);
          c.auto_verdict = Verdict::fail_refusal;
          return c;
        }
        case CompletionResult::Kind::rate_limited: {
          if (++rate_limited > opts.max_rate_limit_retries) {
            throw ProviderError("provider kept rate limiting after " + std::to_string(rate_limited - 1) + " retries");
          }
          const auto hinted = std::chrono::milliseconds(static_cast<long long>(r.retry_after_s * 1000.0));
          sleep(hinted.count() > 0 ? hinted : backoff_delay(opts, rate_limited));
          break;
        }
        case CompletionResult::Kind::transient:
          if (++attempts >= opts.max_attempts) {
            throw ProviderError(r.error + " (gave up after " + std::to_string(attempts) + " attempts)");
          }
          sleep(backoff_delay(opts, attempts));
          break;
        case CompletionResult::Kind::fatal:
          throw ProviderError(r.error);
      }
    }
  };

  std::vector<std::optional<InstructionCandidate>> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        results[i] = one();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(opts.max_in_flight, 1, n);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<InstructionCandidate> out;
  out.reserve(n);
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

}  // namespace sentilab::forge
