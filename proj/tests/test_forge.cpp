#include <set>

#include "sentilab/bench.hpp"
#include "sentilab/errors.hpp"
#include "sentilab/forge.hpp"
#include "sentilab/pool.hpp"
#include "sentilab/provider.hpp"
#include "sentilab/review.hpp"
#include "sentilab/rng.hpp"
#include "support.hpp"

// after Eigen: <resolv.h> defines a macro named _res
#include <httplib.h>

using namespace sentilab;
using namespace sentilab::forge;

namespace {

InstructionCandidate filtered(const std::string& text, const InstructionPool& pool) {
  auto c = make_candidate(text, Source::generated);
  c.auto_verdict = auto_filter(c, pool);
  return c;
}

InstructionPool with(InstructionPool pool, InstructionCandidate c) {
  pool.apply(creation_event(pool, std::move(c)));
  return pool;
}

// Scripted provider: replays a list of results, then repeats the last.
class ScriptProvider : public CompletionProvider {
 public:
  explicit ScriptProvider(std::vector<CompletionResult> script) : script_(std::move(script)) {}
  CompletionResult complete(const Json& request) override {
    last_request = request;
    const std::size_t k = calls++;
    return script_[std::min(k, script_.size() - 1)];
  }
  std::size_t calls = 0;
  Json last_request;

 private:
  std::vector<CompletionResult> script_;
};

CompletionResult result(CompletionResult::Kind kind, std::string text = {}) {
  CompletionResult r;
  r.kind = kind;
  r.text = std::move(text);
  return r;
}

GenerationOptions no_sleep() {
  GenerationOptions o;
  o.sleep = [](std::chrono::milliseconds) {};
  o.max_in_flight = 1;
  return o;
}

}  // namespace

TEST_CASE("complexity classes reproduce the transcribed prompt table") {
  std::size_t agree = 0;
  for (const auto& p : bench::transcribed_prompts()) agree += classify_complexity(p.text).complexity == p.expected;
  CHECK(agree == 6);
  CHECK(classify_complexity("Please detect the sentiment.").complexity == Complexity::short_simple);
  CHECK(classify_complexity("Please detect the sentiment.").length_tokens == 4);
  CHECK(classify_complexity("Classify the sentiment of the provided cryptocurrency related social media posts or "
                            "messages.")
            .complexity == Complexity::long_complex);
  ComplexityConfig loose;
  loose.max_short_tokens = 40;
  loose.clause_comma_marks_complex = false;
  CHECK(classify_complexity(bench::transcribed_prompts()[3].text, loose).complexity == Complexity::short_simple);
}

TEST_CASE("auto_filter examples") {
  const InstructionPool empty;
  CHECK(auto_filter(make_candidate("Please detect the sentiment.", Source::generated), empty) == Verdict::pass);
  const auto pool = with(empty, filtered("Please detect the sentiment.", empty));
  CHECK(auto_filter(make_candidate("Please detect the sentiment.", Source::generated), pool) ==
        Verdict::fail_duplicate);
  CHECK(auto_filter(make_candidate("please DETECT the sentiment!", Source::generated), pool) ==
        Verdict::fail_duplicate);
  CHECK(auto_filter(make_candidate("ok", Source::generated), empty) == Verdict::fail_quality);
  CHECK(auto_filter(make_candidate("Write a poem about the ocean.", Source::generated), empty) ==
        Verdict::fail_quality);
  auto refused = make_candidate("I can't help with that.", Source::generated);
  refused.auto_verdict = Verdict::fail_refusal;
  CHECK(auto_filter(refused, empty) == Verdict::fail_refusal);
  // a pure function of the text for a fixed pool
  CHECK(auto_filter(make_candidate("Detect the sentiment of the text.", Source::generated), pool) ==
        auto_filter(make_candidate("Detect the sentiment of the text.", Source::human_seed), pool));
}

TEST_CASE("trigram jaccard") {
  CHECK(trigram_jaccard("abcd", "abcd") == 1.0);
  CHECK(trigram_jaccard("abc", "xyz") == 0.0);
  CHECK(trigram_jaccard("abcd", "abce") == doctest::Approx(1.0 / 3.0));
  CHECK(normalize_instruction("  Detect, the  SENTIMENT! ") == "detect the sentiment");
}

TEST_CASE("apply_decision examples") {
  InstructionPool pool;
  pool = with(pool, filtered("Please detect the sentiment.", pool));
  const std::string good = pool.candidates().back().id;
  pool = with(pool, filtered("ok", pool));
  const std::string bad = pool.candidates().back().id;
  pool = with(pool, filtered("Detect the sentiment of the text.", pool));
  const std::string other = pool.candidates().back().id;

  const auto v = pool.version();
  auto next = apply_decision(pool, good, Decision::accepted, "ana");
  CHECK(next.with_decision(Decision::accepted).size() == 1);
  CHECK(next.version() == v + 1);
  CHECK(next.find(good)->reviewer == "ana");

  CHECK_THROWS_AS(apply_decision(next, bad, Decision::accepted, "ana"), NotAcceptableError);
  CHECK_THROWS_AS(apply_decision(next, good, Decision::rejected, "ana"), ConflictError);
  CHECK_THROWS_AS(apply_decision(next, "nope", Decision::rejected, "ana"), NotFoundError);
  CHECK_THROWS_AS(apply_decision(next, other, Decision::pending, "ana"), PreconditionError);

  auto r1 = apply_decision(next, other, Decision::rejected, "ana");
  auto r2 = apply_decision(r1, other, Decision::rejected, "bo");
  CHECK(r1 == r2);
  CHECK(r2.version() == next.version() + 1);
  CHECK(apply_decision(next, good, Decision::accepted, "ana") == next);
}

TEST_CASE("generation with a mocked provider") {
  review::CannedProvider provider(review::CannedProvider::default_completions());
  GenerationParams params;
  const auto cs = generate_candidates(provider, "Write instructions for sentiment detection.", params, 6, no_sleep());
  REQUIRE(cs.size() == 6);
  std::set<std::string> texts;
  for (const auto& c : cs) texts.insert(c.text);
  CHECK(texts.count("Please detect the sentiment.") == 1);
  CHECK(texts.count("ok") == 1);

  ScriptProvider refusing({result(CompletionResult::Kind::refusal, "I'm sorry, I cannot do that.")});
  const auto r = generate_candidates(refusing, "seed", params, 1, no_sleep());
  REQUIRE(r.size() == 1);
  CHECK(r[0].auto_verdict == Verdict::fail_refusal);
  PoolStore store;
  const auto added = store.add(r[0]);
  CHECK(added.auto_verdict == Verdict::fail_refusal);
  CHECK_THROWS_AS(store.decide(added.id, Decision::accepted, "ana"), NotAcceptableError);
  CHECK(store.refilter(added.id) == Verdict::fail_refusal);

  CHECK_THROWS_AS(generate_candidates(provider, "", params, 1), PreconditionError);
  CHECK_THROWS_AS(generate_candidates(provider, "seed", params, 0), PreconditionError);
  GenerationParams bad;
  bad.max_len = 0;
  CHECK_THROWS_AS(generate_candidates(provider, "seed", bad, 1), PreconditionError);
  bad = {};
  bad.temperature = -1;
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
}

TEST_CASE("retry policy") {
  GenerationParams params;
  std::vector<std::chrono::milliseconds> slept;
  auto opts = no_sleep();
  opts.sleep = [&](std::chrono::milliseconds d) { slept.push_back(d); };

  auto limited = result(CompletionResult::Kind::rate_limited);
  limited.retry_after_s = 1.5;
  ScriptProvider p({result(CompletionResult::Kind::transient), limited,
                    result(CompletionResult::Kind::ok, "1. \"Detect the sentiment of the text.\"")});
  const auto cs = generate_candidates(p, "seed", params, 1, opts);
  CHECK(p.calls == 3);
  CHECK(cs[0].text == "Detect the sentiment of the text.");
  REQUIRE(slept.size() == 2);
  CHECK(slept[0] == opts.base_backoff);
  CHECK(slept[1] == std::chrono::milliseconds(1500));

  ScriptProvider down({result(CompletionResult::Kind::transient)});
  CHECK_THROWS_AS(generate_candidates(down, "seed", params, 1, opts), ProviderError);
  CHECK(down.calls == static_cast<std::size_t>(opts.max_attempts));
  ScriptProvider fatal({result(CompletionResult::Kind::fatal)});
  CHECK_THROWS_AS(generate_candidates(fatal, "seed", params, 1, opts), ProviderError);
  CHECK(fatal.calls == 1);

  CHECK(backoff_delay(opts, 1) == opts.base_backoff);
  CHECK(backoff_delay(opts, 3) == 4 * opts.base_backoff);
  CHECK(backoff_delay(opts, 30) == opts.max_backoff);
}

TEST_CASE("request shape and response interpretation") {
  GenerationParams params;
  params.penalty = 0.5;
  Json req = build_request(params, "hello");
  CHECK(req.at("model") == "text-davinci-003");
  CHECK(req.at("prompt") == "hello");
  CHECK(req.at("max_tokens") == 64);
  CHECK(req.at("frequency_penalty") == 0.5);
  CHECK(req.contains("temperature"));
  CHECK(req.contains("top_p"));
  params.mode = Mode::chat;
  req = build_request(params, "hello");
  CHECK(req.at("messages")[0].at("content") == "hello");
  CHECK_FALSE(req.contains("prompt"));

  const auto pats = default_refusal_patterns();
  auto r = interpret_response(200, R"({"choices":[{"text":" Detect the sentiment.","finish_reason":"stop"}]})", "", pats);
  CHECK(r.kind == CompletionResult::Kind::ok);
  r = interpret_response(200, R"({"choices":[{"message":{"content":"As an AI, I cannot"}}]})", "", pats);
  CHECK(r.kind == CompletionResult::Kind::refusal);
  r = interpret_response(429, "{}", "2", pats);
  CHECK(r.kind == CompletionResult::Kind::rate_limited);
  CHECK(r.retry_after_s == 2.0);
  CHECK(interpret_response(503, "", "", pats).kind == CompletionResult::Kind::transient);
  CHECK(interpret_response(401, R"({"error":{"message":"bad key"}})", "", pats).kind == CompletionResult::Kind::fatal);
  CHECK(interpret_response(400, R"({"error":{"code":"content_filter"}})", "", pats).kind ==
        CompletionResult::Kind::refusal);
  CHECK(interpret_response(200, "not json", "", pats).kind == CompletionResult::Kind::fatal);
}

TEST_CASE("http provider against a local endpoint") {
  httplib::Server server;
  std::atomic<int> hits{0};
  std::string auth;
  server.Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    if (hits++ == 0) {
      res.status = 429;
      res.set_header("Retry-After", "0");
      return;
    }
    const Json body = Json::parse(req.body);
    res.set_content(Json{{"choices", {{{"text", "Detect the sentiment of: " + body.at("prompt").get<std::string>()},
                                       {"finish_reason", "stop"}}}}}
                        .dump(),
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ::setenv("SENTILAB_TEST_PROVIDER_TOKEN", "sekret", 1);
  HttpProviderConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
  cfg.token_env = "SENTILAB_TEST_PROVIDER_TOKEN";
  HttpCompletionProvider provider(cfg);
  const auto dir = testing::temp_dir("audit");
  auto opts = no_sleep();
  opts.audit_log = dir / "audit.jsonl";
  const auto cs = generate_candidates(provider, "tweets", {}, 1, opts);
  server.stop();
  t.join();
  REQUIRE(cs.size() == 1);
  CHECK(cs[0].text == "Detect the sentiment of: tweets");
  CHECK(auth == "Bearer sekret");
  const auto audit = read_jsonl(opts.audit_log);
  REQUIRE(audit.size() == 2);
  for (const auto& a : audit) {
    CHECK(a.contains("request"));
    CHECK(a.contains("response"));
    CHECK(a.contains("timestamp"));
  }

  HttpProviderConfig nowhere;
  nowhere.base_url = "http://127.0.0.1:1";
  nowhere.timeout_s = 1;
  HttpCompletionProvider dead(nowhere);
  CHECK(dead.complete(build_request({}, "x")).kind == CompletionResult::Kind::transient);
}

TEST_CASE("10,000 random pool operations keep the invariants and replay exactly") {
  const auto dir = testing::temp_dir("pool-prop");
  PoolStore store(dir, {}, 250);
  review::CannedProvider canned(review::CannedProvider::default_completions(), 7);
  const std::vector<std::string> variants = {"Please detect the sentiment.", "please detect the sentiment",
                                             "Detect the sentiment of the given text.",
                                             "Classify the emotional tone of the post.",
                                             "Determine whether this tweet is positive or negative.", "no", ""};
  Rng rng(2024);
  std::size_t ops = 0, rejected_ops = 0;
  while (ops < 10000) {
    const auto pool = store.snapshot();
    const std::uint64_t kind = rng.below(10);
    try {
      if (kind < 3) {
        store.add_all(generate_candidates(canned, "seed", {}, 1 + rng.below(3), no_sleep()));
      } else if (kind < 4) {
        store.add(make_candidate(rng.pick(variants), Source::human_seed));
      } else if (kind < 5 && pool.size() > 0) {
        store.refilter(pool.candidates()[rng.below(pool.size())].id);
      } else if (pool.size() > 0) {
        const auto& c = pool.candidates()[rng.below(pool.size())];
        const auto d = rng.bernoulli(0.6) ? Decision::accepted : Decision::rejected;
        const auto before = store.snapshot();
        try {
          store.decide(c.id, d, rng.bernoulli(0.5) ? "ana" : "bo");
        } catch (const Error&) {
          CHECK(store.snapshot() == before);
          throw;
        }
      }
    } catch (const ConflictError&) {
      ++rejected_ops;
    } catch (const NotAcceptableError&) {
      ++rejected_ops;
    }
    ++ops;
    const auto now = store.snapshot();
    const auto v = now.invariant_violations(store.filter_config());
    REQUIRE_MESSAGE(v.empty(), "op " << ops << ": " << v.front());
  }
  MESSAGE("operations refused by the pool: " << rejected_ops);
  const auto final_pool = store.snapshot();
  CHECK(PoolStore::replay(dir / "events.jsonl") == final_pool);
  CHECK(PoolStore(dir).snapshot() == final_pool);

  std::set<std::string> accepted_norm;
  for (const auto* c : final_pool.with_decision(Decision::accepted)) {
    CHECK(accepted_norm.insert(normalize_instruction(c->text)).second);
  }
  CHECK(final_pool.with_decision(Decision::accepted).size() >= 2);
  const auto s = pool_stats(final_pool);
  CHECK(s.by_decision.at("pending") + s.by_decision.at("accepted") + s.by_decision.at("rejected") == s.total);
}

TEST_CASE("replay rejects a corrupted log") {
  InstructionPool pool;
  auto c = make_candidate("Please detect the sentiment.", Source::human_seed);
  std::vector<PoolEvent> events{creation_event(pool, c)};
  pool.apply(events.back());
  PoolEvent bad = decision_event(pool, c.id, Decision::rejected, "ana").value();
  bad.seq = 7;
  events.push_back(bad);
  CHECK_THROWS(InstructionPool::from_events(events));
}
