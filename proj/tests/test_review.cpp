#include <chrono>
#include <set>
#include <thread>

#include "sentilab/errors.hpp"
#include "sentilab/pool.hpp"
#include "sentilab/review.hpp"
#include "support.hpp"

#include <httplib.h>

using namespace sentilab;
using namespace sentilab::review;

namespace {

// Distinct, on-task completions so every candidate passes the filter.
std::vector<std::string> distinct_completions() {
  return {"Please detect the sentiment.",
          "Classify the emotional tone of this post.",
          "Determine whether the tweet is positive or negative.",
          "Categorize the sentiment of the message as positive or negative.",
          "Detect the mood expressed in the given cryptocurrency tweet.",
          "Identify the sentiment polarity of the following text."};
}

struct Fixture {
  explicit Fixture(ServiceConfig cfg = {}, ProviderFactory factory = nullptr)
      : dir(testing::temp_dir("review")),
        store(dir),
        service(store,
                factory ? factory : ProviderFactory([] { return std::make_unique<CannedProvider>(distinct_completions()); }),
                std::move(cfg)) {
    port = service.start("127.0.0.1", 0);
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
  }

  httplib::Headers headers() const {
    if (token.empty()) return {};
    return {{kTokenHeader, token}};
  }
  Json get(const std::string& path, int expect = 200) {
    auto res = client->Get(path, headers());
    REQUIRE(res);
    CHECK(res->status == expect);
    return Json::parse(res->body);
  }
  Json post(const std::string& path, const Json& body, int expect) {
    auto res = client->Post(path, headers(), body.dump(), "application/json");
    REQUIRE(res);
    CHECK_MESSAGE(res->status == expect, res->body);
    return Json::parse(res->body);
  }
  Json wait_job(const std::string& id) {
    for (int i = 0; i < 500; ++i) {
      Json j = get("/v1/jobs/" + id);
      if (j.at("status") == "succeeded" || j.at("status") == "failed") return j;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    FAIL("job " << id << " did not finish");
    return {};
  }
  Json decide(const std::string& id, const std::string& decision, int expect, const std::string& reviewer = "ana") {
    return post("/v1/candidates/" + id + "/decision", {{"decision", decision}, {"reviewer", reviewer}}, expect);
  }

  fs::path dir;
  forge::PoolStore store;
  ReviewService service;
  int port = 0;
  std::string token;
  std::unique_ptr<httplib::Client> client;
};

}  // namespace

TEST_CASE("list, decide and partition over HTTP") {
  Fixture f;
  CHECK(f.get("/v1/candidates?status=accepted").at("items").empty());
  const Json job = f.post("/v1/generate", {{"seed_prompt", "Write sentiment instructions."}, {"n", 6}}, 202);
  const Json done = f.wait_job(job.at("job_id"));
  REQUIRE(done.at("status") == "succeeded");
  REQUIRE(done.at("candidates").size() == 6);
  for (const auto& c : done.at("candidates")) CHECK(c.at("auto_verdict") == "pass");

  const Json pending = f.get("/v1/candidates?status=pending");
  REQUIRE(pending.at("items").size() == 6);
  // newest first
  CHECK(pending.at("items")[0].at("id") == done.at("candidates")[5].at("id"));
  const std::string a = pending.at("items")[0].at("id"), b = pending.at("items")[1].at("id");
  const Json accepted = f.decide(a, "accepted", 200);
  CHECK(accepted.at("human_decision") == "accepted");
  CHECK(accepted.at("reviewer") == "ana");
  f.decide(b, "accepted", 200, "bo");
  CHECK(f.get("/v1/candidates?status=pending").at("items").size() == 4);
  CHECK(f.get("/v1/candidates?status=accepted").at("items").size() == 2);
  const std::string c = pending.at("items")[2].at("id");
  f.decide(c, "rejected", 200);
  CHECK(f.get("/v1/candidates?status=rejected").at("total") == 1);
  CHECK(f.get("/v1/candidates").at("total") == 6);

  f.decide(a, "rejected", 409);
  f.decide(a, "accepted", 200);  // repeating a decision is a no-op
  f.decide("cand-unknown", "accepted", 404);
  f.decide(a, "maybe", 400);
  f.decide(c, "accepted", 409);
  f.post("/v1/candidates/" + c + "/decision", {{"decision", "rejected"}}, 400);
  auto res = f.client->Post("/v1/candidates/" + c + "/decision", "{not json", "application/json");
  CHECK(res->status == 400);
  f.get("/v1/candidates?status=bogus", 400);
  f.get("/v1/candidates?page=0", 400);
  f.get("/v1/jobs/job-999999", 404);

  const Json stats = f.get("/v1/pool/stats");
  CHECK(stats.at("by_decision").at("accepted") == 2);
  CHECK(stats.at("by_decision").at("pending") == 3);
  CHECK(stats.at("by_decision").at("rejected") == 1);
  std::map<std::string, int> made;
  for (const auto& s : stats.at("sessions")) made[s.at("reviewer")] = s.at("decisions_made");
  CHECK(made["ana"] == 2);
  CHECK(made["bo"] == 1);

  // the persisted log tells the same story
  const auto replayed = forge::PoolStore::replay(f.dir / "events.jsonl");
  CHECK(replayed == f.store.snapshot());
  CHECK(fs::exists(f.dir / "snapshot.json"));
  CHECK(replayed.invariant_violations().empty());
}

TEST_CASE("fail_quality candidates cannot be accepted") {
  Fixture f({}, [] { return std::make_unique<CannedProvider>(std::vector<std::string>{"ok"}); });
  const Json done = f.wait_job(f.post("/v1/generate", {{"seed_prompt", "x"}, {"n", 1}}, 202).at("job_id"));
  const auto& cand = done.at("candidates")[0];
  CHECK(cand.at("auto_verdict") == "fail_quality");
  const Json err = f.decide(cand.at("id"), "accepted", 422);
  CHECK(err.at("error").contains("message"));
  f.decide(cand.at("id"), "rejected", 200);
}

TEST_CASE("refusals and provider failures surface through jobs") {
  Fixture f({}, [] { return std::make_unique<CannedProvider>(distinct_completions(), 2); });
  const Json done = f.wait_job(f.post("/v1/generate", {{"seed_prompt", "x"}, {"n", 4}}, 202).at("job_id"));
  std::size_t refused = 0;
  for (const auto& c : done.at("candidates")) refused += c.at("auto_verdict") == "fail_refusal";
  CHECK(refused == 2);

  Fixture broken({}, []() -> std::unique_ptr<forge::CompletionProvider> {
    throw ProviderError("no provider config");
  });
  const Json failed = broken.wait_job(broken.post("/v1/generate", {{"seed_prompt", "x"}, {"n", 2}}, 202).at("job_id"));
  CHECK(failed.at("status") == "failed");
  CHECK(failed.at("error").get<std::string>().find("no provider config") != std::string::npos);
  broken.post("/v1/generate", {{"seed_prompt", ""}, {"n", 2}}, 400);
  broken.post("/v1/generate", {{"seed_prompt", "x"}, {"n", 0}}, 400);
  broken.post("/v1/generate", {{"seed_prompt", "x"}, {"n", 1}, {"params", {{"temperature", -1}}}}, 400);
}

TEST_CASE("concurrent jobs both complete and the version only grows") {
  ServiceConfig cfg;
  cfg.job_workers = 2;
  Fixture f(cfg);
  const std::string j1 = f.post("/v1/generate", {{"seed_prompt", "a"}, {"n", 6}}, 202).at("job_id");
  const std::string j2 = f.post("/v1/generate", {{"seed_prompt", "b"}, {"n", 6}}, 202).at("job_id");
  std::vector<std::uint64_t> versions;
  std::string s1, s2;
  for (int i = 0; i < 500 && (s1 != "succeeded" || s2 != "succeeded"); ++i) {
    versions.push_back(f.get("/v1/pool/stats").at("version"));
    s1 = f.get("/v1/jobs/" + j1).at("status");
    s2 = f.get("/v1/jobs/" + j2).at("status");
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  CHECK(s1 == "succeeded");
  CHECK(s2 == "succeeded");
  versions.push_back(f.get("/v1/pool/stats").at("version"));
  CHECK(std::is_sorted(versions.begin(), versions.end()));
  CHECK(versions.back() == 24);  // 12 creations + 12 filter events
  const Json all = f.get("/v1/candidates");
  CHECK(all.at("total") == 12);
  std::size_t dup = 0;
  for (const auto& c : all.at("items")) dup += c.at("auto_verdict") == "fail_duplicate";
  CHECK(dup == 6);
  CHECK(f.store.snapshot().invariant_violations().empty());
}

TEST_CASE("pagination") {
  Fixture f;
  for (int i = 0; i < 25; ++i) {
    f.store.add(forge::make_candidate("Detect the sentiment number " + std::to_string(i) + ".", forge::Source::human_seed));
  }
  const Json p1 = f.get("/v1/candidates?page=1"), p2 = f.get("/v1/candidates?page=2"), p3 = f.get("/v1/candidates?page=3");
  CHECK(p1.at("items").size() == 20);
  CHECK(p2.at("items").size() == 5);
  CHECK(p3.at("items").empty());
  CHECK(p1.at("pages") == 2);
  std::set<std::string> ids;
  for (const auto* p : {&p1, &p2})
    for (const auto& c : p->at("items")) ids.insert(c.at("id"));
  CHECK(ids.size() == 25);
}

TEST_CASE("shared token guards /v1") {
  ServiceConfig cfg;
  cfg.token = "s3cret";
  const auto ui = testing::temp_dir("ui");
  write_file_atomic(ui / "index.html", "<html>curation</html>");
  cfg.static_dir = ui;
  Fixture f(cfg);
  f.get("/v1/candidates", 401);
  f.token = "wrong";
  f.get("/v1/pool/stats", 401);
  f.token = "s3cret";
  f.get("/v1/candidates", 200);
  auto res = f.client->Get("/index.html");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->body == "<html>curation</html>");
}

TEST_CASE("a full job queue answers 503") {
  ServiceConfig cfg;
  cfg.job_workers = 1;
  cfg.max_queued_jobs = 1;
  std::atomic<bool> release{false};
  Fixture f(cfg, [&] {
    while (!release) std::this_thread::sleep_for(std::chrono::milliseconds(1));
    return std::make_unique<CannedProvider>(distinct_completions());
  });
  f.post("/v1/generate", {{"seed_prompt", "a"}, {"n", 1}}, 202);
  std::this_thread::sleep_for(std::chrono::milliseconds(50));  // let the worker pick it up
  f.post("/v1/generate", {{"seed_prompt", "b"}, {"n", 1}}, 202);
  f.post("/v1/generate", {{"seed_prompt", "c"}, {"n", 1}}, 503);
  release = true;
}
