#include <set>
#include <cmath>
#include <csignal>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <thread>

#include "sentilab/bench.hpp"
#include "sentilab/errors.hpp"
#include "support.hpp"

using namespace sentilab;
using namespace sentilab::bench;

namespace {

const std::string kInstr = "Detect the sentiment of the given text";

SweepConfig base_config(Rq rq, const fs::path& out) {
  SweepConfig c;
  c.rq = rq;
  c.model_specs = {"desk-t5-small"};
  c.sample_sizes = {400};
  c.synth_dir = testing::desk_data();
  c.output_dir = out;
  c.hparams = desk_hparams();
  c.hparams.epochs = 1;
  c.instructions = {{"instr-detect", kInstr}};
  c.formats = {"csv", "markdown", "plot"};
  return c;
}

fs::path labbench() {
  const char* p = std::getenv("LABBENCH");
  REQUIRE_MESSAGE(p, "LABBENCH must point at the labbench binary");
  return p;
}

int run_labbench(const std::vector<std::string>& args, pid_t* child = nullptr) {
  const pid_t pid = ::fork();
  if (pid == 0) {
    std::vector<char*> argv;
    const std::string bin = labbench().string();
    argv.push_back(const_cast<char*>(bin.c_str()));
    for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    ::execv(bin.c_str(), argv.data());
    std::_Exit(127);
  }
  if (child) {
    *child = pid;
    return 0;
  }
  int status = 0;
  ::waitpid(pid, &status, 0);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t count_files(const fs::path& dir) {
  if (!fs::exists(dir)) return 0;
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ".json";
  return n;
}

Json corpus_size_config(const fs::path& out) {
  return {{"rq", "corpus_size"},
          {"preset", "desk"},
          {"model_specs", {"desk-distilbert", "desk-minilm", "desk-t5-small"}},
          {"sample_sizes", {500, 1000, 2000}},
          {"synth_dir", testing::desk_data().string()},
          {"output_dir", out.string()}};
}

}  // namespace

TEST_CASE("config validation") {
  auto c = base_config(Rq::prompts, testing::temp_dir("v"));
  CHECK_THROWS_AS(c.validate(), PreconditionError);
  c.instructions = {{"a", "Please detect the sentiment."}, {"b", "Detect the sentiment of the text."}};
  CHECK_THROWS_AS(c.validate(), PreconditionError);
  c.instructions.push_back({"c", transcribed_prompts()[5].text});
  CHECK_NOTHROW(c.validate());

  c = base_config(Rq::corpus_size, testing::temp_dir("v"));
  c.regimes = {trainer::Regime::sft};
  c.sample_sizes = {1000, 500};
  CHECK_THROWS_AS(c.validate(), PreconditionError);
  c.sample_sizes = {500};
  CHECK_NOTHROW(c.validate());

  c = base_config(Rq::regimes, testing::temp_dir("v"));
  c.instructions.clear();
  CHECK_THROWS_AS(c.validate(), PreconditionError);
  c.regimes = {trainer::Regime::sft};
  CHECK_NOTHROW(c.validate());
  c.formats = {"pdf"};
  CHECK_THROWS_AS(c.validate(), PreconditionError);
  CHECK_THROWS_AS(run_scale(base_config(Rq::regimes, testing::temp_dir("v"))), PreconditionError);

  const Json j = {{"rq", "prompts"}, {"model_specs", {"desk-t5-base"}}, {"preset", "desk"},
                  {"instructions", {"Please detect the sentiment.", {{"id", "long"}, {"text", transcribed_prompts()[3].text}}}}};
  const auto parsed = SweepConfig::from_json(j);
  CHECK(parsed.regimes == std::vector<trainer::Regime>{trainer::Regime::vanilla, trainer::Regime::it});
  CHECK(parsed.hparams.learning_rate == desk_hparams().learning_rate);
  CHECK(parsed.instructions[1].id == "long");
  CHECK(parsed.instructions[0].id.rfind("instr-", 0) == 0);
  CHECK(SweepConfig::from_json({{"rq", "corpus_size"}, {"model_specs", {"x"}}}).hparams.learning_rate == 2e-5);
}

TEST_CASE("shipped presets parse and validate") {
  for (const auto& e : fs::directory_iterator(fs::path(SENTILAB_DATA_DIR) / "presets")) {
    CAPTURE(e.path().string());
    const auto c = SweepConfig::load(e.path());
    CHECK_NOTHROW(c.validate());
    const bool paper = e.path().filename().string().find(".paper") != std::string::npos;
    CHECK(paper == !c.warning.empty());
    if (c.rq == Rq::prompts) CHECK(c.instructions.size() == 6);
  }
}

TEST_CASE("regimes sweep: report shape, aggregates, determinism and resume") {
  const auto out = testing::temp_dir("regimes");
  auto c = base_config(Rq::regimes, out);
  c.seeds = {1, 2};
  const auto rep = run_regimes(c);
  CHECK(rep.rows.size() == 3 * 2 * 3);
  for (const auto& cell : rep.cells) CHECK(cell.status == "ok");
  CHECK_FALSE(fs::exists(out / "runs" / "desk-t5-small__vanilla__s1__n400" / "weights.ckpt"));
  CHECK(fs::exists(out / "runs" / "desk-t5-small__it__s1__n400" / "weights.ckpt"));

  // aggregates recomputed from the persisted rows
  const auto persisted = assemble(c);
  std::map<std::string, std::pair<double, int>> sums;
  for (const auto& r : persisted.rows) {
    auto& s = sums["mean/" + r.report.regime];
    s.first += static_cast<double>(r.report.counts.tp + r.report.counts.tn) /
               static_cast<double>(r.report.counts.total());
    ++s.second;
  }
  for (const auto& [k, s] : sums) CHECK(std::abs(rep.aggregates.at(k) - s.first / s.second) <= 1e-12);
  CHECK(std::abs(rep.aggregates.at("delta/it-vanilla") -
                 (rep.aggregates.at("mean/it") - rep.aggregates.at("mean/vanilla"))) <= 1e-12);
  for (const auto& [k, v] : compute_aggregates(c.rq, persisted.rows)) CHECK(std::abs(rep.aggregates.at(k) - v) <= 1e-12);

  const auto files = emit_report(rep, c.formats, out / "report");
  CHECK(files.size() == 4);
  const std::string csv = read_file(out / "report" / "regimes.csv");
  const std::string md = read_file(out / "report" / "regimes.md");
  CHECK(md.find("Best_Score") != std::string::npos);
  CHECK(md.find("45.73%") != std::string::npos);
  // every accuracy in the csv appears in the markdown rows table
  for (const auto& r : rep.rows) CHECK(md.find(format_fixed(r.report.values.accuracy, 6)) != std::string::npos);
  CHECK(read_file(out / "report" / "regimes.svg").find("<svg") != std::string::npos);

  // rerun: cells are reused and the csv is byte-identical
  const auto stamp = fs::last_write_time(out / "cells" / "desk-t5-small__it__s1__n400.json");
  const auto again = run_regimes(c);
  CHECK(fs::last_write_time(out / "cells" / "desk-t5-small__it__s1__n400.json") == stamp);
  CHECK(report_csv(again) == csv);

  // a fresh directory with the same seeds yields identical rows
  auto fresh = c;
  fresh.output_dir = testing::temp_dir("regimes-fresh");
  CHECK(report_csv(run_regimes(fresh)) == csv);
}

TEST_CASE("vanilla only sweep never trains") {
  const auto out = testing::temp_dir("vanilla");
  auto c = base_config(Rq::regimes, out);
  c.regimes = {trainer::Regime::vanilla};
  const auto rep = run_regimes(c);
  CHECK(rep.rows.size() == 3);
  CHECK_FALSE(fs::exists(out / "runs"));
}

TEST_CASE("failed cells are recorded and the sweep continues") {
  const auto out = testing::temp_dir("failed");
  auto c = base_config(Rq::regimes, out);
  c.regimes = {trainer::Regime::sft};
  c.sample_sizes = {400, 50000};
  c.seeds = {1, 2};
  // a corrupt run directory left behind by some earlier crash
  const fs::path broken = out / "runs" / "desk-t5-small__sft__s1__n400";
  fs::create_directories(broken);
  write_file_atomic(broken / "handle.json", "{ truncated");
  const auto rep = run_regimes(c);
  std::map<std::string, std::string> status;
  for (const auto& cell : rep.cells) status[cell.key] = cell.status;
  CHECK(status.at("desk-t5-small__sft__s1__n50000") == "skipped");
  CHECK(status.at("desk-t5-small__sft__s1__n400") == "failed");
  CHECK(status.at("desk-t5-small__sft__s2__n400") == "ok");
  CHECK(rep.rows.size() == 3);
  CHECK(report_markdown(rep).find("failed") != std::string::npos);
  // failed cells are retried on the next run
  fs::remove_all(broken);
  const auto retry = run_regimes(c);
  for (const auto& cell : retry.cells) {
    if (cell.key.find("n400") != std::string::npos) CHECK(cell.status == "ok");
  }
  CHECK(retry.rows.size() == 6);
}

TEST_CASE("scale sweep carries the published reference lines") {
  auto c = base_config(Rq::scale, testing::temp_dir("scale"));
  c.regimes = {trainer::Regime::vanilla, trainer::Regime::it};
  c.model_specs = {"desk-t5-small", "desk-t5-base"};
  const auto rep = run_scale(c);
  CHECK(rep.aggregates.count("delta/desk-t5-small/it-vanilla"));
  CHECK(rep.aggregates.count("delta/desk-t5-base/it-vanilla"));
  std::set<double> refs;
  for (const auto& r : rep.references) refs.insert(std::round(r.value * 10000) / 100);
  for (double v : {54.28, 39.02, 39.28, 57.98, 73.10, 75.17}) CHECK(refs.count(v));
  CHECK(report_svg(rep).find("stroke-dasharray") != std::string::npos);
}

TEST_CASE("prompts sweep with the six transcribed prompts") {
  auto c = base_config(Rq::prompts, testing::temp_dir("prompts"));
  c.instructions.clear();
  for (const auto& p : transcribed_prompts()) c.instructions.push_back({"", p.text});
  for (auto& i : c.instructions) i.id = "instr-" + std::to_string(&i - c.instructions.data());
  c.training_instruction = transcribed_prompts()[2].text;
  c.regimes = {trainer::Regime::vanilla, trainer::Regime::it};
  const auto rep = run_prompts(c);
  CHECK(rep.quality_ranking.size() == 6);
  CHECK(std::is_sorted(rep.quality_ranking.begin(), rep.quality_ranking.end(),
                       [](const auto& a, const auto& b) { return a.second > b.second; }));
  for (const char* k : {"class/it/short_simple", "class/it/long_complex", "class/vanilla/short_simple",
                        "class/vanilla/long_complex"}) {
    CHECK(rep.aggregates.count(k));
  }
  const std::string md = report_markdown(rep);
  CHECK(md.find("72.38%") != std::string::npos);
  CHECK(md.find("63.39%") != std::string::npos);
  // each cell trains once and is evaluated under every instruction
  CHECK(rep.rows.size() == 2 * 6 * 3);
}

TEST_CASE("corpus size sweep survives SIGKILL and resumes to an identical report") {
  const auto killed = testing::temp_dir("cs-killed");
  const auto clean = testing::temp_dir("cs-clean");
  write_file_atomic(killed / "config.json", corpus_size_config(killed / "out").dump(2));
  write_file_atomic(clean / "config.json", corpus_size_config(clean / "out").dump(2));

  REQUIRE(run_labbench({"--config", (clean / "config.json").string(), "sweep", "corpus_size"}) == 0);
  CHECK(count_files(clean / "out" / "cells") == 9);

  pid_t child = 0;
  run_labbench({"--config", (killed / "config.json").string(), "sweep", "corpus_size"}, &child);
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(120);
  while (count_files(killed / "out" / "cells") < 2 && std::chrono::steady_clock::now() < deadline) {
    std::this_thread::sleep_for(std::chrono::microseconds(200));
  }
  ::kill(child, SIGKILL);
  int status = 0;
  ::waitpid(child, &status, 0);
  const std::size_t done = count_files(killed / "out" / "cells");
  MESSAGE("cells on disk when killed: " << done);
  CHECK(WIFSIGNALED(status));
  REQUIRE(done < 9);

  REQUIRE(run_labbench({"--config", (killed / "config.json").string(), "sweep", "corpus_size"}) == 0);
  const std::string a = read_file(clean / "out" / "report" / "corpus_size.csv");
  const std::string b = read_file(killed / "out" / "report" / "corpus_size.csv");
  CHECK(a == b);
  const std::string md = read_file(killed / "out" / "report" / "corpus_size.md");
  CHECK(md == read_file(clean / "out" / "report" / "corpus_size.md"));
  CHECK(md.find("| Sample size | desk-distilbert | desk-minilm | desk-t5-small | Average | Best Score |") !=
        std::string::npos);
  CHECK(md.find("6K (published reference)") != std::string::npos);
  CHECK(md.find("65.82%") != std::string::npos);
  CHECK(md.find("Best sample size:") != std::string::npos);
}

TEST_CASE("stop-after-cells interrupts with exit code 3 and resumes") {
  const auto dir = testing::temp_dir("cs-stop");
  auto j = corpus_size_config(dir / "out");
  j["model_specs"] = {"desk-minilm"};
  write_file_atomic(dir / "config.json", j.dump(2));
  const std::string cfg = (dir / "config.json").string();
  CHECK(run_labbench({"--config", cfg, "sweep", "corpus_size", "--stop-after-cells", "1"}) == 3);
  CHECK(count_files(dir / "out" / "cells") == 1);
  CHECK(run_labbench({"--config", cfg, "sweep", "corpus_size"}) == 0);
  CHECK(count_files(dir / "out" / "cells") == 3);
  CHECK(run_labbench({"--config", cfg, "report"}) == 0);
  CHECK(run_labbench({"--config", cfg, "sweep", "regimes"}) == 1);
}
