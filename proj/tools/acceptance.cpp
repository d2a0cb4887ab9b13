// Acceptance run: one PASS/FAIL line per primary criterion.
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cmath>
#include <csignal>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "sentilab/augment.hpp"
#include "sentilab/bench.hpp"
#include "sentilab/errors.hpp"
#include "sentilab/forge.hpp"
#include "sentilab/metrics.hpp"
#include "sentilab/pool.hpp"
#include "sentilab/pretrain.hpp"
#include "sentilab/provider.hpp"
#include "sentilab/review.hpp"
#include "sentilab/rng.hpp"
#include "sentilab/synth.hpp"
#include "sentilab/trainer.hpp"

using namespace sentilab;
using Clock = std::chrono::steady_clock;

namespace {

// Tolerances and budgets.
constexpr double kRatioTol = 1e-12;
constexpr double kLossHand = 0.3285, kLossHandTol = 1e-4;
constexpr double kUniformTol = 1e-9;
constexpr double kGradRelTol = 1e-5;
constexpr double kOverfitReduction = 0.90;
constexpr int kOverfitEpochs = 30;
constexpr double kRegimeMargin = 0.05;
constexpr double kPaperSixK = 65.82, kPaperShort = 72.38, kPaperLong = 63.39;
constexpr int kPoolOps = 10000;
constexpr int kStripCases = 10000;
const std::chrono::seconds kMetricsBudget{10}, kLossBudget{5}, kOverfitBudget{600}, kRegimeBudget{3600};

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail << "failed: " << what << "; ";
    pass = pass && ok;
  }
};

fs::path scratch(const std::string& tag) {
  const fs::path d = fs::temp_directory_path() / "sentilab-acceptance" / (tag + "-" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

const fs::path& desk_data() {
  static const fs::path d = [] {
    const fs::path p = scratch("data");
    synth::write_datasets(p, {});
    return p;
  }();
  return d;
}

std::string pct(double ratio) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << ratio * 100 << "%";
  return s.str();
}

void metrics_oracle(Outcome& o) {
  const auto start = Clock::now();
  Rng rng(31337);
  for (int round = 0; round < 1000 && o.pass; ++round) {
    const std::size_t n = 1 + rng.below(10000);
    std::vector<eval::Predicted> p(n);
    std::vector<Label> g(n);
    const double un = rng.uniform() * 0.2;
    long long tp = 0, tn = 0, fp = 0, fn = 0, u = 0;
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = rng.bernoulli(0.5) ? Label::positive : Label::negative;
      p[i] = rng.bernoulli(un) ? eval::Predicted::unparsed
                               : (rng.bernoulli(0.5) ? eval::Predicted::positive : eval::Predicted::negative);
      if (p[i] == eval::Predicted::unparsed) ++u;
      else if (p[i] == eval::Predicted::positive) (g[i] == Label::positive ? tp : fp)++;
      else (g[i] == Label::negative ? tn : fn)++;
    }
    const auto c = eval::confusion(p, g);
    o.require(static_cast<long long>(c.tp) == tp && static_cast<long long>(c.tn) == tn &&
                  static_cast<long long>(c.fp) == fp && static_cast<long long>(c.fn) == fn &&
                  static_cast<long long>(c.unparsed) == u,
              "integer counts, round " + std::to_string(round));
    const auto m = eval::metrics(c);
    o.require(std::abs(m.accuracy - double(tp + tn) / double(n)) <= kRatioTol, "accuracy");
    if (tp + fp) o.require(std::abs(m.precision - double(tp) / double(tp + fp)) <= kRatioTol, "precision");
    if (tp + fn) o.require(std::abs(m.recall - double(tp) / double(tp + fn)) <= kRatioTol, "recall");
    if (tp + fp + fn) o.require(std::abs(m.f1 - 2.0 * tp / double(2 * tp + fp + fn)) <= kRatioTol, "f1");
  }
  o.require(Clock::now() - start < kMetricsBudget, "runtime");
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void loss_correctness(Outcome& o) {
  const auto start = Clock::now();
  const double hand = trainer::loss_batch(std::vector<double>{0.9, 0.2}, std::vector<int>{1, 0});
  o.require(std::abs(hand - kLossHand) <= kLossHandTol, "hand value");
  for (std::size_t m : {1, 2, 7, 100, 4096}) {
    std::vector<int> y(m);
    for (std::size_t i = 0; i < m; ++i) y[i] = static_cast<int>(i % 2);
    const double l = trainer::loss_batch(std::vector<double>(m, 0.5), y);
    o.require(std::abs(l - double(m) * std::log(2.0)) <= kUniformTol, "m ln 2 at m=" + std::to_string(m));
  }
  const std::vector<double> x{-1.5, -0.3, 0.2, 0.8, 2.0, 3.1};
  const std::vector<int> y{0, 0, 1, 0, 1, 1};
  auto loss = [&](double w, double b) {
    std::vector<double> p;
    for (double xi : x) p.push_back(sigmoid(w * xi + b));
    return trainer::loss_batch(p, y);
  };
  double worst = 0;
  for (auto [w, b] : {std::pair{0.3, -0.1}, std::pair{-1.2, 0.7}, std::pair{2.0, 0.05}}) {
    double gw = 0, gb = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      gw += (sigmoid(w * x[i] + b) - y[i]) * x[i];
      gb += sigmoid(w * x[i] + b) - y[i];
    }
    const double h = 1e-5;
    const double fw = (loss(w + h, b) - loss(w - h, b)) / (2 * h);
    const double fb = (loss(w, b + h) - loss(w, b - h)) / (2 * h);
    worst = std::max({worst, std::abs(fw - gw) / std::abs(gw), std::abs(fb - gb) / std::abs(gb)});
  }
  o.detail << "loss=" << hand << " worst_rel_grad_err=" << worst << " ";
  o.require(worst <= kGradRelTol, "finite differences");
  o.require(Clock::now() - start < kLossBudget, "runtime");
}

// Smallest seq2seq checkpoint by nominal size; it is the one that runs all three regimes.
std::string smallest_checkpoint() {
  const auto reg = model::Registry::load_default();
  const model::RegistryEntry* best = nullptr;
  for (const auto& e : reg.entries()) {
    if (e.spec.arch != model::Arch::seq2seq) continue;
    if (!best || e.spec.params_nominal < best->spec.params_nominal) best = &e;
  }
  return best->spec.checkpoint_id;
}

void overfit(Outcome& o) {
  const auto start = Clock::now();
  const auto reg = model::Registry::load_default();
  const std::string id = smallest_checkpoint();
  const fs::path path = pretrain::resolve(reg, id);
  const auto ckpt = model::Checkpoint::load(path);
  const auto xs = augment::load_train_examples(fs::path(SENTILAB_DATA_DIR) / "overfit64.jsonl");
  o.require(xs.size() == 64, "bundled corpus size");
  std::vector<trainer::EncodedExample> enc;
  for (const auto& e : xs) enc.push_back(trainer::encode_example(ckpt, e.input_text, e.target_text));
  const double initial = trainer::mean_loss(ckpt, enc);
  trainer::TrainHParams hp;
  hp.learning_rate = 1e-2;
  hp.batch_size = 8;
  hp.epochs = kOverfitEpochs;
  hp.seed = 4;
  hp.select_best = false;
  const auto h = trainer::finetune(ckpt, path, trainer::Regime::sft, xs, {}, hp, scratch("overfit"), "overfit");
  const trainer::Predictor p(h);
  const double final_loss = trainer::mean_loss(p.checkpoint(), enc);
  std::size_t correct = 0;
  for (const auto& e : xs) {
    correct += p.predict(e.input_text).label ==
               (e.target_text == "Positive" ? eval::Predicted::positive : eval::Predicted::negative);
  }
  o.detail << id << " acc=" << correct << "/64 loss " << initial << " -> " << final_loss << " ";
  o.require(correct == xs.size(), "training accuracy");
  o.require(final_loss <= (1 - kOverfitReduction) * initial, "loss reduction");
  o.require(Clock::now() - start < kOverfitBudget, "runtime");
}

void regime_trend(Outcome& o) {
  const auto start = Clock::now();
  auto c = bench::SweepConfig::load(fs::path(SENTILAB_DATA_DIR) / "presets" / "regimes.desk.json");
  c.model_specs = {smallest_checkpoint()};
  c.sample_sizes = {2000};
  c.seeds = {1, 2, 3};
  c.balanced = true;
  c.synth_dir = desk_data();
  c.output_dir = scratch("regimes");
  const auto rep = bench::run_regimes(c);
  for (const auto& cell : rep.cells) o.require(cell.status == "ok", "cell " + cell.key);
  const double v = rep.aggregates.at("mean/vanilla"), s = rep.aggregates.at("mean/sft"), i = rep.aggregates.at("mean/it");
  o.detail << "vanilla=" << pct(v) << " sft=" << pct(s) << " it=" << pct(i) << " ";
  o.require(i >= s && s >= v, "ordering it >= sft >= vanilla");
  o.require(i - v >= kRegimeMargin, "it - vanilla margin");
  o.require(Clock::now() - start < kRegimeBudget, "runtime");
}

fs::path labbench_binary() {
  if (const char* p = std::getenv("LABBENCH")) return p;
  return fs::read_symlink("/proc/self/exe").parent_path() / "labbench";
}

pid_t spawn(const std::vector<std::string>& args) {
  const pid_t pid = ::fork();
  if (pid == 0) {
    if (FILE* null = std::fopen("/dev/null", "w")) ::dup2(::fileno(null), STDOUT_FILENO);
    const std::string bin = labbench_binary().string();
    std::vector<char*> argv{const_cast<char*>(bin.c_str())};
    for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    ::execv(bin.c_str(), argv.data());
    std::_Exit(127);
  }
  return pid;
}

int wait_exit(pid_t pid) {
  int status = 0;
  ::waitpid(pid, &status, 0);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t cells_on_disk(const fs::path& dir) {
  if (!fs::exists(dir)) return 0;
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ".json";
  return n;
}

void corpus_size_harness(Outcome& o) {
  const std::vector<std::string> models{"desk-distilbert", "desk-minilm", "desk-t5-small"};
  auto config = [&](const fs::path& dir) {
    const Json j = {{"rq", "corpus_size"},          {"preset", "desk"},
                    {"model_specs", models},        {"sample_sizes", {500, 1000, 2000}},
                    {"synth_dir", desk_data().string()}, {"output_dir", (dir / "out").string()}};
    write_file_atomic(dir / "config.json", j.dump(2));
    return (dir / "config.json").string();
  };
  const fs::path clean = scratch("cs-clean"), killed = scratch("cs-killed");
  o.require(wait_exit(spawn({"--config", config(clean), "sweep", "corpus_size"})) == 0, "clean sweep");

  const pid_t child = spawn({"--config", config(killed), "sweep", "corpus_size"});
  const auto deadline = Clock::now() + std::chrono::seconds(120);
  while (cells_on_disk(killed / "out" / "cells") < 2 && Clock::now() < deadline) {
    std::this_thread::sleep_for(std::chrono::microseconds(200));
  }
  ::kill(child, SIGKILL);
  const int code = wait_exit(child);
  const std::size_t at_kill = cells_on_disk(killed / "out" / "cells");
  o.detail << "killed with " << at_kill << "/9 cells ";
  o.require(code == -1 && at_kill < 9, "sweep killed mid-run");
  o.require(wait_exit(spawn({"--config", (killed / "config.json").string(), "sweep", "corpus_size"})) == 0,
            "resumed sweep");

  const std::string md = read_file(clean / "out" / "report" / "corpus_size.md");
  o.require(md == read_file(killed / "out" / "report" / "corpus_size.md"), "identical markdown after resume");
  o.require(read_file(clean / "out" / "report" / "corpus_size.csv") ==
                read_file(killed / "out" / "report" / "corpus_size.csv"),
            "identical csv after resume");
  std::string header = "| Sample size |";
  for (const auto& m : models) header += " " + m + " |";
  header += " Average | Best Score |";
  o.require(md.find(header) != std::string::npos, "per-model, Average and Best Score columns");
  for (const char* row : {"| 500 |", "| 1000 |", "| 2000 |"}) o.require(md.find(row) != std::string::npos, row);
  o.require(md.find("6K (published reference)") != std::string::npos, "6K reference row");
  o.require(md.find(pct(kPaperSixK / 100)) != std::string::npos, "6K reference value");
}

void prompt_harness(Outcome& o) {
  const auto& prompts = bench::transcribed_prompts();
  std::size_t agree = 0;
  for (const auto& p : prompts) agree += forge::classify_complexity(p.text).complexity == p.expected;
  o.detail << "grouping " << agree << "/" << prompts.size() << " ";
  o.require(prompts.size() == 6 && agree == 6, "complexity grouping");

  auto c = bench::SweepConfig::load(fs::path(SENTILAB_DATA_DIR) / "presets" / "prompts.desk.json");
  c.synth_dir = desk_data();
  c.output_dir = scratch("prompts");
  const auto rep = bench::run_prompts(c);
  for (const char* k : {"class/it/short_simple", "class/it/long_complex", "class/vanilla/short_simple",
                        "class/vanilla/long_complex"}) {
    o.require(rep.aggregates.count(k) == 1, k);
  }
  if (o.pass) {
    o.detail << "it short=" << pct(rep.aggregates.at("class/it/short_simple"))
             << " long=" << pct(rep.aggregates.at("class/it/long_complex")) << " ";
  }
  const std::string md = bench::report_markdown(rep);
  o.require(md.find(pct(kPaperShort / 100)) != std::string::npos, "short reference line");
  o.require(md.find(pct(kPaperLong / 100)) != std::string::npos, "long reference line");
  o.require(bench::report_svg(rep).find("stroke-dasharray") != std::string::npos, "reference lines plotted");
}

void pool_properties(Outcome& o) {
  using namespace forge;
  const fs::path dir = scratch("pool");
  PoolStore store(dir, {}, 250);
  review::CannedProvider canned(review::CannedProvider::default_completions(), 7);
  GenerationOptions quiet;
  quiet.sleep = [](std::chrono::milliseconds) {};
  quiet.max_in_flight = 1;
  const std::vector<std::string> variants = {"Please detect the sentiment.", "please detect the sentiment",
                                             "Detect the sentiment of the given text.",
                                             "Classify the emotional tone of the post.", "no", ""};
  Rng rng(2024);
  for (int op = 0; op < kPoolOps && o.pass; ++op) {
    const auto pool = store.snapshot();
    const std::uint64_t kind = rng.below(10);
    try {
      if (kind < 3) {
        store.add_all(generate_candidates(canned, "seed", {}, 1 + rng.below(3), quiet));
      } else if (kind < 4) {
        store.add(make_candidate(rng.pick(variants), Source::human_seed));
      } else if (kind < 5 && pool.size() > 0) {
        store.refilter(pool.candidates()[rng.below(pool.size())].id);
      } else if (pool.size() > 0) {
        const auto& c = pool.candidates()[rng.below(pool.size())];
        store.decide(c.id, rng.bernoulli(0.6) ? Decision::accepted : Decision::rejected, rng.bernoulli(0.5) ? "ana" : "bo");
      }
    } catch (const ConflictError&) {
    } catch (const NotAcceptableError&) {
    }
    const auto v = store.snapshot().invariant_violations(store.filter_config());
    o.require(v.empty(), "op " + std::to_string(op) + ": " + (v.empty() ? "" : v.front()));
  }
  const auto final_pool = store.snapshot();
  o.require(PoolStore::replay(dir / "events.jsonl") == final_pool, "replay equality");
  std::set<std::string> seen;
  for (const auto* c : final_pool.with_decision(Decision::accepted)) {
    o.require(seen.insert(normalize_instruction(c->text)).second, "duplicate accepted");
  }
  o.detail << kPoolOps << " ops, " << final_pool.size() << " candidates, " << seen.size() << " accepted ";
}

void augmentation(Outcome& o) {
  auto instr = forge::make_candidate("Detect the sentiment of the given text", forge::Source::human_seed);
  instr.auto_verdict = forge::Verdict::pass;
  instr.human_decision = forge::Decision::accepted;
  const std::string raw = "Earn bitcoin on a daily basis!";
  const SentimentExample e{"w:1", raw, clean_text(raw), Label::positive, "w"};
  const auto t = augment::render_it(e, instr);
  o.require(t.input_text == "Detect the sentiment of the given text, Text: Earn bitcoin on a daily basis!",
            "worked string");
  o.require(t.target_text == "Positive", "worked target");

  static const std::vector<std::string> atoms = {"a", "b", " ", ",", "Text: ", ", Text: ", "é", "🚀", "$BTC", "!"};
  Rng rng(5);
  auto text = [&] {
    std::string s = "w";
    for (std::size_t i = 0, n = rng.below(20); i < n; ++i) s += rng.pick(atoms);
    return s;
  };
  for (int i = 0; i < kStripCases && o.pass; ++i) {
    auto in = instr;
    in.text = "Detect " + text();
    const std::string body = text();
    const SentimentExample r{"r:" + std::to_string(i), body, clean_text(body), Label::negative, "r"};
    const auto back = augment::strip_it_prefix(augment::render_it(r, in).input_text, in.text);
    o.require(back && *back == r.clean_text, "strip inverts case " + std::to_string(i));
  }
}

}  // namespace

int main() {
  ::setenv("SENTILAB_LOG", "quiet", 0);
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"metrics oracle equivalence", metrics_oracle},
      {"loss correctness", loss_correctness},
      {"overfit smoke test", overfit},
      {"regime trend at desk scale", regime_trend},
      {"corpus-size sweep harness", corpus_size_harness},
      {"prompt-complexity harness", prompt_harness},
      {"instruction pool properties", pool_properties},
      {"augmentation byte-exactness", augmentation},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    const auto start = Clock::now();
    try {
      check(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << "  (" << o.detail.str() << secs << "s)" << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
