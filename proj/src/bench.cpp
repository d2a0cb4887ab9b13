#include "sentilab/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <sstream>
#include <thread>

#include "sentilab/corpus.hpp"
#include "sentilab/csv.hpp"
#include "sentilab/errors.hpp"
#include "sentilab/evaluator.hpp"
#include "sentilab/log.hpp"
#include "sentilab/pool.hpp"
#include "sentilab/pretrain.hpp"
#include "sentilab/synth.hpp"

namespace sentilab::bench {

namespace {

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

std::string instruction_id_for(std::string_view text) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "instr-%08llx",
                static_cast<unsigned long long>(fnv1a(text) & 0xffffffffULL));
  return buf;
}

forge::InstructionCandidate as_candidate(const InstructionRef& ref) {
  auto c = forge::make_candidate(ref.text, forge::Source::human_seed, "1970-01-01T00:00:00.000Z");
  c.id = ref.id;
  c.auto_verdict = forge::Verdict::pass;
  c.human_decision = forge::Decision::accepted;
  c.reviewer = "config";
  return c;
}

std::string pct(double v) { return format_fixed(100.0 * v, 2) + "%"; }

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

}  // namespace

std::string_view to_string(Rq rq) {
  switch (rq) {
    case Rq::regimes: return "regimes";
    case Rq::scale: return "scale";
    case Rq::prompts: return "prompts";
    case Rq::corpus_size: return "corpus_size";
  }
  return "regimes";
}

Rq rq_from_string(std::string_view s) {
  if (s == "regimes") return Rq::regimes;
  if (s == "scale") return Rq::scale;
  if (s == "prompts") return Rq::prompts;
  if (s == "corpus_size") return Rq::corpus_size;
  throw ParseError("unknown sweep: " + std::string(s));
}

trainer::TrainHParams desk_hparams() {
  trainer::TrainHParams h;
  h.learning_rate = 3e-3;
  h.batch_size = 16;
  h.epochs = 3;
  return h;
}

trainer::TrainHParams paper_hparams() {
  trainer::TrainHParams h;
  h.learning_rate = 2e-5;
  h.batch_size = 8;
  h.epochs = 3;
  return h;
}

void apply_desk_scale(SweepConfig& config) {
  const auto seed = config.hparams.seed;
  config.hparams = desk_hparams();
  config.hparams.seed = seed;
  if (config.train_schema.empty() && !config.synth_dir) config.synth_dir = config.output_dir / "data";
}

const std::vector<TranscribedPrompt>& transcribed_prompts() {
  using forge::Complexity;
  static const std::vector<TranscribedPrompt> kPrompts = {
      {"Please detect the sentiment.", Complexity::short_simple},
      {"Detect the sentiment of the text.", Complexity::short_simple},
      {"Please detect the sentiment of the given text.", Complexity::short_simple},
      {"Classify the sentiment of the provided cryptocurrency related social media posts or messages.",
       Complexity::long_complex},
      {"Determine the emotional tone of the given text, which primarily revolves around cryptocurrencies and "
       "their associated concepts.",
       Complexity::long_complex},
      {"Categorize the sentiment expressed in the provided dataset consisting of the text snippets related to "
       "cryptocurrency and computer science, focusing on capturing positive or negative sentiments.",
       Complexity::long_complex},
  };
  return kPrompts;
}

void SweepConfig::validate() const {
  if (model_specs.empty()) throw PreconditionError("sweep: model_specs is empty");
  if (seeds.empty()) throw PreconditionError("sweep: seeds is empty");
  if (sample_sizes.empty()) throw PreconditionError("sweep: sample_sizes is empty");
  if (regimes.empty()) throw PreconditionError("sweep: regimes is empty");
  if (train_schema.empty() && !synth_dir) throw PreconditionError("sweep: no training dataset");
  if (!synth_dir && heldout_schemas.empty()) throw PreconditionError("sweep: needs at least one held-out dataset");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw PreconditionError("sweep: train_fraction outside (0,1)");
  if (!std::is_sorted(sample_sizes.begin(), sample_sizes.end())) {
    throw PreconditionError("sweep: sample_sizes must be sorted ascending");
  }
  hparams.validate();
  const bool needs_instruction =
      rq == Rq::prompts || std::count(regimes.begin(), regimes.end(), trainer::Regime::it) > 0 ||
      (vanilla_render == augment::Format::it &&
       std::count(regimes.begin(), regimes.end(), trainer::Regime::vanilla) > 0);
  if (needs_instruction && instructions.empty()) throw PreconditionError("sweep: an instruction is required");
  if (rq == Rq::corpus_size && sample_sizes.size() < 2) {
    log::warn("corpus_size sweep with a single sample size; the curve degenerates to one point");
  }
  if (rq == Rq::prompts) {
    std::set<forge::Complexity> classes;
    for (const auto& i : instructions) classes.insert(forge::classify_complexity(i.text).complexity);
    if (instructions.size() < 2 || classes.size() < 2) {
      throw PreconditionError("prompts sweep needs at least two instructions spanning both complexity classes");
    }
  }
  for (const auto& f : formats) {
    if (f != "csv" && f != "markdown" && f != "plot") throw PreconditionError("sweep: unknown report format " + f);
  }
}

Json SweepConfig::to_json() const {
  Json regs = Json::array();
  for (auto r : regimes) regs.push_back(trainer::to_string(r));
  Json instr = Json::array();
  for (const auto& i : instructions) instr.push_back({{"id", i.id}, {"text", i.text}});
  Json held = Json::array();
  for (const auto& h : heldout_schemas) held.push_back(h.string());
  Json j = {{"rq", to_string(rq)},
            {"model_specs", model_specs},
            {"regimes", regs},
            {"sample_sizes", sample_sizes},
            {"instructions", instr},
            {"seeds", seeds},
            {"datasets", {{"train", train_schema.string()}, {"heldout", held}}},
            {"output_dir", output_dir.string()},
            {"hparams", hparams.to_json()},
            {"train_fraction", train_fraction},
            {"balanced", balanced},
            {"vanilla_render", augment::to_string(vanilla_render)},
            {"paper_exact_f1", paper_exact_f1},
            {"max_parallel_cells", max_parallel_cells},
            {"eval_workers", eval_workers},
            {"formats", formats}};
  if (training_instruction) j["training_instruction"] = *training_instruction;
  if (synth_dir) j["synth_dir"] = synth_dir->string();
  if (!warning.empty()) j["warning"] = warning;
  return j;
}

SweepConfig SweepConfig::from_json(const Json& j, const fs::path& base_dir) {
  SweepConfig c;
  c.rq = rq_from_string(j.at("rq").get<std::string>());
  c.model_specs = j.at("model_specs").get<std::vector<std::string>>();
  if (j.contains("regimes")) {
    c.regimes.clear();
    for (const auto& r : j.at("regimes")) c.regimes.push_back(trainer::regime_from_string(r.get<std::string>()));
  }
  if (c.rq == Rq::scale || c.rq == Rq::prompts) {
    if (!j.contains("regimes")) c.regimes = {trainer::Regime::vanilla, trainer::Regime::it};
  }
  if (c.rq == Rq::corpus_size && !j.contains("regimes")) c.regimes = {trainer::Regime::sft};
  c.sample_sizes = j.value("sample_sizes", c.sample_sizes);
  c.seeds = j.value("seeds", c.seeds);
  for (const auto& i : j.value("instructions", Json::array())) {
    InstructionRef ref;
    if (i.is_string()) {
      ref.text = i.get<std::string>();
    } else {
      ref.text = i.at("text").get<std::string>();
      ref.id = i.value("id", std::string());
    }
    if (ref.id.empty()) ref.id = instruction_id_for(ref.text);
    c.instructions.push_back(std::move(ref));
  }
  if (j.contains("pool_dir")) {
    const auto pool = forge::PoolStore::replay(resolve(base_dir, j.at("pool_dir").get<std::string>()) / "events.jsonl");
    for (const auto& id : j.value("instruction_ids", std::vector<std::string>{})) {
      const auto* cand = pool.find(id);
      if (!cand) throw NotFoundError("instruction " + id + " is not in the pool");
      if (cand->human_decision != forge::Decision::accepted) {
        throw PreconditionError("instruction " + id + " is not accepted");
      }
      c.instructions.push_back({cand->id, cand->text});
    }
  }
  if (j.contains("training_instruction")) c.training_instruction = j.at("training_instruction").get<std::string>();
  if (j.contains("datasets")) {
    const Json& d = j.at("datasets");
    if (d.contains("train")) c.train_schema = resolve(base_dir, d.at("train").get<std::string>());
    for (const auto& h : d.value("heldout", Json::array())) {
      c.heldout_schemas.push_back(resolve(base_dir, h.get<std::string>()));
    }
  }
  if (j.contains("synth_dir")) c.synth_dir = fs::path(j.at("synth_dir").get<std::string>());
  // Output paths are relative to the working directory so shared presets never write into the repo.
  c.output_dir = j.value("output_dir", c.output_dir.string());
  if (j.contains("hparams")) {
    c.hparams = trainer::TrainHParams::from_json(j.at("hparams"));
  } else if (j.value("preset", std::string()) == "desk") {
    c.hparams = desk_hparams();
  } else {
    c.hparams = paper_hparams();
  }
  c.train_fraction = j.value("train_fraction", c.train_fraction);
  c.balanced = j.value("balanced", c.balanced);
  c.vanilla_render = augment::format_from_string(j.value("vanilla_render", std::string("it")));
  c.paper_exact_f1 = j.value("paper_exact_f1", c.paper_exact_f1);
  c.max_parallel_cells = j.value("max_parallel_cells", c.max_parallel_cells);
  c.eval_workers = j.value("eval_workers", c.eval_workers);
  c.formats = j.value("formats", c.formats);
  c.warning = j.value("warning", std::string());
  if (j.value("preset", std::string()) == "desk" && c.train_schema.empty() && !c.synth_dir) {
    c.synth_dir = c.output_dir / "data";
  }
  return c;
}

SweepConfig SweepConfig::load(const fs::path& path) {
  if (!fs::exists(path)) throw NotFoundError("config not found: " + path.string());
  return from_json(read_json(path), path.parent_path());
}

Json SweepRow::to_json() const {
  Json j = report.to_json();
  j["cell"] = cell;
  j["checkpoint"] = checkpoint;
  j["seed"] = seed;
  j["sample_size"] = sample_size;
  j["complexity"] = complexity;
  return j;
}

SweepRow SweepRow::from_json(const Json& j) {
  SweepRow r;
  r.report = eval::MetricsReport::from_json(j);
  r.cell = j.at("cell").get<std::string>();
  r.checkpoint = j.at("checkpoint").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.sample_size = j.at("sample_size").get<std::size_t>();
  r.complexity = j.value("complexity", std::string());
  return r;
}

Json SweepReport::to_json() const {
  Json rs = Json::array();
  for (const auto& r : rows) rs.push_back(r.to_json());
  Json cs = Json::array();
  for (const auto& c : cells) cs.push_back({{"key", c.key}, {"status", c.status}, {"message", c.message}});
  Json refs = Json::array();
  for (const auto& r : references) refs.push_back({{"label", r.label}, {"value", r.value}, {"group", r.group}});
  Json rank = Json::array();
  for (const auto& [id, v] : quality_ranking) rank.push_back({{"instruction_id", id}, {"mean_accuracy", v}});
  return {{"rq", to_string(rq)},   {"rows", rs},           {"aggregates", aggregates}, {"quality_ranking", rank},
          {"cells", cs},           {"references", refs},   {"model_order", model_order}};
}

SweepReport SweepReport::from_json(const Json& j) {
  SweepReport r;
  r.rq = rq_from_string(j.at("rq").get<std::string>());
  for (const auto& row : j.at("rows")) r.rows.push_back(SweepRow::from_json(row));
  r.aggregates = j.at("aggregates").get<std::map<std::string, double>>();
  for (const auto& q : j.value("quality_ranking", Json::array())) {
    r.quality_ranking.emplace_back(q.at("instruction_id").get<std::string>(), q.at("mean_accuracy").get<double>());
  }
  for (const auto& c : j.value("cells", Json::array())) {
    r.cells.push_back({c.at("key").get<std::string>(), c.at("status").get<std::string>(),
                       c.value("message", std::string())});
  }
  for (const auto& x : j.value("references", Json::array())) {
    r.references.push_back({x.at("label").get<std::string>(), x.at("value").get<double>(),
                            x.value("group", std::string())});
  }
  r.model_order = j.value("model_order", std::vector<std::string>{});
  return r;
}

std::map<std::string, double> compute_aggregates(Rq rq, const std::vector<SweepRow>& rows) {
  std::map<std::string, std::vector<double>> groups;
  for (const auto& r : rows) {
    const double acc = r.report.values.accuracy;
    const std::string& reg = r.report.regime;
    groups["mean/" + reg].push_back(acc);
    groups["mean/" + r.checkpoint + "/" + reg].push_back(acc);
    groups["mean/" + reg + "/" + r.report.dataset].push_back(acc);
    groups["mean/" + r.checkpoint + "/" + reg + "/" + r.report.dataset].push_back(acc);
    if (rq == Rq::prompts) {
      groups["class/" + reg + "/" + r.complexity].push_back(acc);
      groups["instr/" + reg + "/" + r.report.instruction_id].push_back(acc);
    }
    if (rq == Rq::corpus_size) {
      groups["size/" + r.checkpoint + "/" + std::to_string(r.sample_size)].push_back(acc);
    }
  }
  std::map<std::string, double> out;
  for (const auto& [k, v] : groups) out[k] = mean_of(v);
  auto delta = [&](const std::string& key, const std::string& a, const std::string& b) {
    if (out.count(a) && out.count(b)) out[key] = out[a] - out[b];
  };
  delta("delta/it-vanilla", "mean/it", "mean/vanilla");
  delta("delta/it-sft", "mean/it", "mean/sft");
  delta("delta/sft-vanilla", "mean/sft", "mean/vanilla");
  std::set<std::string> models;
  for (const auto& r : rows) models.insert(r.checkpoint);
  for (const auto& m : models) delta("delta/" + m + "/it-vanilla", "mean/" + m + "/it", "mean/" + m + "/vanilla");
  if (rq == Rq::corpus_size) {
    std::map<std::size_t, std::vector<double>> per_size;
    for (const auto& [k, v] : groups) {
      if (k.rfind("size/", 0) != 0) continue;
      per_size[std::stoul(k.substr(k.rfind('/') + 1))].push_back(mean_of(v));
    }
    double best = -1.0;
    std::size_t arg = 0;
    for (const auto& [n, means] : per_size) {
      const double avg = mean_of(means);
      out["size_average/" + std::to_string(n)] = avg;
      out["size_best/" + std::to_string(n)] = *std::max_element(means.begin(), means.end());
      if (avg > best) {
        best = avg;
        arg = n;
      }
    }
    if (!per_size.empty()) out["argmax_size"] = static_cast<double>(arg);
  }
  return out;
}

std::vector<std::pair<std::string, double>> quality_ranking(const std::vector<SweepRow>& rows) {
  std::map<std::string, std::vector<double>> by;
  for (const auto& r : rows) {
    if (r.report.regime == "it" && !r.report.instruction_id.empty()) by[r.report.instruction_id].push_back(r.report.values.accuracy);
  }
  std::vector<std::pair<std::string, double>> out;
  for (const auto& [id, v] : by) out.emplace_back(id, mean_of(v));
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

std::vector<ReferenceLine> paper_references(Rq rq) {
  switch (rq) {
    case Rq::regimes: return {{"published vanilla average", 0.4573, "vanilla"}};
    case Rq::scale:
      return {{"published untuned small", 0.5428, "small"}, {"published untuned base", 0.3902, "base"},
              {"published untuned large", 0.3928, "large"}, {"published IT small", 0.5798, "small"},
              {"published IT base", 0.7310, "base"},        {"published IT large", 0.7517, "large"}};
    case Rq::prompts:
      return {{"published IT short_simple", 0.7238, "short_simple"},
              {"published IT long_complex", 0.6339, "long_complex"},
              {"published vanilla (both classes)", 0.4643, "vanilla"}};
    case Rq::corpus_size: return {{"published 6K average", 0.6582, "6000"}};
  }
  return {};
}

namespace {

struct Cell {
  std::string key;
  std::string checkpoint;
  std::uint64_t seed = 0;
  std::size_t size = 0;
  trainer::Regime regime = trainer::Regime::vanilla;
};

std::vector<Cell> plan(const SweepConfig& c) {
  std::vector<Cell> cells;
  std::vector<std::string> models = c.model_specs;
  if (c.rq == Rq::prompts) models.resize(1);
  for (const auto& m : models) {
    for (std::size_t n : c.sample_sizes) {
      for (auto seed : c.seeds) {
        for (auto reg : c.regimes) {
          if (c.rq == Rq::corpus_size && reg == trainer::Regime::vanilla) continue;
          Cell cell{"", m, seed, n, reg};
          cell.key = m + "__" + std::string(trainer::to_string(reg)) + "__s" + std::to_string(seed) + "__n" +
                     std::to_string(n);
          cells.push_back(std::move(cell));
        }
      }
    }
  }
  return cells;
}

struct Datasets {
  Corpus train;
  std::vector<eval::NamedCorpus> heldout;
};

Datasets load_datasets(const SweepConfig& c) {
  fs::path train_schema = c.train_schema;
  std::vector<fs::path> heldout = c.heldout_schemas;
  if (c.synth_dir) {
    if (!fs::exists(*c.synth_dir / "neo.schema.json")) synth::write_datasets(*c.synth_dir, {});
    if (train_schema.empty()) train_schema = *c.synth_dir / "neo.schema.json";
    if (heldout.empty()) {
      for (const char* s : {"bitcoin", "reddit", "cryptocurrency"}) heldout.push_back(*c.synth_dir / (std::string(s) + ".schema.json"));
    }
  }
  Datasets d;
  d.train = filter_non_neutral(clean_corpus(load_corpus(CorpusSchema::load(train_schema)).corpus));
  for (const auto& h : heldout) {
    const auto schema = CorpusSchema::load(h);
    d.heldout.push_back({schema.source, filter_non_neutral(clean_corpus(load_corpus(schema).corpus))});
  }
  return d;
}

const InstructionRef& training_instruction(const SweepConfig& c) {
  if (c.training_instruction) {
    for (const auto& i : c.instructions) {
      if (i.id == *c.training_instruction || i.text == *c.training_instruction) return i;
    }
    throw NotFoundError("training instruction not among the configured instructions: " + *c.training_instruction);
  }
  if (c.instructions.empty()) throw PreconditionError("sweep: this regime needs at least one instruction");
  return c.instructions.front();
}

Json run_cell(const SweepConfig& c, const Cell& cell, const Datasets& data, const model::Registry& registry,
              std::mutex& base_mu, std::map<std::string, model::Checkpoint>& bases) {
  Json out = {{"key", cell.key}, {"rows", Json::array()}};
  if (cell.size > data.train.size()) {
    log::warn("cell " + cell.key + ": sample size " + std::to_string(cell.size) + " exceeds the training corpus (" +
              std::to_string(data.train.size()) + "); skipped");
    out["status"] = "skipped";
    out["message"] = "sample size exceeds corpus";
    return out;
  }
  const fs::path base_path = pretrain::resolve(registry, cell.checkpoint);
  const model::Checkpoint* base = nullptr;
  {
    std::lock_guard lock(base_mu);
    auto it = bases.find(cell.checkpoint);
    if (it == bases.end()) it = bases.emplace(cell.checkpoint, model::Checkpoint::load(base_path)).first;
    base = &it->second;
  }

  const auto sample = subsample(data.train, cell.size, cell.seed, c.balanced);
  const auto parts = split(sample, c.train_fraction, cell.seed);
  const bool needs_instruction = cell.regime == trainer::Regime::it ||
                                 (cell.regime == trainer::Regime::vanilla && c.vanilla_render == augment::Format::it);
  const InstructionRef train_instr = needs_instruction ? training_instruction(c) : InstructionRef{};
  const auto train_cand = needs_instruction ? as_candidate(train_instr) : forge::InstructionCandidate{};

  trainer::ModelHandle handle;
  if (cell.regime == trainer::Regime::vanilla) {
    handle = trainer::vanilla_handle(*base, base_path, cell.key, cell.seed);
  } else {
    const fs::path run_dir = c.output_dir / "runs" / cell.key;
    if (fs::exists(run_dir / "handle.json")) {
      handle = trainer::ModelHandle::load(run_dir);
    } else {
      const auto* instr = cell.regime == trainer::Regime::it ? &train_cand : nullptr;
      auto hp = c.hparams;
      hp.seed = cell.seed;
      handle = trainer::finetune(*base, base_path, cell.regime, augment::augment_corpus(parts.train, instr),
                                 augment::augment_corpus(parts.validation, instr), hp, run_dir, cell.key);
    }
  }
  const trainer::Predictor predictor(handle);

  struct EvalSetup {
    augment::Format render;
    std::optional<InstructionRef> instruction;
  };
  std::vector<EvalSetup> setups;
  if (c.rq == Rq::prompts && cell.regime != trainer::Regime::sft) {
    for (const auto& i : c.instructions) setups.push_back({augment::Format::it, i});
  } else if (cell.regime == trainer::Regime::it) {
    setups.push_back({augment::Format::it, train_instr});
  } else if (cell.regime == trainer::Regime::vanilla && c.vanilla_render == augment::Format::it) {
    setups.push_back({augment::Format::it, train_instr});
  } else {
    setups.push_back({augment::Format::sft, std::nullopt});
  }

  for (const auto& s : setups) {
    eval::ZeroShotOptions o;
    o.render = s.render;
    if (s.instruction) o.instruction = as_candidate(*s.instruction);
    o.cache_dir = c.output_dir / "predictions";
    o.paper_exact_f1 = c.paper_exact_f1;
    o.workers = c.eval_workers;
    for (auto& rep : eval::evaluate_zero_shot(handle, predictor, data.heldout, o)) {
      SweepRow row;
      row.report = std::move(rep);
      row.cell = cell.key;
      row.checkpoint = cell.checkpoint;
      row.seed = cell.seed;
      row.sample_size = cell.size;
      if (s.instruction && c.rq == Rq::prompts) {
        row.complexity = std::string(forge::to_string(forge::classify_complexity(s.instruction->text).complexity));
      }
      out["rows"].push_back(row.to_json());
    }
  }
  out["status"] = "ok";
  out["message"] = "";
  out["run"] = {{"train_examples", parts.train.size()},
                {"val_examples", parts.validation.size()},
                {"best_epoch", handle.best_epoch ? Json(*handle.best_epoch) : Json(nullptr)},
                {"truncated_inputs", handle.truncated_inputs}};
  return out;
}

fs::path cell_path(const SweepConfig& c, const std::string& key) { return c.output_dir / "cells" / (key + ".json"); }

}  // namespace

SweepReport assemble(const SweepConfig& config) {
  SweepReport rep;
  rep.rq = config.rq;
  rep.model_order = config.model_specs;
  if (config.rq == Rq::prompts) rep.model_order.resize(1);
  for (const auto& cell : plan(config)) {
    const fs::path p = cell_path(config, cell.key);
    if (!fs::exists(p)) {
      rep.cells.push_back({cell.key, "missing", "not run"});
      continue;
    }
    const Json j = read_json(p);
    rep.cells.push_back({cell.key, j.at("status").get<std::string>(), j.value("message", std::string())});
    for (const auto& r : j.at("rows")) rep.rows.push_back(SweepRow::from_json(r));
  }
  rep.aggregates = compute_aggregates(config.rq, rep.rows);
  if (config.rq == Rq::prompts) rep.quality_ranking = quality_ranking(rep.rows);
  rep.references = paper_references(config.rq);
  return rep;
}

SweepReport run_sweep(const SweepConfig& config, const RunOptions& options) {
  config.validate();
  if (!config.warning.empty()) log::warn(config.warning);
  fs::create_directories(config.output_dir / "cells");
  write_file_atomic(config.output_dir / "config.json", config.to_json().dump(2) + "\n");

  const auto cells = plan(config);
  std::vector<Cell> todo;
  for (const auto& cell : cells) {
    const fs::path p = cell_path(config, cell.key);
    if (fs::exists(p) && read_json(p).value("status", std::string()) != "failed") continue;
    todo.push_back(cell);
  }
  if (!todo.empty()) {
    const auto registry = model::Registry::load_default();
    for (const auto& m : config.model_specs) pretrain::resolve(registry, m);
    const Datasets data = load_datasets(config);
    std::mutex base_mu;
    std::map<std::string, model::Checkpoint> bases;
    std::atomic<std::size_t> next{0}, completed{0};
    std::atomic<bool> stop{false};
    auto work = [&] {
      for (std::size_t i = next++; i < todo.size() && !stop; i = next++) {
        const auto& cell = todo[i];
        Json result;
        try {
          result = run_cell(config, cell, data, registry, base_mu, bases);
        } catch (const std::exception& e) {
          log::warn("cell " + cell.key + " failed: " + e.what());
          result = {{"key", cell.key}, {"status", "failed"}, {"message", e.what()}, {"rows", Json::array()}};
        }
        write_file_atomic(cell_path(config, cell.key), result.dump(1) + "\n");
        log::info("cell " + cell.key + ": " + result.at("status").get<std::string>());
        if (options.stop_after_cells && ++completed >= *options.stop_after_cells) stop = true;
      }
    };
    const std::size_t workers = std::clamp<std::size_t>(config.max_parallel_cells, 1, todo.size());
    if (workers == 1) {
      work();
    } else {
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
      for (auto& t : pool) t.join();
    }
    if (stop && completed < todo.size()) {
      throw Interrupted("stopped after " + std::to_string(completed.load()) + " cells");
    }
  }
  return assemble(config);
}

namespace {

SweepReport run_as(const SweepConfig& config, Rq rq) {
  if (config.rq != rq) throw PreconditionError("config is a " + std::string(to_string(config.rq)) + " sweep");
  return run_sweep(config);
}

}  // namespace

SweepReport run_regimes(const SweepConfig& config) { return run_as(config, Rq::regimes); }
SweepReport run_scale(const SweepConfig& config) { return run_as(config, Rq::scale); }
SweepReport run_prompts(const SweepConfig& config) { return run_as(config, Rq::prompts); }
SweepReport run_corpus_size(const SweepConfig& config) { return run_as(config, Rq::corpus_size); }

// ---------------------------------------------------------------- reports

namespace {

const std::vector<std::string> kRowColumns = {"cell",  "checkpoint", "regime",  "seed",     "sample_size", "dataset",
                                              "render", "instruction_id", "complexity", "Accuracy", "F1 score",
                                              "Precision", "Recall", "tp", "tn", "fp", "fn", "unparsed"};

std::vector<std::string> row_fields(const SweepRow& r) {
  const auto& m = r.report;
  return {r.cell,
          r.checkpoint,
          m.regime,
          std::to_string(r.seed),
          std::to_string(r.sample_size),
          m.dataset,
          m.render,
          m.instruction_id,
          r.complexity,
          format_fixed(m.values.accuracy, 6),
          format_fixed(m.values.f1, 6),
          format_fixed(m.values.precision, 6),
          format_fixed(m.values.recall, 6),
          std::to_string(m.counts.tp),
          std::to_string(m.counts.tn),
          std::to_string(m.counts.fp),
          std::to_string(m.counts.fn),
          std::to_string(m.counts.unparsed)};
}

std::string md_row(const std::vector<std::string>& cells) {
  std::string s = "|";
  for (const auto& c : cells) s += " " + c + " |";
  return s + "\n";
}

std::string md_header(const std::vector<std::string>& cols) {
  std::string s = md_row(cols) + "|";
  for (std::size_t i = 0; i < cols.size(); ++i) s += "---|";
  return s + "\n";
}

std::vector<std::string> ordered_datasets(const SweepReport& r) {
  std::vector<std::string> out;
  for (const auto& row : r.rows) {
    if (std::find(out.begin(), out.end(), row.report.dataset) == out.end()) out.push_back(row.report.dataset);
  }
  return out;
}

std::vector<std::string> ordered_regimes(const SweepReport& r) {
  std::vector<std::string> out;
  for (const char* reg : {"vanilla", "sft", "it"}) {
    for (const auto& row : r.rows) {
      if (row.report.regime == reg) {
        out.push_back(reg);
        break;
      }
    }
  }
  return out;
}

std::string agg(const SweepReport& r, const std::string& key) {
  const auto it = r.aggregates.find(key);
  return it == r.aggregates.end() ? "-" : pct(it->second);
}

std::string size_label(std::size_t n) {
  if (n >= 1000 && n % 1000 == 0) return std::to_string(n / 1000) + "K";
  return std::to_string(n);
}

std::string regimes_tables(const SweepReport& r) {
  std::string s;
  const auto datasets = ordered_datasets(r);
  const auto regimes = ordered_regimes(r);
  for (const auto& ds : datasets) {
    s += "\n### " + ds + " (mean over seeds)\n\n";
    s += md_header({"Model", "Accuracy", "F1 score", "Precision", "Recall"});
    double best[4] = {0, 0, 0, 0};
    for (const auto& m : r.model_order) {
      for (const auto& reg : regimes) {
        std::vector<double> v[4];
        for (const auto& row : r.rows) {
          if (row.checkpoint != m || row.report.regime != reg || row.report.dataset != ds) continue;
          v[0].push_back(row.report.values.accuracy);
          v[1].push_back(row.report.values.f1);
          v[2].push_back(row.report.values.precision);
          v[3].push_back(row.report.values.recall);
        }
        if (v[0].empty()) continue;
        std::vector<std::string> cells{m + "-" + reg};
        for (int k = 0; k < 4; ++k) {
          const double x = mean_of(v[k]);
          best[k] = std::max(best[k], x);
          cells.push_back(pct(x));
        }
        s += md_row(cells);
      }
    }
    s += md_row({"Best_Score", pct(best[0]), pct(best[1]), pct(best[2]), pct(best[3])});
  }
  s += "\n### Average accuracy by regime\n\n" + md_header({"Regime", "Mean accuracy"});
  for (const auto& reg : regimes) s += md_row({reg, agg(r, "mean/" + reg)});
  s += "\nIT minus vanilla: " + agg(r, "delta/it-vanilla") + "; IT minus SFT: " + agg(r, "delta/it-sft") + "\n";
  return s;
}

std::string scale_tables(const SweepReport& r) {
  const auto datasets = ordered_datasets(r);
  std::vector<std::string> cols{"Model"};
  for (const auto& ds : datasets) cols.push_back("Untuned " + ds);
  for (const auto& ds : datasets) cols.push_back("IT " + ds);
  cols.insert(cols.end(), {"Untuned average", "IT average", "IT minus untuned"});
  std::string s = "\n### Scaling (mean over seeds)\n\n" + md_header(cols);
  for (const auto& m : r.model_order) {
    std::vector<std::string> cells{m};
    for (const char* reg : {"vanilla", "it"}) {
      for (const auto& ds : datasets) cells.push_back(agg(r, "mean/" + m + "/" + reg + "/" + ds));
    }
    cells.push_back(agg(r, "mean/" + m + "/vanilla"));
    cells.push_back(agg(r, "mean/" + m + "/it"));
    cells.push_back(agg(r, "delta/" + m + "/it-vanilla"));
    s += md_row(cells);
  }
  return s;
}

std::string prompts_tables(const SweepReport& r) {
  std::string s = "\nInstruction quality is ranked by mean held-out accuracy of the instruction-tuned model.\n";
  s += "\n### Per instruction\n\n" + md_header({"Instruction", "Class", "Vanilla", "IT"});
  std::vector<std::pair<std::string, std::string>> seen;
  for (const auto& row : r.rows) {
    const auto key = std::make_pair(row.report.instruction_id, row.complexity);
    if (!row.report.instruction_id.empty() && std::find(seen.begin(), seen.end(), key) == seen.end()) {
      seen.push_back(key);
    }
  }
  for (const auto& [id, cls] : seen) {
    s += md_row({id, cls, agg(r, "instr/vanilla/" + id), agg(r, "instr/it/" + id)});
  }
  s += "\n### Per complexity class\n\n" + md_header({"Class", "Vanilla", "IT"});
  for (const char* cls : {"short_simple", "long_complex"}) {
    s += md_row({cls, agg(r, std::string("class/vanilla/") + cls), agg(r, std::string("class/it/") + cls)});
  }
  s += "\n### Quality ranking\n\n" + md_header({"Rank", "Instruction", "Mean accuracy"});
  for (std::size_t i = 0; i < r.quality_ranking.size(); ++i) {
    s += md_row({std::to_string(i + 1), r.quality_ranking[i].first, pct(r.quality_ranking[i].second)});
  }
  return s;
}

std::vector<std::size_t> ordered_sizes(const SweepReport& r) {
  std::set<std::size_t> sizes;
  for (const auto& row : r.rows) sizes.insert(row.sample_size);
  return {sizes.begin(), sizes.end()};
}

std::string corpus_size_tables(const SweepReport& r) {
  std::vector<std::string> cols{"Sample size"};
  cols.insert(cols.end(), r.model_order.begin(), r.model_order.end());
  cols.insert(cols.end(), {"Average", "Best Score"});
  std::string s = "\n### Average zero-shot accuracy by sample size\n\n" + md_header(cols);
  for (std::size_t n : ordered_sizes(r)) {
    std::vector<std::string> cells{size_label(n)};
    for (const auto& m : r.model_order) cells.push_back(agg(r, "size/" + m + "/" + std::to_string(n)));
    cells.push_back(agg(r, "size_average/" + std::to_string(n)));
    cells.push_back(agg(r, "size_best/" + std::to_string(n)));
    s += md_row(cells);
  }
  std::vector<std::string> ref{"6K (published reference)"};
  for (std::size_t i = 0; i < r.model_order.size(); ++i) ref.push_back("");
  ref.insert(ref.end(), {"65.82%", ""});
  s += md_row(ref);
  if (const auto it = r.aggregates.find("argmax_size"); it != r.aggregates.end()) {
    s += "\nBest sample size: " + std::to_string(static_cast<std::size_t>(it->second)) + "\n";
  }
  return s;
}

}  // namespace

std::string report_csv(const SweepReport& report) {
  std::string out = csv::join(kRowColumns) + "\n";
  for (const auto& r : report.rows) out += csv::join(row_fields(r)) + "\n";
  return out;
}

std::string report_markdown(const SweepReport& report) {
  std::string s = "# Sweep report: " + std::string(to_string(report.rq)) + "\n";
  switch (report.rq) {
    case Rq::regimes: s += regimes_tables(report); break;
    case Rq::scale: s += scale_tables(report); break;
    case Rq::prompts: s += prompts_tables(report); break;
    case Rq::corpus_size: s += corpus_size_tables(report); break;
  }
  s += "\n### Reference lines\n\n" + md_header({"Reference", "Applies to", "Accuracy"});
  for (const auto& ref : report.references) s += md_row({ref.label, ref.group, pct(ref.value)});
  std::vector<const CellStatus*> bad;
  for (const auto& c : report.cells) {
    if (c.status != "ok") bad.push_back(&c);
  }
  if (!bad.empty()) {
    s += "\n### Cells not completed\n\n" + md_header({"Cell", "Status", "Message"});
    for (const auto* c : bad) s += md_row({c->key, c->status, c->message});
  }
  s += "\n### Rows\n\n" + md_header(kRowColumns);
  for (const auto& r : report.rows) s += md_row(row_fields(r));
  return s;
}

namespace {

struct BarChart {
  std::string title;
  std::vector<std::string> groups;
  std::vector<std::string> series;
  std::vector<std::vector<double>> values;  // [group][series], NaN when absent
  std::vector<ReferenceLine> references;
};

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string render_svg(const BarChart& c) {
  static const char* kColors[] = {"#7f7f7f", "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  const double width = 760, height = 420, left = 60, right = 220, top = 40, bottom = 60;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  auto y_of = [&](double v) { return top + plot_h * (1.0 - v); };
  auto f = [](double v) { return format_fixed(v, 1); };
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + f(width) + "\" height=\"" + f(height) +
                  "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + f(left) + "\" y=\"20\" font-size=\"14\">" + xml_escape(c.title) + "</text>\n";
  for (int t = 0; t <= 10; t += 2) {
    const double y = y_of(t / 10.0);
    s += "<line x1=\"" + f(left) + "\" x2=\"" + f(left + plot_w) + "\" y1=\"" + f(y) + "\" y2=\"" + f(y) +
         "\" stroke=\"#e0e0e0\"/>\n";
    s += "<text x=\"" + f(left - 8) + "\" y=\"" + f(y + 4) + "\" text-anchor=\"end\">" + std::to_string(t * 10) +
         "%</text>\n";
  }
  const double group_w = c.groups.empty() ? plot_w : plot_w / static_cast<double>(c.groups.size());
  const double bar_w = group_w * 0.8 / static_cast<double>(std::max<std::size_t>(1, c.series.size()));
  for (std::size_t g = 0; g < c.groups.size(); ++g) {
    const double gx = left + group_w * static_cast<double>(g) + group_w * 0.1;
    for (std::size_t k = 0; k < c.series.size(); ++k) {
      const double v = c.values[g][k];
      if (std::isnan(v)) continue;
      const double x = gx + bar_w * static_cast<double>(k);
      s += "<rect x=\"" + f(x) + "\" y=\"" + f(y_of(v)) + "\" width=\"" + f(bar_w * 0.95) + "\" height=\"" +
           f(plot_h * v) + "\" fill=\"" + kColors[k % 6] + "\"><title>" + xml_escape(c.series[k]) + " " +
           xml_escape(c.groups[g]) + ": " + pct(v) + "</title></rect>\n";
    }
    s += "<text x=\"" + f(gx + group_w * 0.4) + "\" y=\"" + f(top + plot_h + 18) + "\" text-anchor=\"middle\">" +
         xml_escape(c.groups[g]) + "</text>\n";
  }
  s += "<line x1=\"" + f(left) + "\" x2=\"" + f(left + plot_w) + "\" y1=\"" + f(top + plot_h) + "\" y2=\"" +
       f(top + plot_h) + "\" stroke=\"black\"/>\n";
  double ly = top + 10;
  for (std::size_t k = 0; k < c.series.size(); ++k, ly += 18) {
    s += "<rect x=\"" + f(width - right + 15) + "\" y=\"" + f(ly - 9) + "\" width=\"12\" height=\"12\" fill=\"" +
         kColors[k % 6] + "\"/>\n";
    s += "<text x=\"" + f(width - right + 32) + "\" y=\"" + f(ly + 1) + "\">" + xml_escape(c.series[k]) + "</text>\n";
  }
  for (const auto& ref : c.references) {
    const double y = y_of(ref.value);
    s += "<line x1=\"" + f(left) + "\" x2=\"" + f(left + plot_w) + "\" y1=\"" + f(y) + "\" y2=\"" + f(y) +
         "\" stroke=\"black\" stroke-dasharray=\"5,4\"/>\n";
    s += "<text x=\"" + f(left + plot_w + 4) + "\" y=\"" + f(y + 4) + "\" font-size=\"9\">" +
         xml_escape(ref.label + " " + pct(ref.value)) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

double agg_or_nan(const SweepReport& r, const std::string& key) {
  const auto it = r.aggregates.find(key);
  return it == r.aggregates.end() ? NAN : it->second;
}

}  // namespace

std::string report_svg(const SweepReport& r) {
  BarChart c;
  c.references = r.references;
  switch (r.rq) {
    case Rq::regimes: {
      c.title = "Zero-shot accuracy by regime and held-out dataset";
      c.groups = ordered_datasets(r);
      c.series = ordered_regimes(r);
      for (const auto& ds : c.groups) {
        std::vector<double> v;
        for (const auto& reg : c.series) v.push_back(agg_or_nan(r, "mean/" + reg + "/" + ds));
        c.values.push_back(v);
      }
      break;
    }
    case Rq::scale: {
      c.title = "Untuned vs instruction-tuned accuracy by model size";
      c.groups = r.model_order;
      c.series = {"vanilla", "it"};
      for (const auto& m : c.groups) c.values.push_back({agg_or_nan(r, "mean/" + m + "/vanilla"), agg_or_nan(r, "mean/" + m + "/it")});
      break;
    }
    case Rq::prompts: {
      c.title = "Accuracy by instruction complexity";
      c.groups = {"short_simple", "long_complex"};
      c.series = {"vanilla", "it"};
      for (const auto& g : c.groups) c.values.push_back({agg_or_nan(r, "class/vanilla/" + g), agg_or_nan(r, "class/it/" + g)});
      break;
    }
    case Rq::corpus_size: {
      c.title = "Average zero-shot accuracy by sample size";
      for (std::size_t n : ordered_sizes(r)) c.groups.push_back(size_label(n));
      c.series = r.model_order;
      c.series.push_back("Average");
      for (std::size_t n : ordered_sizes(r)) {
        std::vector<double> v;
        for (const auto& m : r.model_order) v.push_back(agg_or_nan(r, "size/" + m + "/" + std::to_string(n)));
        v.push_back(agg_or_nan(r, "size_average/" + std::to_string(n)));
        c.values.push_back(v);
      }
      break;
    }
  }
  return render_svg(c);
}

std::vector<fs::path> emit_report(const SweepReport& report, const std::vector<std::string>& formats,
                                  const fs::path& dir) {
  if (report.rows.empty()) throw PreconditionError("emit_report: report has no rows");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create report directory " + dir.string() + ": " + ec.message());
  const std::string stem = std::string(to_string(report.rq));
  std::vector<fs::path> written;
  for (const auto& f : formats) {
    fs::path p;
    if (f == "csv") {
      p = dir / (stem + ".csv");
      write_file_atomic(p, report_csv(report));
    } else if (f == "markdown") {
      p = dir / (stem + ".md");
      write_file_atomic(p, report_markdown(report));
    } else if (f == "plot") {
      p = dir / (stem + ".svg");
      write_file_atomic(p, report_svg(report));
    } else {
      throw PreconditionError("unknown report format: " + f);
    }
    written.push_back(p);
  }
  const fs::path j = dir / (stem + ".json");
  write_file_atomic(j, report.to_json().dump(1) + "\n");
  written.push_back(j);
  return written;
}

}  // namespace sentilab::bench
