#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <iostream>

#include "sentilab/augment.hpp"
#include "sentilab/bench.hpp"
#include "sentilab/corpus.hpp"
#include "sentilab/errors.hpp"
#include "sentilab/evaluator.hpp"
#include "sentilab/forge.hpp"
#include "sentilab/pool.hpp"
#include "sentilab/pretrain.hpp"
#include "sentilab/provider.hpp"
#include "sentilab/review.hpp"
#include "sentilab/synth.hpp"
#include "sentilab/trainer.hpp"

using namespace sentilab;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  bool desk_scale = false;
};

Json config_json(const Globals& g) {
  if (g.config.empty()) return Json::object();
  return read_json(g.config);
}

trainer::TrainHParams hparams_from(const Globals& g, const Json& cfg) {
  trainer::TrainHParams hp = g.desk_scale ? bench::desk_hparams() : bench::paper_hparams();
  if (cfg.contains("hparams")) hp = trainer::TrainHParams::from_json(cfg.at("hparams"));
  if (g.seed) hp.seed = *g.seed;
  return hp;
}

forge::InstructionCandidate instruction_from(const std::string& text, const std::string& pool_dir,
                                             const std::string& id) {
  if (!pool_dir.empty()) {
    const auto pool = forge::PoolStore::replay(fs::path(pool_dir) / "events.jsonl");
    const auto* c = pool.find(id);
    if (!c) throw NotFoundError("instruction " + id + " not in pool " + pool_dir);
    return *c;
  }
  if (text.empty()) throw PreconditionError("an instruction is required (--instruction or --pool/--instruction-id)");
  auto c = forge::make_candidate(text, forge::Source::human_seed);
  c.auto_verdict = forge::Verdict::pass;
  c.human_decision = forge::Decision::accepted;
  c.reviewer = "cli";
  return c;
}

std::unique_ptr<forge::CompletionProvider> make_provider(bool mock, const std::string& provider_config) {
  if (mock) return std::make_unique<review::CannedProvider>(review::CannedProvider::default_completions(), 5);
  if (provider_config.empty()) throw ProviderError("no provider configured (use --provider-config or --mock-provider)");
  return std::make_unique<forge::HttpCompletionProvider>(forge::HttpProviderConfig::from_json(read_json(provider_config)));
}

void print_candidates(const std::vector<forge::InstructionCandidate>& cs) {
  for (const auto& c : cs) std::cout << forge::to_json(c).dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"labbench: instruction-tuned sentiment experiments at desk scale"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON config file");
  app.add_option("--seed", g.seed, "Override the experiment seed");
  app.add_option("--output-dir", g.output_dir, "Override the output directory");
  app.add_flag("--desk-scale", g.desk_scale, "Use desk-scale hyperparameters and synthetic datasets");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Write the synthetic desk datasets and their schemas");
  std::string synth_out = "desk-data";
  synth_cmd->add_option("--out", synth_out, "Target directory");

  // pretrain
  auto* pre_cmd = app.add_subcommand("pretrain", "Build desk checkpoints");
  std::vector<std::string> pre_ids;
  std::string pre_dir;
  pre_cmd->add_option("--checkpoint", pre_ids, "Checkpoint ids (default: all)");
  pre_cmd->add_option("--dir", pre_dir, "Checkpoint directory (default SENTILAB_CHECKPOINT_DIR or ./checkpoints)");

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "Load, clean and summarise a dataset");
  std::string ingest_schema, ingest_out;
  bool ingest_keep_neutral = false;
  ingest_cmd->add_option("--schema", ingest_schema, "Dataset schema JSON")->required();
  ingest_cmd->add_option("--out", ingest_out, "Canonical JSONL output");
  ingest_cmd->add_flag("--keep-neutral", ingest_keep_neutral, "Do not drop neutral rows");

  // forge
  auto* forge_cmd = app.add_subcommand("forge", "Instruction pool operations");
  forge_cmd->require_subcommand(1);
  std::string pool_dir, seed_prompt, provider_config, cand_id, decision, reviewer, status_filter, classify_text;
  std::size_t gen_n = 6;
  bool mock_provider = false;
  auto* gen_cmd = forge_cmd->add_subcommand("generate", "Generate and auto-filter candidates");
  gen_cmd->add_option("--pool", pool_dir)->required();
  gen_cmd->add_option("--seed-prompt", seed_prompt)->required();
  gen_cmd->add_option("--n", gen_n);
  gen_cmd->add_option("--provider-config", provider_config);
  std::string icl_template;
  gen_cmd->add_option("--template", icl_template, "ICL prompt template with a {seed} slot");
  gen_cmd->add_flag("--mock-provider", mock_provider);
  auto* list_cmd = forge_cmd->add_subcommand("list", "List candidates");
  list_cmd->add_option("--pool", pool_dir)->required();
  list_cmd->add_option("--status", status_filter);
  auto* decide_cmd = forge_cmd->add_subcommand("decide", "Record a human decision");
  decide_cmd->add_option("--pool", pool_dir)->required();
  decide_cmd->add_option("--id", cand_id)->required();
  decide_cmd->add_option("--decision", decision)->required()->check(CLI::IsMember({"accepted", "rejected"}));
  decide_cmd->add_option("--reviewer", reviewer)->required();
  auto* add_cmd = forge_cmd->add_subcommand("add", "Add a human-written seed instruction");
  add_cmd->add_option("--pool", pool_dir)->required();
  add_cmd->add_option("text", classify_text)->required();
  auto* classify_cmd = forge_cmd->add_subcommand("classify", "Instruction length and complexity class");
  classify_cmd->add_option("text", classify_text)->required();

  // augment
  auto* aug_cmd = app.add_subcommand("augment", "Render a canonical corpus into training examples");
  std::string aug_corpus, aug_format = "sft", aug_out, instr_text, instr_id;
  aug_cmd->add_option("--corpus", aug_corpus, "Canonical corpus JSONL")->required();
  aug_cmd->add_option("--format", aug_format)->check(CLI::IsMember({"sft", "it"}));
  aug_cmd->add_option("--instruction", instr_text);
  aug_cmd->add_option("--pool", pool_dir);
  aug_cmd->add_option("--instruction-id", instr_id);
  aug_cmd->add_option("--out", aug_out)->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Fine-tune a checkpoint");
  std::string train_ckpt = "desk-t5-small", train_regime = "sft", train_file, val_file, run_dir;
  train_cmd->add_option("--checkpoint", train_ckpt);
  train_cmd->add_option("--regime", train_regime)->check(CLI::IsMember({"sft", "it"}));
  train_cmd->add_option("--train", train_file)->required();
  train_cmd->add_option("--val", val_file);
  train_cmd->add_option("--run-dir", run_dir)->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Zero-shot evaluation of a run (or a vanilla checkpoint)");
  std::string eval_run, eval_ckpt, eval_render = "sft";
  std::vector<std::string> eval_schemas;
  bool paper_f1 = false;
  eval_cmd->add_option("--run", eval_run, "Run directory with handle.json");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Evaluate this checkpoint untuned instead");
  eval_cmd->add_option("--heldout", eval_schemas, "Held-out dataset schemas")->required();
  eval_cmd->add_option("--render", eval_render)->check(CLI::IsMember({"sft", "it"}));
  eval_cmd->add_option("--instruction", instr_text);
  eval_cmd->add_flag("--paper-exact-f1", paper_f1, "F1 with true negatives in the denominator");

  // sweep / report
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a research-question sweep");
  std::string sweep_rq;
  std::optional<std::size_t> stop_after;
  sweep_cmd->add_option("rq", sweep_rq)->required()->check(CLI::IsMember({"regimes", "scale", "prompts", "corpus_size"}));
  sweep_cmd->add_option("--stop-after-cells", stop_after, "Stop after this many newly completed cells");
  auto* report_cmd = app.add_subcommand("report", "Re-emit a sweep report from persisted cells");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Start the review API");
  std::string host = "127.0.0.1", static_dir, token;
  int port = 8787;
  serve_cmd->add_option("--pool", pool_dir)->required();
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port);
  serve_cmd->add_option("--token", token, "Shared token (default SENTILAB_REVIEW_TOKEN)");
  serve_cmd->add_option("--static-dir", static_dir, "Curation UI build to serve at /");
  serve_cmd->add_option("--provider-config", provider_config);
  serve_cmd->add_flag("--mock-provider", mock_provider);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth_cmd) {
      for (const auto& p : synth::write_datasets(synth_out, {})) std::cout << p.string() << "\n";
    } else if (*pre_cmd) {
      const auto reg = model::Registry::load_default();
      const fs::path dir = pre_dir.empty() ? model::checkpoint_dir() : fs::path(pre_dir);
      for (const auto& e : reg.entries()) {
        if (!pre_ids.empty() && std::find(pre_ids.begin(), pre_ids.end(), e.spec.checkpoint_id) == pre_ids.end()) continue;
        std::cout << pretrain::ensure_checkpoint(e, dir).string() << "\n";
      }
    } else if (*ingest_cmd) {
      auto loaded = load_corpus(CorpusSchema::load(ingest_schema));
      Corpus c = clean_corpus(std::move(loaded.corpus));
      if (!ingest_keep_neutral) c = filter_non_neutral(c);
      Json out = {{"rows_read", loaded.report.rows_read},
                  {"loaded", loaded.report.loaded},
                  {"skipped_empty", loaded.report.skipped_empty},
                  {"stats", stats(c).to_json()}};
      std::cout << out.dump(2) << "\n";
      if (!ingest_out.empty()) save_canonical(ingest_out, c);
    } else if (*forge_cmd) {
      if (*classify_cmd) {
        const auto r = forge::classify_complexity(classify_text);
        std::cout << Json{{"length_tokens", r.length_tokens}, {"complexity", forge::to_string(r.complexity)}}.dump()
                  << "\n";
      } else {
        forge::PoolStore store(pool_dir);
        if (*gen_cmd) {
          forge::GenerationParams params = forge::GenerationParams::from_json(config_json(g).value("generation", Json::object()));
          forge::GenerationOptions opts;
          opts.audit_log = fs::path(pool_dir) / "audit.jsonl";
          auto provider = make_provider(mock_provider, provider_config);
          const std::string prompt =
              icl_template.empty() ? seed_prompt
                                   : augment::render_icl_prompt(read_file(icl_template), {{"seed", seed_prompt}});
          print_candidates(store.add_all(forge::generate_candidates(*provider, prompt, params, gen_n, opts)));
        } else if (*list_cmd) {
          const auto pool = store.snapshot();
          const auto& all = pool.candidates();
          for (auto it = all.rbegin(); it != all.rend(); ++it) {
            if (status_filter.empty() || forge::to_string(it->human_decision) == status_filter) {
              std::cout << forge::to_json(*it).dump() << "\n";
            }
          }
        } else if (*decide_cmd) {
          std::cout << forge::to_json(store.decide(cand_id, forge::decision_from_string(decision), reviewer)).dump()
                    << "\n";
        } else if (*add_cmd) {
          std::cout << forge::to_json(store.add(forge::make_candidate(classify_text, forge::Source::human_seed))).dump()
                    << "\n";
        }
      }
    } else if (*aug_cmd) {
      const Corpus c = load_canonical(aug_corpus);
      std::vector<augment::TrainExample> xs;
      if (aug_format == "it") {
        const auto instr = instruction_from(instr_text, pool_dir, instr_id);
        xs = augment::augment_corpus(c, &instr);
      } else {
        xs = augment::augment_corpus(c);
      }
      augment::save_train_examples(aug_out, xs);
      std::cout << xs.size() << " examples written to " << aug_out << "\n";
    } else if (*train_cmd) {
      const Json cfg = config_json(g);
      auto hp = hparams_from(g, cfg);
      const auto reg = model::Registry::load_default();
      const fs::path base_path = pretrain::resolve(reg, train_ckpt);
      const auto base = model::Checkpoint::load(base_path);
      const auto train = augment::load_train_examples(train_file);
      const auto val = val_file.empty() ? std::vector<augment::TrainExample>{} : augment::load_train_examples(val_file);
      const auto h = trainer::finetune(base, base_path, trainer::regime_from_string(train_regime), train, val, hp,
                                       run_dir, fs::path(run_dir).filename().string());
      std::cout << h.to_json().dump(2) << "\n";
    } else if (*eval_cmd) {
      trainer::ModelHandle handle;
      if (!eval_run.empty()) {
        handle = trainer::ModelHandle::load(eval_run);
      } else {
        if (eval_ckpt.empty()) throw PreconditionError("eval needs --run or --checkpoint");
        const auto reg = model::Registry::load_default();
        const fs::path p = pretrain::resolve(reg, eval_ckpt);
        handle = trainer::vanilla_handle(model::Checkpoint::load(p), p, eval_ckpt + "__vanilla", g.seed.value_or(0));
      }
      std::vector<eval::NamedCorpus> held;
      for (const auto& s : eval_schemas) {
        const auto schema = CorpusSchema::load(s);
        held.push_back({schema.source, filter_non_neutral(clean_corpus(load_corpus(schema).corpus))});
      }
      eval::ZeroShotOptions o;
      o.render = augment::format_from_string(eval_render);
      if (o.render == augment::Format::it) o.instruction = instruction_from(instr_text, "", "");
      o.paper_exact_f1 = paper_f1;
      if (!g.output_dir.empty()) o.cache_dir = fs::path(g.output_dir) / "predictions";
      const trainer::Predictor predictor(handle);
      const auto reports = eval::evaluate_zero_shot(handle, predictor, held, o);
      std::cout << eval::reports_to_csv(reports);
      if (!g.output_dir.empty()) {
        fs::create_directories(g.output_dir);
        write_file_atomic(fs::path(g.output_dir) / (handle.run_id + "__eval.csv"), eval::reports_to_csv(reports));
        write_file_atomic(fs::path(g.output_dir) / (handle.run_id + "__eval.json"),
                          eval::reports_to_json(reports).dump(2) + "\n");
      }
    } else if (*sweep_cmd || *report_cmd) {
      if (g.config.empty()) throw PreconditionError("sweeps need --config");
      auto cfg = bench::SweepConfig::load(g.config);
      if (*sweep_cmd && bench::rq_from_string(sweep_rq) != cfg.rq) {
        throw PreconditionError("config " + g.config + " describes a " + std::string(bench::to_string(cfg.rq)) +
                                " sweep, not " + sweep_rq);
      }
      if (!g.output_dir.empty()) {
        if (cfg.synth_dir && *cfg.synth_dir == cfg.output_dir / "data") cfg.synth_dir = fs::path(g.output_dir) / "data";
        cfg.output_dir = g.output_dir;
      }
      if (g.seed) cfg.seeds = {*g.seed};
      if (g.desk_scale) bench::apply_desk_scale(cfg);
      bench::SweepReport rep;
      if (*sweep_cmd) {
        bench::RunOptions opts;
        opts.stop_after_cells = stop_after;
        try {
          rep = bench::run_sweep(cfg, opts);
        } catch (const bench::Interrupted& e) {
          std::cerr << "interrupted: " << e.what() << "\n";
          return 3;
        }
      } else {
        rep = bench::assemble(cfg);
      }
      for (const auto& p : bench::emit_report(rep, cfg.formats, cfg.output_dir / "report")) {
        std::cout << p.string() << "\n";
      }
      for (const auto& c : rep.cells) {
        if (c.status == "failed") std::cerr << "failed cell " << c.key << ": " << c.message << "\n";
      }
    } else if (*serve_cmd) {
      if (token.empty()) {
        if (const char* t = std::getenv("SENTILAB_REVIEW_TOKEN")) token = t;
      }
      forge::PoolStore store(pool_dir);
      review::ServiceConfig sc;
      sc.token = token;
      sc.static_dir = static_dir;
      sc.generation.audit_log = fs::path(pool_dir) / "audit.jsonl";
      review::ReviewService service(store, [=] { return make_provider(mock_provider, provider_config); }, sc);
      std::cerr << "review api listening on http://" << host << ":" << port << "/v1\n";
      service.listen(host, port);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
