#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sentilab/augment.hpp"
#include "sentilab/forge.hpp"
#include "sentilab/io.hpp"
#include "sentilab/metrics.hpp"
#include "sentilab/trainer.hpp"

namespace sentilab::bench {

enum class Rq { regimes, scale, prompts, corpus_size };

std::string_view to_string(Rq rq);
Rq rq_from_string(std::string_view s);

struct InstructionRef {
  std::string id;
  std::string text;
};

struct SweepConfig {
  Rq rq = Rq::regimes;
  std::vector<std::string> model_specs;  // checkpoint ids
  std::vector<trainer::Regime> regimes{trainer::Regime::vanilla, trainer::Regime::sft, trainer::Regime::it};
  std::vector<std::size_t> sample_sizes{2000};
  // Evaluation instructions. The first one is the training instruction
  // unless `training_instruction` names another.
  std::vector<InstructionRef> instructions;
  std::optional<std::string> training_instruction;
  std::vector<std::uint64_t> seeds{1};
  fs::path train_schema;
  std::vector<fs::path> heldout_schemas;
  // When set, desk datasets are generated here if missing.
  std::optional<fs::path> synth_dir;
  fs::path output_dir = "labbench-out";
  trainer::TrainHParams hparams;
  double train_fraction = 0.9;
  bool balanced = true;
  augment::Format vanilla_render = augment::Format::it;
  bool paper_exact_f1 = false;
  std::size_t max_parallel_cells = 1;
  std::size_t eval_workers = 1;
  std::vector<std::string> formats{"csv", "markdown", "plot"};
  std::string warning;

  void validate() const;
  Json to_json() const;
  // Relative paths resolve against `base_dir`. Instructions may be given as
  // texts (`instructions`) or as ids into an instruction pool
  // (`pool_dir` + `instruction_ids`).
  static SweepConfig from_json(const Json& j, const fs::path& base_dir = {});
  static SweepConfig load(const fs::path& path);
};

// Desk hyperparameters used by --desk-scale.
trainer::TrainHParams desk_hparams();
// Paper-scale hyperparameters (lr 2e-5, batch 8, 3 epochs).
trainer::TrainHParams paper_hparams();
void apply_desk_scale(SweepConfig& config);

// The six prompts of the prompt-complexity study, with the grouping the
// study assigns them.
struct TranscribedPrompt {
  std::string text;
  forge::Complexity expected;
};
const std::vector<TranscribedPrompt>& transcribed_prompts();

struct SweepRow {
  eval::MetricsReport report;
  std::string cell;
  std::string checkpoint;
  std::uint64_t seed = 0;
  std::size_t sample_size = 0;
  std::string complexity;  // prompts sweep only

  Json to_json() const;
  static SweepRow from_json(const Json& j);
};

struct CellStatus {
  std::string key;
  std::string status;  // ok, failed, skipped
  std::string message;
};

struct ReferenceLine {
  std::string label;
  double value = 0.0;  // accuracy ratio
  std::string group;   // where it applies, e.g. "vanilla", "desk-t5-small", "6000"
};

struct SweepReport {
  Rq rq = Rq::regimes;
  std::vector<SweepRow> rows;
  std::map<std::string, double> aggregates;
  std::vector<std::pair<std::string, double>> quality_ranking;
  std::vector<CellStatus> cells;
  std::vector<ReferenceLine> references;
  std::vector<std::string> model_order;

  Json to_json() const;
  static SweepReport from_json(const Json& j);
};

// Group means over rows: "mean/<regime>", "mean/<model>/<regime>",
// "mean/<regime>/<dataset>", "mean/<model>/<size>", "class/<regime>/<complexity>",
// "instr/<regime>/<id>", "size_average/<n>", "size_best/<n>", plus deltas.
std::map<std::string, double> compute_aggregates(Rq rq, const std::vector<SweepRow>& rows);
std::vector<std::pair<std::string, double>> quality_ranking(const std::vector<SweepRow>& rows);
std::vector<ReferenceLine> paper_references(Rq rq);

struct RunOptions {
  // Stop (as if interrupted) after this many newly completed cells.
  std::optional<std::size_t> stop_after_cells;
};

// Runs every cell that is not already complete under output_dir/cells and
// assembles the report from the persisted cell files.
SweepReport run_sweep(const SweepConfig& config, const RunOptions& options = {});

SweepReport run_regimes(const SweepConfig& config);
SweepReport run_scale(const SweepConfig& config);
SweepReport run_prompts(const SweepConfig& config);
SweepReport run_corpus_size(const SweepConfig& config);

// Rebuilds the report from persisted cells without running anything.
SweepReport assemble(const SweepConfig& config);

// Writes `<rq>.csv`, `<rq>.md`, `<rq>.svg` (as requested) and `<rq>.json`
// under `dir`. Returns the written paths.
std::vector<fs::path> emit_report(const SweepReport& report, const std::vector<std::string>& formats,
                                  const fs::path& dir);

std::string report_csv(const SweepReport& report);
std::string report_markdown(const SweepReport& report);
std::string report_svg(const SweepReport& report);

struct Interrupted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sentilab::bench
