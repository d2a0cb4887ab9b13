#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sentilab/augment.hpp"
#include "sentilab/corpus.hpp"
#include "sentilab/metrics.hpp"
#include "sentilab/trainer.hpp"

namespace sentilab::eval {

struct NamedCorpus {
  std::string name;
  Corpus corpus;
};

struct ZeroShotOptions {
  augment::Format render = augment::Format::sft;
  // Required when render is it.
  std::optional<forge::InstructionCandidate> instruction;
  augment::ItLayout layout;
  // Empty disables the prediction cache.
  fs::path cache_dir;
  bool paper_exact_f1 = false;
  std::size_t workers = 1;
};

struct CachedPrediction {
  std::string id;
  std::string raw_output;
  Predicted label = Predicted::unparsed;
};

// Runs `predictor` over every example, preserving input order.
std::vector<CachedPrediction> predict_all(const trainer::Predictor& predictor, const Corpus& corpus,
                                          const ZeroShotOptions& options);

// One report per held-out corpus. A corpus whose name or example sources
// overlap the handle's training sources is rejected.
std::vector<MetricsReport> evaluate_zero_shot(const trainer::ModelHandle& handle, const trainer::Predictor& predictor,
                                              const std::vector<NamedCorpus>& heldout,
                                              const ZeroShotOptions& options);

// `<cache_dir>/<run_id>/<dataset>__<render>[__<instruction_id>].jsonl`
fs::path cache_path(const fs::path& cache_dir, const std::string& run_id, const std::string& dataset,
                    augment::Format render, const std::string& instruction_id);

}  // namespace sentilab::eval
