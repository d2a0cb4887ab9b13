#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sentilab/augment.hpp"
#include "sentilab/io.hpp"
#include "sentilab/metrics.hpp"
#include "sentilab/model.hpp"

namespace sentilab::trainer {

enum class Regime { vanilla, sft, it };

std::string_view to_string(Regime r);
Regime regime_from_string(std::string_view s);

struct TrainHParams {
  double learning_rate = 2e-5;
  std::size_t batch_size = 8;
  std::size_t epochs = 3;
  std::uint64_t seed = 0;
  std::string optimizer = "adam";
  int freeze_layers = 0;
  // Keep the weights of the epoch with the lowest validation loss.
  bool select_best = true;
  std::size_t log_every = 25;  // steps between train-loss log rows

  void validate() const;
  Json to_json() const;
  static TrainHParams from_json(const Json& j);
};

struct LogRow {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  std::string split;  // "train" or "val"
};

struct ModelHandle {
  std::string run_id;
  model::ModelSpec spec;
  Regime regime = Regime::vanilla;
  fs::path base_checkpoint;
  std::optional<fs::path> weights_path;
  std::vector<LogRow> train_log;
  // Seed of the randomly initialised head of a vanilla encoder model.
  std::uint64_t head_seed = 0;
  std::size_t truncated_inputs = 0;
  std::optional<std::size_t> best_epoch;
  // Dataset names seen in training, from the example source ids.
  std::vector<std::string> training_sources;

  Json to_json() const;
  static ModelHandle from_json(const Json& j);
  // handle.json plus train_log.csv in `run_dir`.
  void save(const fs::path& run_dir) const;
  static ModelHandle load(const fs::path& run_dir);
};

std::string train_log_csv(const std::vector<LogRow>& rows);

// Binary cross-entropy summed over the batch (no averaging), probabilities clamped to
// [eps, 1 - eps]. Targets are 0/1.
double loss_batch(std::span<const double> probabilities, std::span<const int> targets, double eps = 1e-7);

inline constexpr double kProbEpsilon = 1e-7;

// A TrainExample reduced to model ids.
struct EncodedExample {
  std::vector<int> tokens;
  std::vector<int> targets;  // decoder ids ending in <eos>; seq2seq only
  int label = 0;             // classifier target
};

struct EncodeStats {
  std::size_t truncated = 0;
};

EncodedExample encode_example(const model::Checkpoint& ckpt, std::string_view input, std::string_view target,
                              EncodeStats* stats = nullptr);

// Mean per-example loss (binary cross-entropy for classifier heads, summed token
// cross-entropy for seq2seq).
double mean_loss(const model::Checkpoint& ckpt, std::span<const EncodedExample> data);

struct FitResult {
  std::vector<LogRow> log;
  std::optional<std::size_t> best_epoch;
};

// Optimises `ckpt.params` in place. With validation data and
// `select_best`, the parameters of the best validation epoch are restored.
FitResult fit(model::Checkpoint& ckpt, std::span<const EncodedExample> train, std::span<const EncodedExample> val,
              const TrainHParams& hp);

// Fine-tunes a copy of `base`, writes weights and logs into `run_dir`.
ModelHandle finetune(const model::Checkpoint& base, const fs::path& base_path, Regime regime,
                     const std::vector<augment::TrainExample>& train, const std::vector<augment::TrainExample>& val,
                     const TrainHParams& hp, const fs::path& run_dir, const std::string& run_id);

ModelHandle vanilla_handle(const model::Checkpoint& base, const fs::path& base_path, const std::string& run_id,
                           std::uint64_t head_seed);

struct Prediction {
  eval::Predicted label = eval::Predicted::unparsed;
  std::string raw_output;
  std::optional<double> score;
};

// Read-only after construction; predict may be called concurrently.
class Predictor {
 public:
  explicit Predictor(const ModelHandle& handle);
  explicit Predictor(model::Checkpoint ckpt);

  Prediction predict(std::string_view input_text) const;
  const model::Checkpoint& checkpoint() const { return ckpt_; }

 private:
  model::Checkpoint ckpt_;
};

// Seeds an untrained 2-way head on an encoder checkpoint.
void attach_classifier(model::Checkpoint& ckpt, std::uint64_t seed);

// SENTILAB_DEVICE; only "cpu" is available, anything else warns.
std::string device();

}  // namespace sentilab::trainer
