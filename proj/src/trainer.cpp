#include "sentilab/trainer.hpp"

#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

#include "sentilab/csv.hpp"
#include "sentilab/errors.hpp"
#include "sentilab/log.hpp"
#include "sentilab/text.hpp"

namespace sentilab::trainer {

namespace {

using Params = tinylm::Params<double>;
using Vec = tinylm::Vector<double>;

constexpr int kDecodeSteps = 8;

double example_loss(const model::Checkpoint& c, const EncodedExample& e, Params* grad) {
  const auto trace = tinylm::encode<double>(c.params, e.tokens);
  double loss = 0.0;
  Vec dh;
  if (c.dims.classifier) {
    if (!grad) {
      const double p = std::clamp(tinylm::classify<double>(c.params, trace.output()), kProbEpsilon, 1.0 - kProbEpsilon);
      return e.label == 1 ? -std::log(p) : -std::log(1.0 - p);
    }
    dh = tinylm::classifier_backward<double>(c.params, trace.output(), e.label, *grad, &loss, kProbEpsilon);
  } else {
    if (!grad) return tinylm::decoder_loss<double>(c.params, trace.output(), e.targets);
    dh = tinylm::decoder_backward<double>(c.params, trace.output(), e.targets, *grad, &loss);
  }
  tinylm::encode_backward<double>(c.params, trace, std::move(dh), *grad);
  return loss;
}

Params zeros_like(const Params& p) {
  Params g = p;
  tinylm::set_zero(g);
  return g;
}

std::optional<fs::path> opt_path(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return fs::path(j.at(key).get<std::string>());
}

}  // namespace

std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::vanilla: return "vanilla";
    case Regime::sft: return "sft";
    case Regime::it: return "it";
  }
  return "vanilla";
}

Regime regime_from_string(std::string_view s) {
  if (s == "vanilla") return Regime::vanilla;
  if (s == "sft") return Regime::sft;
  if (s == "it") return Regime::it;
  throw ParseError("unknown regime: " + std::string(s));
}

void TrainHParams::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw PreconditionError("learning_rate must be > 0");
  if (epochs < 1) throw PreconditionError("epochs must be >= 1");
  if (batch_size < 1) throw PreconditionError("batch_size must be >= 1");
  if (optimizer != "adam") throw PreconditionError("unsupported optimizer: " + optimizer);
  if (freeze_layers < 0) throw PreconditionError("freeze_layers must be >= 0");
}

Json TrainHParams::to_json() const {
  return {{"learning_rate", learning_rate}, {"batch_size", batch_size},   {"epochs", epochs},
          {"seed", seed},                   {"optimizer", optimizer},     {"freeze_layers", freeze_layers},
          {"select_best", select_best},     {"log_every", log_every}};
}

TrainHParams TrainHParams::from_json(const Json& j) {
  TrainHParams h;
  h.learning_rate = j.value("learning_rate", h.learning_rate);
  h.batch_size = j.value("batch_size", h.batch_size);
  h.epochs = j.value("epochs", h.epochs);
  h.seed = j.value("seed", h.seed);
  h.optimizer = j.value("optimizer", h.optimizer);
  h.freeze_layers = j.value("freeze_layers", h.freeze_layers);
  h.select_best = j.value("select_best", h.select_best);
  h.log_every = j.value("log_every", h.log_every);
  return h;
}

Json ModelHandle::to_json() const {
  Json log = Json::array();
  for (const auto& r : train_log) log.push_back({r.epoch, r.step, r.loss, r.split});
  return {{"run_id", run_id},
          {"spec", spec.to_json()},
          {"regime", to_string(regime)},
          {"base_checkpoint", base_checkpoint.string()},
          {"weights_path", weights_path ? Json(weights_path->string()) : Json(nullptr)},
          {"head_seed", head_seed},
          {"truncated_inputs", truncated_inputs},
          {"best_epoch", best_epoch ? Json(*best_epoch) : Json(nullptr)},
          {"training_sources", training_sources},
          {"train_log", log}};
}

ModelHandle ModelHandle::from_json(const Json& j) {
  ModelHandle h;
  h.run_id = j.at("run_id").get<std::string>();
  h.spec = model::ModelSpec::from_json(j.at("spec"));
  h.regime = regime_from_string(j.at("regime").get<std::string>());
  h.base_checkpoint = j.at("base_checkpoint").get<std::string>();
  h.weights_path = opt_path(j, "weights_path");
  h.head_seed = j.value("head_seed", std::uint64_t{0});
  h.truncated_inputs = j.value("truncated_inputs", std::size_t{0});
  if (j.contains("best_epoch") && !j.at("best_epoch").is_null()) h.best_epoch = j.at("best_epoch").get<std::size_t>();
  h.training_sources = j.value("training_sources", std::vector<std::string>{});
  for (const auto& r : j.value("train_log", Json::array())) {
    h.train_log.push_back({r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>(), r.at(2).get<double>(),
                           r.at(3).get<std::string>()});
  }
  if (h.regime == Regime::vanilla && h.weights_path) throw ParseError("vanilla handle must not carry weights");
  return h;
}

std::string train_log_csv(const std::vector<LogRow>& rows) {
  std::string out = "epoch,step,loss,split\n";
  for (const auto& r : rows) {
    std::ostringstream loss;
    loss.precision(17);
    loss << r.loss;
    out += csv::join({std::to_string(r.epoch), std::to_string(r.step), loss.str(), r.split});
    out += '\n';
  }
  return out;
}

void ModelHandle::save(const fs::path& run_dir) const {
  fs::create_directories(run_dir);
  write_file_atomic(run_dir / "train_log.csv", train_log_csv(train_log));
  write_file_atomic(run_dir / "handle.json", to_json().dump(2) + "\n");
}

ModelHandle ModelHandle::load(const fs::path& run_dir) {
  const fs::path p = run_dir / "handle.json";
  if (!fs::exists(p)) throw NotFoundError("no model handle in " + run_dir.string());
  return from_json(read_json(p));
}

double loss_batch(std::span<const double> probabilities, std::span<const int> targets, double eps) {
  if (probabilities.size() != targets.size()) {
    throw PreconditionError("loss_batch: " + std::to_string(probabilities.size()) + " predictions vs " +
                            std::to_string(targets.size()) + " targets");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] != 0 && targets[i] != 1) throw PreconditionError("loss_batch: targets must be 0 or 1");
    const double p = std::clamp(probabilities[i], eps, 1.0 - eps);
    total -= targets[i] * std::log(p) + (1 - targets[i]) * std::log(1.0 - p);
  }
  return total;
}

EncodedExample encode_example(const model::Checkpoint& ckpt, std::string_view input, std::string_view target,
                              EncodeStats* stats) {
  EncodedExample e;
  auto enc = ckpt.vocab.encode(input, ckpt.spec.max_input_tokens);
  if (enc.truncated && stats) ++stats->truncated;
  e.tokens = std::move(enc.ids);
  if (ckpt.dims.classifier) {
    e.label = augment::label_for_target(target) == Label::positive ? 1 : 0;
  } else {
    for (const auto& w : text::word_tokens(target)) {
      const int id = ckpt.target_id(w);
      if (id < 0) throw TrainingError("target word '" + w + "' is outside the decoder vocabulary");
      e.targets.push_back(id);
    }
    if (e.targets.empty()) throw TrainingError("empty target text");
    e.targets.push_back(ckpt.target_id(model::kEos));
  }
  return e;
}

double mean_loss(const model::Checkpoint& ckpt, std::span<const EncodedExample> data) {
  if (data.empty()) return 0.0;
  double total = 0.0;
  for (const auto& e : data) total += example_loss(ckpt, e, nullptr);
  return total / static_cast<double>(data.size());
}

FitResult fit(model::Checkpoint& ckpt, std::span<const EncodedExample> train, std::span<const EncodedExample> val,
              const TrainHParams& hp) {
  hp.validate();
  if (train.empty()) throw PreconditionError("finetune: empty training set");
  if (hp.freeze_layers > 0) {
    log::warn("freezing " + std::to_string(hp.freeze_layers) +
              " lower parameter groups; heavy freezing usually costs accuracy");
  }
  FitResult result;
  tinylm::Adam<double> adam(ckpt.params, hp.learning_rate, hp.freeze_layers);
  Params grad = zeros_like(ckpt.params);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::optional<Params> best;
  double best_val = INFINITY;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
    Rng rng(derive_seed(hp.seed, epoch));
    rng.shuffle(order);
    double window = 0.0;
    std::size_t window_n = 0;
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      const std::size_t end = std::min(order.size(), start + hp.batch_size);
      tinylm::set_zero(grad);
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const double l = example_loss(ckpt, train[order[k]], &grad);
        if (!std::isfinite(l)) {
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(step + 1) + ", example " + std::to_string(order[k]) +
                              " (learning rate " + std::to_string(hp.learning_rate) + ")");
        }
        batch_loss += l;
      }
      adam.step(ckpt.params, grad, 1.0 / static_cast<double>(end - start));
      ++step;
      window += batch_loss / static_cast<double>(end - start);
      ++window_n;
      if (window_n == hp.log_every || end == order.size()) {
        result.log.push_back({epoch, step, window / static_cast<double>(window_n), "train"});
        window = 0.0;
        window_n = 0;
      }
    }
    if (!val.empty()) {
      const double v = mean_loss(ckpt, val);
      if (!std::isfinite(v)) throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
      result.log.push_back({epoch, step, v, "val"});
      if (hp.select_best && v < best_val) {
        best_val = v;
        best = ckpt.params;
        result.best_epoch = epoch;
      }
    }
  }
  if (best) ckpt.params = std::move(*best);
  return result;
}

void attach_classifier(model::Checkpoint& ckpt, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x68656164));
  tinylm::init_classifier<double>(ckpt.params, ckpt.dims.hidden, rng);
  ckpt.dims.classifier = true;
}

namespace {

model::Checkpoint prepare(const model::Checkpoint& base, std::uint64_t seed) {
  model::Checkpoint c = base;
  if (c.spec.arch == model::Arch::encoder_classifier && !c.dims.classifier) attach_classifier(c, seed);
  return c;
}

}  // namespace

ModelHandle finetune(const model::Checkpoint& base, const fs::path& base_path, Regime regime,
                     const std::vector<augment::TrainExample>& train, const std::vector<augment::TrainExample>& val,
                     const TrainHParams& hp, const fs::path& run_dir, const std::string& run_id) {
  if (regime == Regime::vanilla) throw PreconditionError("finetune: vanilla models are not trained");
  hp.validate();
  if (train.empty()) throw PreconditionError("finetune: empty training set");
  const augment::Format want = regime == Regime::it ? augment::Format::it : augment::Format::sft;
  auto check = [&](const std::vector<augment::TrainExample>& xs, const char* which) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (xs[i].format != want) {
        throw PreconditionError(std::string("finetune: ") + which + " example " + std::to_string(i) + " is " +
                                std::string(augment::to_string(xs[i].format)) + ", regime expects " +
                                std::string(augment::to_string(want)));
      }
    }
  };
  check(train, "train");
  check(val, "validation");
  device();

  model::Checkpoint ckpt = prepare(base, hp.seed);
  EncodeStats stats;
  std::vector<EncodedExample> tr, va;
  tr.reserve(train.size());
  for (const auto& e : train) tr.push_back(encode_example(ckpt, e.input_text, e.target_text, &stats));
  for (const auto& e : val) va.push_back(encode_example(ckpt, e.input_text, e.target_text, &stats));
  if (stats.truncated) {
    log::warn(std::to_string(stats.truncated) + " inputs truncated to " + std::to_string(ckpt.spec.max_input_tokens) +
              " tokens");
  }
  FitResult fr = fit(ckpt, tr, va, hp);

  ModelHandle h;
  h.run_id = run_id;
  h.spec = ckpt.spec;
  h.regime = regime;
  h.base_checkpoint = base_path;
  h.train_log = std::move(fr.log);
  h.best_epoch = fr.best_epoch;
  h.truncated_inputs = stats.truncated;
  std::set<std::string> sources;
  for (const auto* xs : {&train, &val}) {
    for (const auto& e : *xs) sources.insert(e.source_id.substr(0, e.source_id.find(':')));
  }
  h.training_sources.assign(sources.begin(), sources.end());
  fs::create_directories(run_dir);
  ckpt.meta["run_id"] = run_id;
  ckpt.meta["regime"] = std::string(to_string(regime));
  ckpt.meta["hparams"] = hp.to_json();
  ckpt.save(run_dir / "weights.ckpt");
  h.weights_path = run_dir / "weights.ckpt";
  write_file_atomic(run_dir / "config.json",
                    Json{{"spec", ckpt.spec.to_json()}, {"regime", to_string(regime)}, {"hparams", hp.to_json()},
                         {"train_examples", train.size()}, {"val_examples", val.size()}, {"device", device()}}
                            .dump(2) + "\n");
  h.save(run_dir);
  return h;
}

ModelHandle vanilla_handle(const model::Checkpoint& base, const fs::path& base_path, const std::string& run_id,
                           std::uint64_t head_seed) {
  ModelHandle h;
  h.run_id = run_id;
  h.spec = base.spec;
  h.regime = Regime::vanilla;
  h.base_checkpoint = base_path;
  h.head_seed = head_seed;
  return h;
}

Predictor::Predictor(const ModelHandle& handle)
    : ckpt_(model::Checkpoint::load(handle.weights_path ? *handle.weights_path : handle.base_checkpoint)) {
  if (ckpt_.spec.arch == model::Arch::encoder_classifier && !ckpt_.dims.classifier) {
    attach_classifier(ckpt_, handle.head_seed);
  }
}

Predictor::Predictor(model::Checkpoint ckpt) : ckpt_(std::move(ckpt)) {
  if (ckpt_.spec.arch == model::Arch::encoder_classifier && !ckpt_.dims.classifier) attach_classifier(ckpt_, 0);
}

Prediction Predictor::predict(std::string_view input_text) const {
  const auto enc = ckpt_.vocab.encode(input_text, ckpt_.spec.max_input_tokens);
  const auto trace = tinylm::encode<double>(ckpt_.params, enc.ids);
  Prediction out;
  if (ckpt_.dims.classifier) {
    const double p = tinylm::classify<double>(ckpt_.params, trace.output());
    out.label = p > 0.5 ? eval::Predicted::positive : eval::Predicted::negative;
    out.raw_output = std::string(p > 0.5 ? augment::kPositiveTarget : augment::kNegativeTarget);
    out.score = p;
    return out;
  }
  const auto dec = tinylm::greedy_decode<double>(ckpt_.params, trace.output(), ckpt_.target_id(model::kEos),
                                                 kDecodeSteps, ckpt_.target_id("positive"),
                                                 ckpt_.target_id("negative"));
  std::vector<std::string> words;
  for (int w : dec.words) words.push_back(ckpt_.targets[static_cast<std::size_t>(w)]);
  out.raw_output = text::join(words, " ");
  out.label = eval::parse_label(out.raw_output);
  return out;
}

std::string device() {
  const char* env = std::getenv("SENTILAB_DEVICE");
  const std::string want = env && *env ? env : "cpu";
  if (want != "cpu") {
    static bool warned = false;
    if (!warned) log::warn("device '" + want + "' is not available in this build; using cpu");
    warned = true;
  }
  return "cpu";
}

}  // namespace sentilab::trainer
