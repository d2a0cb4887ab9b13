#include "sentilab/pretrain.hpp"

#include "sentilab/errors.hpp"
#include "sentilab/log.hpp"
#include "sentilab/trainer.hpp"

namespace sentilab::pretrain {

model::Checkpoint build_checkpoint(const model::RegistryEntry& entry, const synth::WorldConfig& world) {
  model::Checkpoint c;
  c.spec = entry.spec;
  std::vector<std::string> words{std::string(model::Vocabulary::kEmpty)};
  for (auto& w : synth::lexicon()) words.push_back(std::move(w));
  c.vocab = model::Vocabulary(std::move(words), 32);
  c.targets = synth::target_words();
  c.dims = entry.dims;
  c.dims.vocab = c.vocab.size();
  c.dims.targets = static_cast<int>(c.targets.size());
  c.dims.classifier = false;
  c.params = tinylm::Params<double>::zeros(c.dims);
  Rng rng(derive_seed(entry.pretrain_seed, 0x696e6974));
  tinylm::init_params<double>(c.params, rng);

  const auto mixture = synth::pretraining_mixture(static_cast<std::size_t>(entry.pretrain_examples),
                                                  entry.pretrain_seed, world);
  std::vector<trainer::EncodedExample> data;
  data.reserve(mixture.size());
  for (const auto& pair : mixture) data.push_back(trainer::encode_example(c, pair.input, pair.target));

  trainer::TrainHParams hp;
  hp.learning_rate = entry.pretrain_lr;
  hp.batch_size = 16;
  hp.epochs = static_cast<std::size_t>(entry.pretrain_epochs);
  hp.seed = entry.pretrain_seed;
  hp.select_best = false;
  hp.log_every = 100;
  const auto fr = trainer::fit(c, data, {}, hp);

  c.meta["pretrain"] = {{"examples", entry.pretrain_examples},
                        {"epochs", entry.pretrain_epochs},
                        {"learning_rate", entry.pretrain_lr},
                        {"seed", entry.pretrain_seed},
                        {"world_seed", world.seed},
                        {"final_loss", fr.log.empty() ? 0.0 : fr.log.back().loss}};
  if (entry.spec.arch == model::Arch::encoder_classifier) {
    c.params.dec_w.resize(0, 0);
    c.params.dec_emb.resize(0, 0);
    c.params.dec_b.resize(0);
    c.params.out_w.resize(0, 0);
    c.params.out_b.resize(0);
    c.dims.targets = 0;
    c.targets.clear();
  }
  return c;
}

fs::path ensure_checkpoint(const model::RegistryEntry& entry, const fs::path& dir, const synth::WorldConfig& world) {
  const fs::path path = dir / entry.file;
  if (fs::exists(path)) return path;
  log::info("building checkpoint " + entry.spec.checkpoint_id + " into " + path.string());
  fs::create_directories(dir);
  build_checkpoint(entry, world).save(path);
  return path;
}

fs::path resolve(const model::Registry& registry, std::string_view checkpoint_id) {
  return ensure_checkpoint(registry.find(checkpoint_id), model::checkpoint_dir());
}

}  // namespace sentilab::pretrain
