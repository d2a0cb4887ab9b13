#pragma once

// Deterministic stand-in corpora for desk-scale runs. The generator mimics
// the shape of the crypto tweet datasets (sizes, label balance, noisy
// social-media surface, heterogeneous file encodings) and a pretraining
// mixture for the desk checkpoints.

#include <cstdint>
#include <string>
#include <vector>

#include "sentilab/corpus.hpp"
#include "sentilab/io.hpp"

namespace sentilab::synth {

struct WorldConfig {
  std::uint64_t seed = 20230815;
  double label_noise = 0.06;
  // Probability that a training-domain row carries a shortcut token tied
  // to its label, and to the opposite label.
  double shortcut_same = 0.6;
  double shortcut_opposite = 0.08;
  // Shortcut tokens in held-out data are label-independent.
  double shortcut_heldout = 0.15;
  // Share of sentiment cues drawn from crypto slang rather than general words.
  double slang_share_train = 0.6;
  double slang_share_heldout = 0.7;
  // Leading slice of each lexicon the training-domain data draws from.
  std::size_t train_general_words = 15;
  // Slang words the pretraining mixture has seen.
  std::size_t pretrain_slang_words = 5;
};

struct DatasetSpec {
  std::string source;
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::size_t neutral = 0;
  bool training_domain = false;
};

// neo (12,000 balanced), bitcoin (779/250), reddit (302/260 plus neutral
// rows), cryptocurrency (250/250).
std::vector<DatasetSpec> desk_datasets();

// Labeled raw rows, shuffled deterministically. ids follow load order.
Corpus generate(const DatasetSpec& spec, const WorldConfig& world);

// Writes each dataset in its own encoding plus a `<source>.schema.json`
// next to it. Returns the schema paths.
std::vector<fs::path> write_datasets(const fs::path& dir, const WorldConfig& world);

struct Seq2SeqPair {
  std::string input;
  std::string target;
};

// Multitask mixture: instructed sentiment, instructed topic, and bare text
// mapped to its topic.
std::vector<Seq2SeqPair> pretraining_mixture(std::size_t n, std::uint64_t seed, const WorldConfig& world);

// Every word the generator can produce, sorted. Feeds the tokenizer so
// shortcut and slang words are spelled known even when unseen in
// pretraining.
std::vector<std::string> lexicon();

// Decoder vocabulary for seq2seq checkpoints (index 0 is <eos>).
std::vector<std::string> target_words();

const std::vector<std::string>& sentiment_instructions();

}  // namespace sentilab::synth
