#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sentilab/io.hpp"
#include "sentilab/tinylm.hpp"

namespace sentilab::model {

enum class Arch { encoder_classifier, seq2seq };

std::string_view to_string(Arch a);
Arch arch_from_string(std::string_view s);

struct ModelSpec {
  std::string checkpoint_id;
  Arch arch = Arch::seq2seq;
  std::size_t max_input_tokens = 64;
  std::size_t params_nominal = 0;
  // Published checkpoint this desk model stands in for; informational.
  std::string reference_checkpoint;

  void validate() const;
  Json to_json() const;
  static ModelSpec from_json(const Json& j);
  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// Word-level vocabulary. Known words map to their index; anything else
// lands in one of `buckets` hashed slots after the known words.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> words, int buckets);

  int size() const { return static_cast<int>(words_.size()) + buckets_; }
  int buckets() const { return buckets_; }
  const std::vector<std::string>& words() const { return words_; }
  std::optional<int> find(std::string_view word) const;
  int id(std::string_view word) const;

  struct Encoded {
    std::vector<int> ids;
    bool truncated = false;
  };
  // Keeps the first `max_tokens` tokens. Text without any word token
  // encodes to the reserved empty marker.
  Encoded encode(std::string_view text, std::size_t max_tokens) const;

  static constexpr std::string_view kEmpty = "<empty>";

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
  int buckets_ = 0;
};

struct Checkpoint {
  ModelSpec spec;
  tinylm::Dims dims;
  Vocabulary vocab;
  // Decoder output words; index 0 is <eos>. Empty for encoder checkpoints.
  std::vector<std::string> targets;
  tinylm::Params<double> params;
  Json meta = Json::object();

  int target_id(std::string_view word) const;
  void save(const fs::path& path) const;
  static Checkpoint load(const fs::path& path);
};

inline constexpr std::string_view kEos = "<eos>";

struct RegistryEntry {
  ModelSpec spec;
  tinylm::Dims dims;  // vocab/targets filled at build time
  int pretrain_examples = 20000;
  int pretrain_epochs = 4;
  double pretrain_lr = 3e-3;
  std::uint64_t pretrain_seed = 1;
  std::string file;  // file name inside the checkpoint directory
};

class Registry {
 public:
  static Registry load(const fs::path& path);
  static Registry load_default();  // data/checkpoints.json

  const RegistryEntry& find(std::string_view checkpoint_id) const;  // NotFoundError
  const std::vector<RegistryEntry>& entries() const { return entries_; }

 private:
  std::vector<RegistryEntry> entries_;
};

// SENTILAB_CHECKPOINT_DIR, else ./checkpoints.
fs::path checkpoint_dir();

}  // namespace sentilab::model
