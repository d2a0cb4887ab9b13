#include "sentilab/model.hpp"

#include <bit>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include "sentilab/errors.hpp"
#include "sentilab/text.hpp"

namespace sentilab::model {

namespace {

constexpr std::string_view kMagic = "SLCKPT1\n";

Json dims_to_json(const tinylm::Dims& d) {
  return {{"vocab", d.vocab},     {"embed", d.embed},     {"hidden", d.hidden},        {"layers", d.layers},
          {"decoder", d.decoder}, {"targets", d.targets}, {"classifier", d.classifier}};
}

tinylm::Dims dims_from_json(const Json& j) {
  tinylm::Dims d;
  d.vocab = j.value("vocab", 0);
  d.embed = j.value("embed", d.embed);
  d.hidden = j.value("hidden", d.hidden);
  d.layers = j.value("layers", d.layers);
  d.decoder = j.value("decoder", d.decoder);
  d.targets = j.value("targets", 0);
  d.classifier = j.value("classifier", false);
  return d;
}

}  // namespace

std::string_view to_string(Arch a) { return a == Arch::seq2seq ? "seq2seq" : "encoder_classifier"; }

Arch arch_from_string(std::string_view s) {
  if (s == "seq2seq") return Arch::seq2seq;
  if (s == "encoder_classifier") return Arch::encoder_classifier;
  throw ParseError("unknown arch: " + std::string(s));
}

void ModelSpec::validate() const {
  if (checkpoint_id.empty()) throw PreconditionError("model spec: empty checkpoint_id");
  if (max_input_tokens < 16) throw PreconditionError("model spec: max_input_tokens must be >= 16");
}

Json ModelSpec::to_json() const {
  return {{"checkpoint_id", checkpoint_id},
          {"arch", to_string(arch)},
          {"max_input_tokens", max_input_tokens},
          {"params_nominal", params_nominal},
          {"reference_checkpoint", reference_checkpoint}};
}

ModelSpec ModelSpec::from_json(const Json& j) {
  ModelSpec s;
  s.checkpoint_id = j.at("checkpoint_id").get<std::string>();
  s.arch = arch_from_string(j.at("arch").get<std::string>());
  s.max_input_tokens = j.value("max_input_tokens", s.max_input_tokens);
  s.params_nominal = j.value("params_nominal", std::size_t{0});
  s.reference_checkpoint = j.value("reference_checkpoint", std::string());
  s.validate();
  return s;
}

Vocabulary::Vocabulary(std::vector<std::string> words, int buckets) : words_(std::move(words)), buckets_(buckets) {
  if (buckets_ < 1) throw PreconditionError("vocabulary needs at least one hash bucket");
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<int>(i)).second) {
      throw PreconditionError("vocabulary: duplicate word '" + words_[i] + "'");
    }
  }
}

std::optional<int> Vocabulary::find(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::id(std::string_view word) const {
  if (auto known = find(word)) return *known;
  return static_cast<int>(words_.size()) + static_cast<int>(fnv1a(word) % static_cast<std::uint64_t>(buckets_));
}

Vocabulary::Encoded Vocabulary::encode(std::string_view text, std::size_t max_tokens) const {
  Encoded out;
  const auto words = text::word_tokens(text);
  const std::size_t keep = std::min(words.size(), max_tokens);
  out.truncated = words.size() > max_tokens;
  out.ids.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.ids.push_back(id(words[i]));
  if (out.ids.empty()) out.ids.push_back(id(kEmpty));
  return out;
}

int Checkpoint::target_id(std::string_view word) const {
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] == word) return static_cast<int>(i);
  }
  return -1;
}

void Checkpoint::save(const fs::path& path) const {
  static_assert(std::endian::native == std::endian::little, "checkpoint format is little-endian");
  auto params_copy = params;
  Json tensors = Json::array();
  std::string blob;
  params_copy.for_each([&](const std::string& name, int, auto& m) {
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
    blob.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
  });
  Json header = {{"spec", spec.to_json()},
                 {"dims", dims_to_json(dims)},
                 {"vocab", vocab.words()},
                 {"buckets", vocab.buckets()},
                 {"targets", targets},
                 {"tensors", tensors},
                 {"meta", meta}};
  const std::string h = header.dump();
  std::string out(kMagic);
  const std::uint64_t len = h.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof len);
  out += h;
  out += blob;
  write_file_atomic(path, out);
}

Checkpoint Checkpoint::load(const fs::path& path) {
  if (!fs::exists(path)) throw NotFoundError("checkpoint not found: " + path.string());
  const std::string bytes = read_file(path);
  if (bytes.size() < kMagic.size() + 8 || bytes.compare(0, kMagic.size(), kMagic) != 0) {
    throw ParseError(path.string() + ": not a checkpoint file");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + kMagic.size(), sizeof len);
  std::size_t pos = kMagic.size() + sizeof len;
  if (pos + len > bytes.size()) throw ParseError(path.string() + ": truncated header");
  const Json header = Json::parse(bytes.substr(pos, len));
  pos += len;

  Checkpoint c;
  c.spec = ModelSpec::from_json(header.at("spec"));
  c.dims = dims_from_json(header.at("dims"));
  c.vocab = Vocabulary(header.at("vocab").get<std::vector<std::string>>(), header.at("buckets").get<int>());
  c.targets = header.at("targets").get<std::vector<std::string>>();
  c.meta = header.value("meta", Json::object());
  c.params = tinylm::Params<double>::zeros(c.dims);
  const Json& tensors = header.at("tensors");
  std::size_t k = 0;
  c.params.for_each([&](const std::string& name, int, auto& m) {
    if (k >= tensors.size() || tensors[k].at("name") != name) {
      throw ParseError(path.string() + ": tensor layout mismatch at " + name);
    }
    m.resize(tensors[k].at("rows").get<Eigen::Index>(), tensors[k].at("cols").get<Eigen::Index>());
    const std::size_t n = static_cast<std::size_t>(m.size()) * sizeof(double);
    if (pos + n > bytes.size()) throw ParseError(path.string() + ": truncated tensor " + name);
    std::memcpy(m.data(), bytes.data() + pos, n);
    pos += n;
    ++k;
  });
  if (k != tensors.size() || pos != bytes.size()) throw ParseError(path.string() + ": trailing tensor data");
  return c;
}

Registry Registry::load(const fs::path& path) {
  const Json j = read_json(path);
  Registry r;
  for (const auto& e : j.at("checkpoints")) {
    RegistryEntry entry;
    entry.spec = ModelSpec::from_json(e);
    entry.dims = dims_from_json(e.value("dims", Json::object()));
    entry.dims.classifier = false;
    const Json pre = e.value("pretrain", Json::object());
    entry.pretrain_examples = pre.value("examples", entry.pretrain_examples);
    entry.pretrain_epochs = pre.value("epochs", entry.pretrain_epochs);
    entry.pretrain_lr = pre.value("learning_rate", entry.pretrain_lr);
    entry.pretrain_seed = pre.value("seed", entry.pretrain_seed);
    entry.file = e.value("file", entry.spec.checkpoint_id + ".ckpt");
    r.entries_.push_back(std::move(entry));
  }
  return r;
}

Registry Registry::load_default() { return load(fs::path(SENTILAB_DATA_DIR) / "checkpoints.json"); }

const RegistryEntry& Registry::find(std::string_view checkpoint_id) const {
  for (const auto& e : entries_) {
    if (e.spec.checkpoint_id == checkpoint_id) return e;
  }
  throw NotFoundError("checkpoint not found in registry: " + std::string(checkpoint_id));
}

fs::path checkpoint_dir() {
  if (const char* env = std::getenv("SENTILAB_CHECKPOINT_DIR"); env && *env) return env;
  return fs::path("checkpoints");
}

}  // namespace sentilab::model
