#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sentilab/io.hpp"

namespace sentilab {

enum class Label { negative = 0, positive = 1, neutral = 2 };

std::string_view to_string(Label label);
Label label_from_string(std::string_view name);

struct SentimentExample {
  std::string id;
  std::string raw_text;
  std::string clean_text;
  Label label = Label::neutral;
  std::string source;

  friend bool operator==(const SentimentExample&, const SentimentExample&) = default;
};

using Corpus = std::vector<SentimentExample>;

enum class CorpusFormat { csv, jsonl };

CorpusFormat corpus_format_from_string(std::string_view name);

// Declares how one dataset file maps onto SentimentExample. Label encodings
// differ between datasets, so the value map lives here rather than in code.
struct CorpusSchema {
  std::string source;
  CorpusFormat format = CorpusFormat::csv;
  std::string text_column = "text";
  std::string label_column = "label";
  std::map<std::string, Label> label_map;
  // Optional data path, resolved relative to the schema file.
  std::optional<fs::path> data;

  static CorpusSchema from_json(const Json& j, const fs::path& base_dir = {});
  static CorpusSchema load(const fs::path& schema_file);
  Json to_json() const;
};

struct LoadReport {
  std::size_t rows_read = 0;
  std::size_t loaded = 0;
  std::size_t skipped_empty = 0;
  std::vector<std::size_t> skipped_rows;  // 1-based data row numbers
};

struct LoadResult {
  Corpus corpus;
  LoadReport report;
};

// Reads a dataset file. Ids are `<source>:<row>` with 1-based data row
// numbers; rows with empty text are skipped and counted in the report.
LoadResult load_corpus(const fs::path& path, CorpusFormat format, const CorpusSchema& schema);
LoadResult load_corpus(const CorpusSchema& schema);

// Normalizes social-media text: drops URLs and control characters, replaces
// @mentions with `@USER`, collapses whitespace. Case, cashtags, hashtags
// and emoji are preserved. Idempotent.
std::string clean_text(std::string_view raw);

inline constexpr std::string_view kMentionPlaceholder = "@USER";

Corpus clean_corpus(Corpus corpus);

Corpus filter_non_neutral(const Corpus& corpus);

struct Split {
  Corpus train;
  Corpus validation;
};

// Stratified by label; both halves keep the input order.
Split split(const Corpus& corpus, double train_fraction, std::uint64_t seed);

// With `balanced`, the larger class contributes ceil(n/2) and the other
// floor(n/2). Result keeps the input order.
Corpus subsample(const Corpus& corpus, std::size_t n, std::uint64_t seed, bool balanced);

struct CorpusStats {
  std::size_t total = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
  double positive_pct = 0.0;
  double negative_pct = 0.0;
  std::size_t neutral_excluded = 0;
  std::map<std::string, std::size_t> per_source;

  Json to_json() const;
};

// Neutral rows are not part of `total`; they are reported separately.
CorpusStats stats(const Corpus& corpus);

Json example_to_json(const SentimentExample& e);
SentimentExample example_from_json(const Json& j);

// Canonical JSONL with fields id, raw_text, clean_text, label, source.
void save_canonical(const fs::path& path, const Corpus& corpus);
Corpus load_canonical(const fs::path& path);

}  // namespace sentilab
