#include "sentilab/corpus.hpp"

#include <algorithm>
#include <cmath>

#include "sentilab/csv.hpp"
#include "sentilab/errors.hpp"
#include "sentilab/rng.hpp"
#include "sentilab/text.hpp"

namespace sentilab {

std::string_view to_string(Label label) {
  switch (label) {
    case Label::positive: return "positive";
    case Label::negative: return "negative";
    case Label::neutral: return "neutral";
  }
  return "neutral";
}

Label label_from_string(std::string_view name) {
  if (name == "positive") return Label::positive;
  if (name == "negative") return Label::negative;
  if (name == "neutral") return Label::neutral;
  throw ParseError("unknown label: " + std::string(name));
}

CorpusFormat corpus_format_from_string(std::string_view name) {
  if (name == "csv") return CorpusFormat::csv;
  if (name == "jsonl") return CorpusFormat::jsonl;
  throw ParseError("unknown corpus format: " + std::string(name));
}

CorpusSchema CorpusSchema::from_json(const Json& j, const fs::path& base_dir) {
  CorpusSchema s;
  s.source = j.at("source").get<std::string>();
  s.format = corpus_format_from_string(j.value("format", std::string("csv")));
  s.text_column = j.value("text_column", s.text_column);
  s.label_column = j.value("label_column", s.label_column);
  for (const auto& [raw, mapped] : j.at("label_map").items()) {
    s.label_map[raw] = label_from_string(mapped.get<std::string>());
  }
  if (j.contains("data")) {
    fs::path p = j.at("data").get<std::string>();
    s.data = p.is_absolute() ? p : base_dir / p;
  }
  if (s.source.empty()) throw ParseError("schema source must be non-empty");
  return s;
}

CorpusSchema CorpusSchema::load(const fs::path& schema_file) {
  return from_json(read_json(schema_file), schema_file.parent_path());
}

Json CorpusSchema::to_json() const {
  Json map = Json::object();
  for (const auto& [k, v] : label_map) map[k] = to_string(v);
  Json j = {{"source", source},
            {"format", format == CorpusFormat::csv ? "csv" : "jsonl"},
            {"text_column", text_column},
            {"label_column", label_column},
            {"label_map", map}};
  if (data) j["data"] = data->string();
  return j;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

Label map_label(const CorpusSchema& schema, const std::string& value, std::size_t row) {
  auto it = schema.label_map.find(value);
  if (it == schema.label_map.end()) it = schema.label_map.find(trim(value));
  if (it == schema.label_map.end()) {
    throw ParseError(schema.source + ": unmappable label value '" + value + "' at row " +
                     std::to_string(row));
  }
  return it->second;
}

std::string json_scalar(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return {};
  return v.dump();
}

void add_row(LoadResult& out, const CorpusSchema& schema, std::size_t row, std::string text,
             const std::string& label_value) {
  ++out.report.rows_read;
  if (trim(text).empty()) {
    ++out.report.skipped_empty;
    out.report.skipped_rows.push_back(row);
    return;
  }
  SentimentExample e;
  e.id = schema.source + ":" + std::to_string(row);
  e.raw_text = std::move(text);
  e.label = map_label(schema, label_value, row);
  e.source = schema.source;
  out.corpus.push_back(std::move(e));
  ++out.report.loaded;
}

}  // namespace

LoadResult load_corpus(const fs::path& path, CorpusFormat format, const CorpusSchema& schema) {
  if (!fs::exists(path)) throw NotFoundError("corpus file not found: " + path.string());
  LoadResult out;
  if (format == CorpusFormat::csv) {
    const auto rows = csv::parse(read_file(path));
    if (rows.empty()) throw ParseError(path.string() + ": missing CSV header row");
    const auto& header = rows.front();
    const auto col = [&](const std::string& name) {
      const auto it = std::find(header.begin(), header.end(), name);
      if (it == header.end()) throw ParseError(path.string() + ": missing column '" + name + "'");
      return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t text_col = col(schema.text_column);
    const std::size_t label_col = col(schema.label_column);
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& row = rows[r];
      std::string text = text_col < row.size() ? row[text_col] : std::string();
      std::string label = label_col < row.size() ? row[label_col] : std::string();
      add_row(out, schema, r, std::move(text), label);
    }
  } else {
    const auto objects = read_jsonl(path);
    for (std::size_t r = 0; r < objects.size(); ++r) {
      const auto& obj = objects[r];
      const std::string text = obj.contains(schema.text_column) ? json_scalar(obj[schema.text_column]) : "";
      const std::string label = obj.contains(schema.label_column) ? json_scalar(obj[schema.label_column]) : "";
      add_row(out, schema, r + 1, text, label);
    }
  }
  return out;
}

LoadResult load_corpus(const CorpusSchema& schema) {
  if (!schema.data) throw PreconditionError("schema for '" + schema.source + "' declares no data path");
  return load_corpus(*schema.data, schema.format, schema);
}

namespace {

bool is_mention_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

std::string strip_url(std::string token) {
  static constexpr std::string_view kStarts[] = {"http://", "https://", "www."};
  std::size_t cut = std::string::npos;
  for (std::size_t i = 0; i < token.size() && cut == std::string::npos; ++i) {
    for (auto start : kStarts) {
      if (text::starts_with_icase(std::string_view(token).substr(i), start)) {
        cut = i;
        break;
      }
    }
  }
  if (cut != std::string::npos) token.resize(cut);
  return token;
}

std::string replace_mentions(const std::string& token) {
  std::string out;
  std::size_t i = 0;
  while (i < token.size()) {
    if (token[i] == '@' && i + 1 < token.size() && is_mention_char(token[i + 1])) {
      std::size_t j = i + 1;
      while (j < token.size() && is_mention_char(token[j])) ++j;
      out += kMentionPlaceholder;
      i = j;
    } else {
      out += token[i++];
    }
  }
  return out;
}

}  // namespace

std::string clean_text(std::string_view raw) {
  std::u32string cps;
  for (char32_t c : text::utf8_decode(raw)) {
    if (text::is_unicode_space(c)) {
      cps.push_back(U' ');
    } else if (!text::is_control(c)) {
      cps.push_back(c);
    }
  }
  const std::string flat = text::utf8_encode(cps);

  std::vector<std::string> kept;
  std::size_t i = 0;
  while (i < flat.size()) {
    while (i < flat.size() && flat[i] == ' ') ++i;
    std::size_t j = i;
    while (j < flat.size() && flat[j] != ' ') ++j;
    if (j > i) {
      std::string token = replace_mentions(strip_url(flat.substr(i, j - i)));
      if (!token.empty()) kept.push_back(std::move(token));
    }
    i = j;
  }
  return text::join(kept, " ");
}

Corpus clean_corpus(Corpus corpus) {
  for (auto& e : corpus) e.clean_text = clean_text(e.raw_text);
  return corpus;
}

Corpus filter_non_neutral(const Corpus& corpus) {
  Corpus out;
  std::copy_if(corpus.begin(), corpus.end(), std::back_inserter(out),
               [](const SentimentExample& e) { return e.label != Label::neutral; });
  return out;
}

namespace {

std::map<Label, std::vector<std::size_t>> indices_by_label(const Corpus& corpus) {
  std::map<Label, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < corpus.size(); ++i) by_label[corpus[i].label].push_back(i);
  return by_label;
}

}  // namespace

Split split(const Corpus& corpus, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw PreconditionError("train_fraction must lie strictly between 0 and 1");
  }
  if (corpus.size() < 2) throw PreconditionError("split needs at least 2 examples");

  std::vector<bool> to_train(corpus.size(), false);
  for (auto& [label, idx] : indices_by_label(corpus)) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(label)));
    rng.shuffle(idx);
    const auto k = static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * train_fraction));
    for (std::size_t i = 0; i < k; ++i) to_train[idx[i]] = true;
  }
  Split out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    (to_train[i] ? out.train : out.validation).push_back(corpus[i]);
  }
  return out;
}

Corpus subsample(const Corpus& corpus, std::size_t n, std::uint64_t seed, bool balanced) {
  if (n > corpus.size()) {
    throw PreconditionError("subsample of " + std::to_string(n) + " exceeds corpus size " +
                            std::to_string(corpus.size()));
  }
  std::vector<bool> chosen(corpus.size(), false);
  if (!balanced) {
    std::vector<std::size_t> idx(corpus.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed);
    rng.shuffle(idx);
    for (std::size_t i = 0; i < n; ++i) chosen[idx[i]] = true;
  } else {
    auto by_label = indices_by_label(corpus);
    auto& pos = by_label[Label::positive];
    auto& neg = by_label[Label::negative];
    const std::size_t big = (n + 1) / 2;
    const std::size_t small = n / 2;
    const bool pos_is_big = pos.size() >= neg.size();
    const std::size_t want_pos = pos_is_big ? big : small;
    const std::size_t want_neg = pos_is_big ? small : big;
    if (want_pos > pos.size() || want_neg > neg.size()) {
      throw PreconditionError("balanced subsample of " + std::to_string(n) + " needs " +
                              std::to_string(want_pos) + " positive and " + std::to_string(want_neg) +
                              " negative examples");
    }
    Rng rng(seed);
    rng.shuffle(pos);
    rng.shuffle(neg);
    for (std::size_t i = 0; i < want_pos; ++i) chosen[pos[i]] = true;
    for (std::size_t i = 0; i < want_neg; ++i) chosen[neg[i]] = true;
  }
  Corpus out;
  out.reserve(n);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (chosen[i]) out.push_back(corpus[i]);
  }
  return out;
}

CorpusStats stats(const Corpus& corpus) {
  CorpusStats s;
  for (const auto& e : corpus) {
    switch (e.label) {
      case Label::positive: ++s.positive; break;
      case Label::negative: ++s.negative; break;
      case Label::neutral: ++s.neutral_excluded; continue;
    }
    ++s.per_source[e.source];
  }
  s.total = s.positive + s.negative;
  if (s.total > 0) {
    s.positive_pct = static_cast<double>(s.positive) / static_cast<double>(s.total);
    s.negative_pct = static_cast<double>(s.negative) / static_cast<double>(s.total);
  }
  return s;
}

Json CorpusStats::to_json() const {
  return {{"total", total},
          {"positive", positive},
          {"negative", negative},
          {"positive_pct", positive_pct},
          {"negative_pct", negative_pct},
          {"neutral_excluded", neutral_excluded},
          {"per_source", per_source}};
}

Json example_to_json(const SentimentExample& e) {
  return {{"id", e.id},
          {"raw_text", e.raw_text},
          {"clean_text", e.clean_text},
          {"label", to_string(e.label)},
          {"source", e.source}};
}

SentimentExample example_from_json(const Json& j) {
  SentimentExample e;
  e.id = j.at("id").get<std::string>();
  e.raw_text = j.at("raw_text").get<std::string>();
  e.clean_text = j.value("clean_text", std::string());
  e.label = label_from_string(j.at("label").get<std::string>());
  e.source = j.at("source").get<std::string>();
  return e;
}

void save_canonical(const fs::path& path, const Corpus& corpus) {
  std::vector<Json> rows;
  rows.reserve(corpus.size());
  for (const auto& e : corpus) rows.push_back(example_to_json(e));
  write_jsonl_atomic(path, rows);
}

Corpus load_canonical(const fs::path& path) {
  Corpus out;
  for (const auto& j : read_jsonl(path)) out.push_back(example_from_json(j));
  return out;
}

}  // namespace sentilab
