#include "sentilab/augment.hpp"

#include <cctype>
#include <set>

#include "sentilab/errors.hpp"
#include "sentilab/rng.hpp"

namespace sentilab::augment {

std::string_view to_string(Format f) { return f == Format::sft ? "sft" : "it"; }

Format format_from_string(std::string_view s) {
  if (s == "sft") return Format::sft;
  if (s == "it") return Format::it;
  throw ParseError("unknown render format: " + std::string(s));
}

Json to_json(const TrainExample& e) {
  return {{"input_text", e.input_text},
          {"target_text", e.target_text},
          {"format", to_string(e.format)},
          {"instruction_id", e.instruction_id ? Json(*e.instruction_id) : Json(nullptr)},
          {"source_id", e.source_id}};
}

TrainExample train_example_from_json(const Json& j) {
  TrainExample e;
  e.input_text = j.at("input_text").get<std::string>();
  e.target_text = j.at("target_text").get<std::string>();
  e.format = format_from_string(j.at("format").get<std::string>());
  if (j.contains("instruction_id") && !j["instruction_id"].is_null()) {
    e.instruction_id = j["instruction_id"].get<std::string>();
  }
  e.source_id = j.at("source_id").get<std::string>();
  if (e.target_text != kPositiveTarget && e.target_text != kNegativeTarget) {
    throw ParseError("target_text must be Positive or Negative, got: " + e.target_text);
  }
  if ((e.format == Format::it) != e.instruction_id.has_value()) {
    throw ParseError("instruction_id is required exactly for it-format examples");
  }
  return e;
}

std::string_view target_for(Label label) {
  switch (label) {
    case Label::positive: return kPositiveTarget;
    case Label::negative: return kNegativeTarget;
    case Label::neutral: break;
  }
  throw PreconditionError("neutral examples cannot be rendered");
}

Label label_for_target(std::string_view target) {
  if (target == kPositiveTarget) return Label::positive;
  if (target == kNegativeTarget) return Label::negative;
  throw ParseError("not a target string: " + std::string(target));
}

namespace {

void check_renderable(const SentimentExample& e) {
  if (e.label == Label::neutral) throw PreconditionError(e.id + ": neutral examples cannot be rendered");
  if (e.clean_text.empty()) throw PreconditionError(e.id + ": clean_text is empty (clean the corpus first)");
}

}  // namespace

TrainExample render_sft(const SentimentExample& example) {
  check_renderable(example);
  TrainExample t;
  t.input_text = example.clean_text;
  t.target_text = target_for(example.label);
  t.format = Format::sft;
  t.source_id = example.id;
  return t;
}

std::string render_it_input(std::string_view instruction, std::string_view clean_text, const ItLayout& layout) {
  std::string out;
  out.reserve(instruction.size() + layout.separator.size() + layout.marker.size() + clean_text.size());
  out.append(instruction).append(layout.separator).append(layout.marker).append(clean_text);
  return out;
}

TrainExample render_it(const SentimentExample& example, const forge::InstructionCandidate& instruction,
                       const ItLayout& layout) {
  if (instruction.human_decision != forge::Decision::accepted) {
    throw PreconditionError("instruction " + instruction.id + " is not accepted");
  }
  if (instruction.text.empty()) throw PreconditionError("instruction " + instruction.id + " has no text");
  check_renderable(example);
  TrainExample t;
  t.input_text = render_it_input(instruction.text, example.clean_text, layout);
  t.target_text = target_for(example.label);
  t.format = Format::it;
  t.instruction_id = instruction.id;
  t.source_id = example.id;
  return t;
}

std::optional<std::string> strip_it_prefix(std::string_view input, std::string_view instruction,
                                           const ItLayout& layout) {
  const std::size_t head = instruction.size() + layout.separator.size() + layout.marker.size();
  if (input.size() < head) return std::nullopt;
  if (input.substr(0, instruction.size()) != instruction) return std::nullopt;
  if (input.substr(instruction.size(), layout.separator.size()) != layout.separator) return std::nullopt;
  if (input.substr(instruction.size() + layout.separator.size(), layout.marker.size()) != layout.marker) {
    return std::nullopt;
  }
  return std::string(input.substr(head));
}

std::vector<TrainExample> augment_corpus(const Corpus& corpus, const forge::InstructionCandidate* instruction,
                                         const ItLayout& layout) {
  std::vector<TrainExample> out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    try {
      out.push_back(instruction ? render_it(corpus[i], *instruction, layout) : render_sft(corpus[i]));
    } catch (const PreconditionError& e) {
      throw PreconditionError("row " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

std::vector<TrainExample> augment_corpus_sampled(const Corpus& corpus,
                                                 const std::vector<forge::InstructionCandidate>& instructions,
                                                 std::uint64_t seed, const ItLayout& layout) {
  if (instructions.empty()) throw PreconditionError("pool sampling needs at least one instruction");
  Rng rng(seed);
  std::vector<TrainExample> out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    try {
      out.push_back(render_it(corpus[i], rng.pick(instructions), layout));
    } catch (const PreconditionError& e) {
      throw PreconditionError("row " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

void save_train_examples(const fs::path& path, const std::vector<TrainExample>& examples) {
  std::vector<Json> rows;
  rows.reserve(examples.size());
  for (const auto& e : examples) rows.push_back(to_json(e));
  write_jsonl_atomic(path, rows);
}

std::vector<TrainExample> load_train_examples(const fs::path& path) {
  std::vector<TrainExample> out;
  for (const auto& j : read_jsonl(path)) out.push_back(train_example_from_json(j));
  return out;
}

namespace {

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Calls on_text / on_slot for each piece of the template.
template <typename OnText, typename OnSlot>
void scan_template(std::string_view t, OnText on_text, OnSlot on_slot) {
  std::size_t i = 0;
  while (i < t.size()) {
    const char c = t[i];
    if (c == '{' && i + 1 < t.size() && t[i + 1] == '{') {
      on_text("{");
      i += 2;
    } else if (c == '}' && i + 1 < t.size() && t[i + 1] == '}') {
      on_text("}");
      i += 2;
    } else if (c == '{' && i + 1 < t.size() && is_ident_start(t[i + 1])) {
      std::size_t j = i + 1;
      while (j < t.size() && is_ident(t[j])) ++j;
      if (j < t.size() && t[j] == '}') {
        on_slot(std::string(t.substr(i + 1, j - i - 1)));
        i = j + 1;
      } else {
        on_text(t.substr(i, j - i));
        i = j;
      }
    } else {
      on_text(t.substr(i, 1));
      ++i;
    }
  }
}

}  // namespace

std::vector<std::string> template_slots(std::string_view tmpl) {
  std::vector<std::string> slots;
  std::set<std::string> seen;
  scan_template(tmpl, [](std::string_view) {}, [&](const std::string& s) {
    if (seen.insert(s).second) slots.push_back(s);
  });
  return slots;
}

std::string render_icl_prompt(std::string_view tmpl, const std::map<std::string, std::string>& bindings) {
  const auto slots = template_slots(tmpl);
  const std::set<std::string> slot_set(slots.begin(), slots.end());
  for (const auto& s : slots) {
    if (!bindings.count(s)) throw PreconditionError("template slot '" + s + "' is not bound");
  }
  for (const auto& [name, value] : bindings) {
    if (!slot_set.count(name)) throw PreconditionError("binding '" + name + "' names no slot in the template");
  }
  std::string out;
  scan_template(tmpl, [&](std::string_view piece) { out.append(piece); },
                [&](const std::string& s) { out.append(bindings.at(s)); });
  return out;
}

}  // namespace sentilab::augment
