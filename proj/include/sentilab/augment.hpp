#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sentilab/corpus.hpp"
#include "sentilab/forge.hpp"

namespace sentilab::augment {

enum class Format { sft, it };

std::string_view to_string(Format f);
Format format_from_string(std::string_view s);

struct TrainExample {
  std::string input_text;
  std::string target_text;  // "Positive" | "Negative"
  Format format = Format::sft;
  std::optional<std::string> instruction_id;
  std::string source_id;

  friend bool operator==(const TrainExample&, const TrainExample&) = default;
};

Json to_json(const TrainExample& e);
TrainExample train_example_from_json(const Json& j);

inline constexpr std::string_view kPositiveTarget = "Positive";
inline constexpr std::string_view kNegativeTarget = "Negative";

// Throws PreconditionError for neutral.
std::string_view target_for(Label label);
Label label_for_target(std::string_view target);

// Joins instruction and text: instruction + separator + marker + clean_text.
struct ItLayout {
  std::string separator = ", ";
  std::string marker = "Text: ";
};

TrainExample render_sft(const SentimentExample& example);
TrainExample render_it(const SentimentExample& example, const forge::InstructionCandidate& instruction,
                       const ItLayout& layout = {});

// Plain instruction text without the pool record; used at evaluation time.
std::string render_it_input(std::string_view instruction, std::string_view clean_text, const ItLayout& layout = {});

// Inverse of render_it_input; empty when `input` is not of that shape.
std::optional<std::string> strip_it_prefix(std::string_view input, std::string_view instruction,
                                           const ItLayout& layout = {});

// One TrainExample per corpus entry, same order. With an instruction the IT
// format is produced, otherwise SFT.
std::vector<TrainExample> augment_corpus(const Corpus& corpus,
                                         const forge::InstructionCandidate* instruction = nullptr,
                                         const ItLayout& layout = {});

// Experimental: draws the instruction per example from an accepted pool.
std::vector<TrainExample> augment_corpus_sampled(const Corpus& corpus,
                                                 const std::vector<forge::InstructionCandidate>& instructions,
                                                 std::uint64_t seed, const ItLayout& layout = {});

void save_train_examples(const fs::path& path, const std::vector<TrainExample>& examples);
std::vector<TrainExample> load_train_examples(const fs::path& path);

// Substitutes `{slot}` markers. `{{` and `}}` produce literal braces. Every
// slot must be bound and every binding used; violations throw
// PreconditionError naming the slot.
std::string render_icl_prompt(std::string_view tmpl, const std::map<std::string, std::string>& bindings);

std::vector<std::string> template_slots(std::string_view tmpl);

}  // namespace sentilab::augment
