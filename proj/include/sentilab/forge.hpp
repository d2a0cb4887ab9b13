#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sentilab/io.hpp"

namespace sentilab::forge {

enum class Mode { complete, chat };

// Sampling constants for the hosted completion model. `penalty` is passed
// through as the provider's frequency penalty.
struct GenerationParams {
  Mode mode = Mode::complete;
  std::string model_id = "text-davinci-003";
  double temperature = 0.7;
  std::size_t max_len = 64;
  double top_p = 1.0;
  double penalty = 0.0;

  void validate() const;
  Json to_json() const;
  static GenerationParams from_json(const Json& j);
};

enum class Source { generated, human_seed };
enum class Verdict { pass, fail_duplicate, fail_quality, fail_refusal };
enum class Decision { pending, accepted, rejected };
enum class Complexity { short_simple, long_complex };

std::string_view to_string(Source v);
std::string_view to_string(Verdict v);
std::string_view to_string(Decision v);
std::string_view to_string(Complexity v);
Source source_from_string(std::string_view s);
Verdict verdict_from_string(std::string_view s);
Decision decision_from_string(std::string_view s);
Complexity complexity_from_string(std::string_view s);

struct InstructionCandidate {
  std::string id;
  std::string text;
  Source source = Source::generated;
  std::optional<Verdict> auto_verdict;  // empty until filtered
  Decision human_decision = Decision::pending;
  std::size_t length_tokens = 0;
  std::optional<Complexity> complexity;  // empty only for empty text
  std::string created_at;
  std::string reviewer;
  std::string decided_at;

  friend bool operator==(const InstructionCandidate&, const InstructionCandidate&) = default;
};

Json to_json(const InstructionCandidate& c);
InstructionCandidate candidate_from_json(const Json& j);

struct ComplexityConfig {
  std::size_t max_short_tokens = 8;
  bool clause_comma_marks_complex = true;
};

struct ComplexityResult {
  std::size_t length_tokens = 0;
  Complexity complexity = Complexity::short_simple;
};

// Short/simple iff the whitespace token count is within the limit and no
// comma introduces a further clause. Throws PreconditionError on empty text.
ComplexityResult classify_complexity(std::string_view text, const ComplexityConfig& cfg = {});

// Builds a candidate with length and complexity derived from the text.
InstructionCandidate make_candidate(std::string text, Source source, std::string created_at = now_iso8601());

struct FilterConfig {
  double duplicate_threshold = 0.8;
  std::size_t min_tokens = 3;
  std::size_t max_tokens = 64;
  std::vector<std::string> task_keywords = {"sentiment", "classify", "detect", "categorize",
                                            "determine", "emotion",   "tone"};
};

// Casefold, strip ASCII punctuation, collapse whitespace.
std::string normalize_instruction(std::string_view text);

// Jaccard similarity of the character-trigram sets of two normalized strings.
double trigram_jaccard(std::string_view a, std::string_view b);

class InstructionPool;

// Refusal candidates keep `fail_refusal`; everything else is judged against
// the pool's accepted members and its pending members that passed.
Verdict auto_filter(const InstructionCandidate& candidate, const InstructionPool& pool,
                    const FilterConfig& cfg = {});

}  // namespace sentilab::forge
