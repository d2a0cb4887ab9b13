#include "sentilab/forge.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>

#include "sentilab/errors.hpp"
#include "sentilab/pool.hpp"
#include "sentilab/text.hpp"

namespace sentilab::forge {

namespace {

template <typename E, std::size_t N>
E enum_from(std::string_view s, const std::string_view (&names)[N], const char* what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<E>(i);
  }
  throw ParseError(std::string("unknown ") + what + ": " + std::string(s));
}

constexpr std::string_view kSource[] = {"generated", "human_seed"};
constexpr std::string_view kVerdict[] = {"pass", "fail_duplicate", "fail_quality", "fail_refusal"};
constexpr std::string_view kDecision[] = {"pending", "accepted", "rejected"};
constexpr std::string_view kComplexity[] = {"short_simple", "long_complex"};

}  // namespace

std::string_view to_string(Source v) { return kSource[static_cast<int>(v)]; }
std::string_view to_string(Verdict v) { return kVerdict[static_cast<int>(v)]; }
std::string_view to_string(Decision v) { return kDecision[static_cast<int>(v)]; }
std::string_view to_string(Complexity v) { return kComplexity[static_cast<int>(v)]; }
Source source_from_string(std::string_view s) { return enum_from<Source>(s, kSource, "source"); }
Verdict verdict_from_string(std::string_view s) { return enum_from<Verdict>(s, kVerdict, "verdict"); }
Decision decision_from_string(std::string_view s) { return enum_from<Decision>(s, kDecision, "decision"); }
Complexity complexity_from_string(std::string_view s) {
  return enum_from<Complexity>(s, kComplexity, "complexity");
}

void GenerationParams::validate() const {
  if (max_len < 1) throw PreconditionError("max_len must be at least 1");
  if (!(temperature >= 0.0)) throw PreconditionError("temperature must be non-negative");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw PreconditionError("top_p must lie in (0, 1]");
  if (model_id.empty()) throw PreconditionError("model_id must be set");
}

Json GenerationParams::to_json() const {
  return {{"mode", mode == Mode::complete ? "complete" : "chat"},
          {"model_id", model_id},
          {"temperature", temperature},
          {"max_len", max_len},
          {"top_p", top_p},
          {"penalty", penalty}};
}

GenerationParams GenerationParams::from_json(const Json& j) {
  GenerationParams p;
  const std::string mode = j.value("mode", std::string("complete"));
  if (mode == "complete") {
    p.mode = Mode::complete;
  } else if (mode == "chat") {
    p.mode = Mode::chat;
  } else {
    throw ParseError("unknown generation mode: " + mode);
  }
  p.model_id = j.value("model_id", p.model_id);
  p.temperature = j.value("temperature", p.temperature);
  p.max_len = j.value("max_len", p.max_len);
  p.top_p = j.value("top_p", p.top_p);
  p.penalty = j.value("penalty", p.penalty);
  p.validate();
  return p;
}

Json to_json(const InstructionCandidate& c) {
  Json j = {{"id", c.id},
            {"text", c.text},
            {"source", to_string(c.source)},
            {"auto_verdict", nullptr},
            {"human_decision", to_string(c.human_decision)},
            {"length_tokens", c.length_tokens},
            {"complexity", nullptr},
            {"created_at", c.created_at},
            {"reviewer", c.reviewer},
            {"decided_at", c.decided_at}};
  if (c.auto_verdict) j["auto_verdict"] = to_string(*c.auto_verdict);
  if (c.complexity) j["complexity"] = to_string(*c.complexity);
  return j;
}

InstructionCandidate candidate_from_json(const Json& j) {
  InstructionCandidate c;
  c.id = j.at("id").get<std::string>();
  c.text = j.at("text").get<std::string>();
  c.source = source_from_string(j.at("source").get<std::string>());
  if (!j.at("auto_verdict").is_null()) c.auto_verdict = verdict_from_string(j["auto_verdict"].get<std::string>());
  c.human_decision = decision_from_string(j.at("human_decision").get<std::string>());
  c.length_tokens = j.at("length_tokens").get<std::size_t>();
  if (!j.at("complexity").is_null()) c.complexity = complexity_from_string(j["complexity"].get<std::string>());
  c.created_at = j.value("created_at", std::string());
  c.reviewer = j.value("reviewer", std::string());
  c.decided_at = j.value("decided_at", std::string());
  return c;
}

ComplexityResult classify_complexity(std::string_view text, const ComplexityConfig& cfg) {
  const auto tokens = text::split_whitespace(text);
  if (tokens.empty()) throw PreconditionError("cannot classify an empty instruction");
  bool clause_comma = false;
  if (cfg.clause_comma_marks_complex) {
    // A comma counts when further words follow it.
    const auto comma = text.find(',');
    clause_comma = comma != std::string_view::npos &&
                   std::any_of(text.begin() + static_cast<std::ptrdiff_t>(comma) + 1, text.end(),
                               [](char c) { return std::isalnum(static_cast<unsigned char>(c)); });
  }
  ComplexityResult r;
  r.length_tokens = tokens.size();
  r.complexity = (tokens.size() <= cfg.max_short_tokens && !clause_comma) ? Complexity::short_simple
                                                                           : Complexity::long_complex;
  return r;
}

namespace {

std::atomic<std::uint64_t> g_candidate_counter{0};

std::string make_id(std::string_view created_at, std::string_view text) {
  const auto n = g_candidate_counter.fetch_add(1);
  std::string key;
  key.append(created_at).append("|").append(text).append("|").append(std::to_string(n));
  char buf[32];
  std::snprintf(buf, sizeof buf, "cand-%016llx", static_cast<unsigned long long>(fnv1a(key)));
  return buf;
}

}  // namespace

InstructionCandidate make_candidate(std::string text, Source source, std::string created_at) {
  InstructionCandidate c;
  c.id = make_id(created_at, text);
  c.text = std::move(text);
  c.source = source;
  c.created_at = std::move(created_at);
  const auto tokens = text::split_whitespace(c.text);
  c.length_tokens = tokens.size();
  if (!tokens.empty()) c.complexity = classify_complexity(c.text).complexity;
  return c;
}

std::string normalize_instruction(std::string_view text) {
  std::string stripped;
  stripped.reserve(text.size());
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::ispunct(c)) continue;
    stripped += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch;
  }
  return text::join(text::split_whitespace(stripped), " ");
}

namespace {

std::set<std::string> trigrams(std::string_view s) {
  std::set<std::string> out;
  if (s.size() < 3) {
    if (!s.empty()) out.emplace(s);
    return out;
  }
  for (std::size_t i = 0; i + 3 <= s.size(); ++i) out.emplace(s.substr(i, 3));
  return out;
}

}  // namespace

double trigram_jaccard(std::string_view a, std::string_view b) {
  const auto ta = trigrams(a);
  const auto tb = trigrams(b);
  if (ta.empty() && tb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& g : ta) inter += tb.count(g);
  const std::size_t uni = ta.size() + tb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

Verdict auto_filter(const InstructionCandidate& candidate, const InstructionPool& pool, const FilterConfig& cfg) {
  if (candidate.auto_verdict == Verdict::fail_refusal) return Verdict::fail_refusal;
  const std::string norm = normalize_instruction(candidate.text);
  // Compared against live members: accepted ones and pending ones that passed.
  for (const auto& m : pool.candidates()) {
    const auto* member = &m;
    if (member->id == candidate.id || member->human_decision == Decision::rejected) continue;
    if (member->human_decision == Decision::pending && member->auto_verdict != Verdict::pass) continue;
    if (trigram_jaccard(norm, normalize_instruction(member->text)) >= cfg.duplicate_threshold) {
      return Verdict::fail_duplicate;
    }
  }
  const auto tokens = text::split_whitespace(norm);
  if (tokens.size() < cfg.min_tokens || tokens.size() > cfg.max_tokens) return Verdict::fail_quality;
  const bool on_task = std::any_of(tokens.begin(), tokens.end(), [&](const std::string& t) {
    return std::any_of(cfg.task_keywords.begin(), cfg.task_keywords.end(),
                       [&](const std::string& k) { return t.rfind(k, 0) == 0; });
  });
  return on_task ? Verdict::pass : Verdict::fail_quality;
}

}  // namespace sentilab::forge
