#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "sentilab/forge.hpp"

namespace sentilab::forge {

// Pool state is a fold over these; the JSONL event log is the source of
// truth and the snapshot is derived from it.
struct PoolEvent {
  enum class Type { created, filtered, decided };

  Type type = Type::created;
  std::uint64_t seq = 0;  // pool version after applying this event
  std::string ts;
  InstructionCandidate candidate;  // created
  std::string id;                  // filtered, decided
  Verdict verdict = Verdict::pass;  // filtered
  Decision decision = Decision::pending;  // decided
  std::string reviewer;                   // decided

  Json to_json() const;
  static PoolEvent from_json(const Json& j);
};

class InstructionPool {
 public:
  const std::vector<InstructionCandidate>& candidates() const { return candidates_; }
  std::uint64_t version() const { return version_; }
  std::size_t size() const { return candidates_.size(); }

  const InstructionCandidate* find(const std::string& id) const;
  std::vector<const InstructionCandidate*> with_decision(Decision d) const;

  // Throws if folding the event would break a pool invariant. The event's
  // seq must be version() + 1.
  void check(const PoolEvent& event) const;

  // check() then fold; the pool is unchanged when this throws.
  void apply(const PoolEvent& event);

  // Empty when every invariant holds.
  std::vector<std::string> invariant_violations(const FilterConfig& cfg = {}) const;

  Json snapshot_json() const;
  static InstructionPool from_events(const std::vector<PoolEvent>& events);

  friend bool operator==(const InstructionPool& a, const InstructionPool& b) {
    return a.version_ == b.version_ && a.candidates_ == b.candidates_;
  }

 private:
  const InstructionCandidate& at(const std::string& id) const;

  std::vector<InstructionCandidate> candidates_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t version_ = 0;
};

PoolEvent creation_event(const InstructionPool& pool, InstructionCandidate candidate,
                         std::string ts = now_iso8601());
PoolEvent filter_event(const InstructionPool& pool, const std::string& id, Verdict verdict,
                       std::string ts = now_iso8601());

// Validates a human decision. Returns nothing when the same decision was
// already recorded. Throws NotFoundError, ConflictError, NotAcceptableError,
// or PreconditionError for `pending`.
std::optional<PoolEvent> decision_event(const InstructionPool& pool, const std::string& id,
                                        Decision decision, const std::string& reviewer,
                                        const FilterConfig& cfg = {}, std::string ts = now_iso8601());

InstructionPool apply_decision(const InstructionPool& pool, const std::string& id, Decision decision,
                               const std::string& reviewer, const FilterConfig& cfg = {});

struct PoolStats {
  std::uint64_t version = 0;
  std::size_t total = 0;
  std::map<std::string, std::size_t> by_decision;
  std::map<std::string, std::size_t> by_verdict;
  std::map<std::string, std::size_t> by_complexity;

  Json to_json() const;
};

PoolStats pool_stats(const InstructionPool& pool);

// Single-writer persistent pool. Every mutation appends its events to
// `<dir>/events.jsonl` before it becomes visible; `<dir>/snapshot.json` is
// rewritten atomically every `snapshot_every` events. With an empty
// directory the store is memory-only.
class PoolStore {
 public:
  explicit PoolStore(std::filesystem::path dir = {}, FilterConfig cfg = {}, std::size_t snapshot_every = 1);

  // Records creation and the auto-filter verdict (unless already set, as for
  // refusals). Returns the stored candidate.
  InstructionCandidate add(InstructionCandidate candidate);
  std::vector<InstructionCandidate> add_all(std::vector<InstructionCandidate> candidates);

  // Re-runs the auto filter on a still-pending candidate.
  Verdict refilter(const std::string& id);

  InstructionCandidate decide(const std::string& id, Decision decision, const std::string& reviewer);

  InstructionPool snapshot() const;
  const FilterConfig& filter_config() const { return cfg_; }

  void write_snapshot() const;

  static InstructionPool replay(const std::filesystem::path& event_log);

 private:
  void commit(const PoolEvent& event);
  void write_snapshot_locked() const;

  std::filesystem::path dir_;
  FilterConfig cfg_;
  std::size_t snapshot_every_;
  mutable std::size_t since_snapshot_ = 0;
  InstructionPool pool_;
  mutable std::shared_mutex mutex_;
};

}  // namespace sentilab::forge
