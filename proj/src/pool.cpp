#include "sentilab/pool.hpp"

#include <algorithm>
#include <mutex>

#include "sentilab/errors.hpp"

namespace sentilab::forge {

namespace {

constexpr std::string_view kEventType[] = {"created", "filtered", "decided"};

}  // namespace

Json PoolEvent::to_json() const {
  Json j = {{"type", kEventType[static_cast<int>(type)]}, {"seq", seq}, {"ts", ts}};
  switch (type) {
    case Type::created:
      j["candidate"] = forge::to_json(candidate);
      break;
    case Type::filtered:
      j["id"] = id;
      j["verdict"] = to_string(verdict);
      break;
    case Type::decided:
      j["id"] = id;
      j["decision"] = to_string(decision);
      j["reviewer"] = reviewer;
      break;
  }
  return j;
}

PoolEvent PoolEvent::from_json(const Json& j) {
  PoolEvent e;
  const auto type = j.at("type").get<std::string>();
  if (type == "created") {
    e.type = Type::created;
    e.candidate = candidate_from_json(j.at("candidate"));
  } else if (type == "filtered") {
    e.type = Type::filtered;
    e.id = j.at("id").get<std::string>();
    e.verdict = verdict_from_string(j.at("verdict").get<std::string>());
  } else if (type == "decided") {
    e.type = Type::decided;
    e.id = j.at("id").get<std::string>();
    e.decision = decision_from_string(j.at("decision").get<std::string>());
    e.reviewer = j.at("reviewer").get<std::string>();
  } else {
    throw ParseError("unknown pool event type: " + type);
  }
  e.seq = j.at("seq").get<std::uint64_t>();
  e.ts = j.value("ts", std::string());
  return e;
}

const InstructionCandidate* InstructionPool::find(const std::string& id) const {
  const auto it = index_.find(id);
  return it == index_.end() ? nullptr : &candidates_[it->second];
}

const InstructionCandidate& InstructionPool::at(const std::string& id) const {
  const auto* c = find(id);
  if (!c) throw NotFoundError("unknown candidate id: " + id);
  return *c;
}

std::vector<const InstructionCandidate*> InstructionPool::with_decision(Decision d) const {
  std::vector<const InstructionCandidate*> out;
  for (const auto& c : candidates_) {
    if (c.human_decision == d) out.push_back(&c);
  }
  return out;
}

void InstructionPool::check(const PoolEvent& e) const {
  if (e.seq != version_ + 1) {
    throw Error("pool event out of sequence: expected " + std::to_string(version_ + 1) + ", got " +
                std::to_string(e.seq));
  }
  switch (e.type) {
    case PoolEvent::Type::created: {
      const auto& c = e.candidate;
      if (c.id.empty()) throw PreconditionError("candidate id must be non-empty");
      if (index_.count(c.id)) throw ConflictError("duplicate candidate id: " + c.id);
      if (c.human_decision != Decision::pending) throw PreconditionError("new candidates must be pending");
      if (c.auto_verdict == Verdict::pass && c.text.empty()) {
        throw PreconditionError("a passing candidate needs text");
      }
      break;
    }
    case PoolEvent::Type::filtered: {
      const auto& c = at(e.id);
      if (c.human_decision != Decision::pending) throw ConflictError("candidate already decided: " + e.id);
      if (c.auto_verdict == Verdict::fail_refusal && e.verdict != Verdict::fail_refusal) {
        throw PreconditionError("refusal verdicts are final: " + e.id);
      }
      if (e.verdict == Verdict::pass && c.text.empty()) throw PreconditionError("a passing candidate needs text");
      break;
    }
    case PoolEvent::Type::decided: {
      const auto& c = at(e.id);
      if (e.decision == Decision::pending) throw PreconditionError("decision must be accepted or rejected");
      if (c.human_decision != Decision::pending) throw ConflictError("candidate already decided: " + e.id);
      if (e.decision == Decision::accepted && c.auto_verdict != Verdict::pass) {
        throw NotAcceptableError("candidate " + e.id + " did not pass the auto filter");
      }
      if (e.reviewer.empty()) throw PreconditionError("reviewer must be non-empty");
      break;
    }
  }
}

void InstructionPool::apply(const PoolEvent& e) {
  check(e);
  switch (e.type) {
    case PoolEvent::Type::created:
      index_.emplace(e.candidate.id, candidates_.size());
      candidates_.push_back(e.candidate);
      break;
    case PoolEvent::Type::filtered:
      candidates_[index_.at(e.id)].auto_verdict = e.verdict;
      break;
    case PoolEvent::Type::decided: {
      auto& c = candidates_[index_.at(e.id)];
      c.human_decision = e.decision;
      c.reviewer = e.reviewer;
      c.decided_at = e.ts;
      break;
    }
  }
  version_ = e.seq;
}

std::vector<std::string> InstructionPool::invariant_violations(const FilterConfig& cfg) const {
  std::vector<std::string> out;
  if (index_.size() != candidates_.size()) out.push_back("candidate ids are not unique");
  std::vector<std::pair<const InstructionCandidate*, std::string>> accepted;
  for (const auto& c : candidates_) {
    if (c.human_decision == Decision::accepted) {
      if (c.auto_verdict != Verdict::pass) out.push_back(c.id + ": accepted without a pass verdict");
      accepted.emplace_back(&c, normalize_instruction(c.text));
    }
    if (c.auto_verdict == Verdict::pass && c.text.empty()) out.push_back(c.id + ": pass verdict with empty text");
    const bool has_text = c.text.find_first_not_of(" \t\r\n") != std::string::npos;
    if (has_text != c.complexity.has_value() ||
        (has_text && classify_complexity(c.text).complexity != *c.complexity)) {
      out.push_back(c.id + ": complexity does not match text");
    }
  }
  for (std::size_t i = 0; i < accepted.size(); ++i) {
    for (std::size_t k = i + 1; k < accepted.size(); ++k) {
      if (trigram_jaccard(accepted[i].second, accepted[k].second) >= cfg.duplicate_threshold) {
        out.push_back(accepted[i].first->id + " and " + accepted[k].first->id + ": accepted near-duplicates");
      }
    }
  }
  return out;
}

Json InstructionPool::snapshot_json() const {
  Json list = Json::array();
  for (const auto& c : candidates_) list.push_back(to_json(c));
  return {{"version", version_}, {"candidates", list}};
}

InstructionPool InstructionPool::from_events(const std::vector<PoolEvent>& events) {
  InstructionPool pool;
  for (const auto& e : events) pool.apply(e);
  return pool;
}

PoolEvent creation_event(const InstructionPool& pool, InstructionCandidate candidate, std::string ts) {
  PoolEvent e;
  e.type = PoolEvent::Type::created;
  e.seq = pool.version() + 1;
  e.ts = std::move(ts);
  e.candidate = std::move(candidate);
  return e;
}

PoolEvent filter_event(const InstructionPool& pool, const std::string& id, Verdict verdict, std::string ts) {
  PoolEvent e;
  e.type = PoolEvent::Type::filtered;
  e.seq = pool.version() + 1;
  e.ts = std::move(ts);
  e.id = id;
  e.verdict = verdict;
  return e;
}

std::optional<PoolEvent> decision_event(const InstructionPool& pool, const std::string& id, Decision decision,
                                        const std::string& reviewer, const FilterConfig& cfg, std::string ts) {
  if (decision == Decision::pending) throw PreconditionError("decision must be accepted or rejected");
  const auto* c = pool.find(id);
  if (!c) throw NotFoundError("unknown candidate id: " + id);
  if (c->human_decision == decision) return std::nullopt;
  if (c->human_decision != Decision::pending) {
    throw ConflictError("candidate " + id + " was already " + std::string(to_string(c->human_decision)));
  }
  if (decision == Decision::accepted) {
    if (c->auto_verdict != Verdict::pass) {
      throw NotAcceptableError("candidate " + id + " has verdict " +
                               std::string(c->auto_verdict ? to_string(*c->auto_verdict) : "unfiltered") +
                               " and cannot be accepted");
    }
    const std::string norm = normalize_instruction(c->text);
    for (const auto* member : pool.with_decision(Decision::accepted)) {
      if (trigram_jaccard(norm, normalize_instruction(member->text)) >= cfg.duplicate_threshold) {
        throw NotAcceptableError("candidate " + id + " duplicates accepted candidate " + member->id);
      }
    }
  }
  PoolEvent e;
  e.type = PoolEvent::Type::decided;
  e.seq = pool.version() + 1;
  e.ts = std::move(ts);
  e.id = id;
  e.decision = decision;
  e.reviewer = reviewer;
  pool.check(e);
  return e;
}

InstructionPool apply_decision(const InstructionPool& pool, const std::string& id, Decision decision,
                               const std::string& reviewer, const FilterConfig& cfg) {
  InstructionPool next = pool;
  if (auto e = decision_event(pool, id, decision, reviewer, cfg)) next.apply(*e);
  return next;
}

Json PoolStats::to_json() const {
  return {{"version", version},
          {"total", total},
          {"by_decision", by_decision},
          {"by_verdict", by_verdict},
          {"by_complexity", by_complexity}};
}

PoolStats pool_stats(const InstructionPool& pool) {
  PoolStats s;
  s.version = pool.version();
  s.total = pool.size();
  for (auto d : {Decision::pending, Decision::accepted, Decision::rejected}) s.by_decision[std::string(to_string(d))] = 0;
  for (const auto& c : pool.candidates()) {
    ++s.by_decision[std::string(to_string(c.human_decision))];
    ++s.by_verdict[c.auto_verdict ? std::string(to_string(*c.auto_verdict)) : "unfiltered"];
    if (c.complexity) ++s.by_complexity[std::string(to_string(*c.complexity))];
  }
  return s;
}

PoolStore::PoolStore(std::filesystem::path dir, FilterConfig cfg, std::size_t snapshot_every)
    : dir_(std::move(dir)), cfg_(std::move(cfg)), snapshot_every_(std::max<std::size_t>(1, snapshot_every)) {
  if (dir_.empty()) return;
  std::filesystem::create_directories(dir_);
  const auto log = dir_ / "events.jsonl";
  if (std::filesystem::exists(log)) pool_ = replay(log);
}

void PoolStore::commit(const PoolEvent& event) {
  pool_.check(event);
  if (!dir_.empty()) append_line(dir_ / "events.jsonl", event.to_json().dump());
  pool_.apply(event);
  if (!dir_.empty() && ++since_snapshot_ >= snapshot_every_) write_snapshot_locked();
}

InstructionCandidate PoolStore::add(InstructionCandidate candidate) {
  std::unique_lock lock(mutex_);
  const std::string id = candidate.id;
  const bool needs_filter = !candidate.auto_verdict.has_value();
  commit(creation_event(pool_, std::move(candidate)));
  if (needs_filter) {
    const auto verdict = auto_filter(*pool_.find(id), pool_, cfg_);
    commit(filter_event(pool_, id, verdict));
  }
  return *pool_.find(id);
}

std::vector<InstructionCandidate> PoolStore::add_all(std::vector<InstructionCandidate> candidates) {
  std::vector<InstructionCandidate> out;
  out.reserve(candidates.size());
  for (auto& c : candidates) out.push_back(add(std::move(c)));
  return out;
}

Verdict PoolStore::refilter(const std::string& id) {
  std::unique_lock lock(mutex_);
  const auto* c = pool_.find(id);
  if (!c) throw NotFoundError("unknown candidate id: " + id);
  if (c->human_decision != Decision::pending) throw ConflictError("candidate already decided: " + id);
  const auto verdict = auto_filter(*c, pool_, cfg_);
  if (verdict != c->auto_verdict) commit(filter_event(pool_, id, verdict));
  return verdict;
}

InstructionCandidate PoolStore::decide(const std::string& id, Decision decision, const std::string& reviewer) {
  std::unique_lock lock(mutex_);
  if (auto e = decision_event(pool_, id, decision, reviewer, cfg_)) commit(*e);
  return *pool_.find(id);
}

InstructionPool PoolStore::snapshot() const {
  std::shared_lock lock(mutex_);
  return pool_;
}

void PoolStore::write_snapshot() const {
  std::unique_lock lock(mutex_);
  write_snapshot_locked();
}

void PoolStore::write_snapshot_locked() const {
  if (dir_.empty()) return;
  write_file_atomic(dir_ / "snapshot.json", pool_.snapshot_json().dump(2));
  since_snapshot_ = 0;
}

InstructionPool PoolStore::replay(const std::filesystem::path& event_log) {
  std::vector<PoolEvent> events;
  for (const auto& j : read_jsonl(event_log)) events.push_back(PoolEvent::from_json(j));
  return InstructionPool::from_events(events);
}

}  // namespace sentilab::forge
