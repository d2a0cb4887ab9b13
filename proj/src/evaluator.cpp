#include "sentilab/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "sentilab/errors.hpp"

namespace sentilab::eval {

namespace {

std::string input_for(const SentimentExample& e, const ZeroShotOptions& o) {
  const std::string text = e.clean_text.empty() ? clean_text(e.raw_text) : e.clean_text;
  if (o.render == augment::Format::sft) return text;
  return augment::render_it_input(o.instruction->text, text, o.layout);
}

std::optional<std::vector<CachedPrediction>> read_cache(const fs::path& path, const Corpus& corpus) {
  if (!fs::exists(path)) return std::nullopt;
  std::vector<CachedPrediction> out;
  for (const auto& row : read_jsonl(path)) {
    out.push_back({row.at("id").get<std::string>(), row.at("raw_output").get<std::string>(),
                   predicted_from_string(row.at("label").get<std::string>())});
  }
  if (out.size() != corpus.size()) return std::nullopt;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].id != corpus[i].id) return std::nullopt;
  }
  return out;
}

}  // namespace

fs::path cache_path(const fs::path& cache_dir, const std::string& run_id, const std::string& dataset,
                    augment::Format render, const std::string& instruction_id) {
  std::string name = dataset + "__" + std::string(augment::to_string(render));
  if (!instruction_id.empty()) name += "__" + instruction_id;
  return cache_dir / run_id / (name + ".jsonl");
}

std::vector<CachedPrediction> predict_all(const trainer::Predictor& predictor, const Corpus& corpus,
                                          const ZeroShotOptions& options) {
  if (options.render == augment::Format::it && !options.instruction) {
    throw PreconditionError("instruction-format evaluation needs an instruction");
  }
  std::vector<CachedPrediction> out(corpus.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    try {
      for (std::size_t i = next++; i < corpus.size(); i = next++) {
        const auto p = predictor.predict(input_for(corpus[i], options));
        out[i] = {corpus[i].id, p.raw_output, p.label};
      }
    } catch (...) {
      std::lock_guard lock(failure_mu);
      if (!failure) failure = std::current_exception();
      next = corpus.size();
    }
  };
  const std::size_t n_workers = std::clamp<std::size_t>(options.workers, 1, 64);
  if (n_workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<MetricsReport> evaluate_zero_shot(const trainer::ModelHandle& handle, const trainer::Predictor& predictor,
                                              const std::vector<NamedCorpus>& heldout,
                                              const ZeroShotOptions& options) {
  if (options.render == augment::Format::it) {
    if (!options.instruction) throw PreconditionError("instruction-format evaluation needs an instruction");
    if (options.instruction->human_decision != forge::Decision::accepted) {
      throw PreconditionError("evaluation instruction " + options.instruction->id + " is not accepted");
    }
  }
  const auto& trained = handle.training_sources;
  auto seen = [&](const std::string& s) { return std::find(trained.begin(), trained.end(), s) != trained.end(); };
  for (const auto& set : heldout) {
    if (seen(set.name)) throw PreconditionError("held-out dataset '" + set.name + "' was used for training");
    for (const auto& e : set.corpus) {
      if (seen(e.source)) {
        throw PreconditionError("held-out dataset '" + set.name + "' contains example " + e.id + " from training source '" +
                                e.source + "'");
      }
    }
  }

  const std::string instruction_id = options.instruction ? options.instruction->id : "";
  std::vector<MetricsReport> reports;
  for (const auto& set : heldout) {
    std::vector<CachedPrediction> preds;
    fs::path cache;
    if (!options.cache_dir.empty()) {
      cache = cache_path(options.cache_dir, handle.run_id, set.name, options.render, instruction_id);
      if (auto hit = read_cache(cache, set.corpus)) preds = std::move(*hit);
    }
    if (preds.empty() && !set.corpus.empty()) {
      preds = predict_all(predictor, set.corpus, options);
      if (!cache.empty()) {
        std::vector<Json> rows;
        rows.reserve(preds.size());
        for (const auto& p : preds) rows.push_back({{"id", p.id}, {"raw_output", p.raw_output}, {"label", to_string(p.label)}});
        fs::create_directories(cache.parent_path());
        write_jsonl_atomic(cache, rows);
      }
    }
    std::vector<Predicted> labels;
    std::vector<Label> golds;
    labels.reserve(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
      labels.push_back(preds[i].label);
      golds.push_back(set.corpus[i].label);
    }
    MetricsReport r = make_report(confusion(labels, golds), set.name, handle.run_id,
                                  std::string(trainer::to_string(handle.regime)), options.paper_exact_f1);
    r.render = std::string(augment::to_string(options.render));
    r.instruction_id = instruction_id;
    reports.push_back(std::move(r));
  }
  return reports;
}

}  // namespace sentilab::eval
