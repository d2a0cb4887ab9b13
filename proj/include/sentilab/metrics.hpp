#pragma once

#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sentilab/corpus.hpp"
#include "sentilab/io.hpp"

namespace sentilab::eval {

enum class Predicted { negative = 0, positive = 1, unparsed = 2 };

std::string_view to_string(Predicted p);
Predicted predicted_from_string(std::string_view s);
Predicted from_label(Label label);

// Casefolded word match against {positive, pos} and {negative, neg};
// unparsed when both or neither occur.
Predicted parse_label(std::string_view raw_output);

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t unparsed = 0;

  std::size_t total() const { return tp + tn + fp + fn + unparsed; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

// Golds must be positive or negative. Unparsed predictions are tallied apart
// and count as wrong.
ConfusionCounts confusion(std::span<const Predicted> predictions, std::span<const Label> golds);

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Names of metrics whose denominator was zero (reported as 0).
  std::set<std::string> undefined;
};

// accuracy = (tp+tn)/total, precision = tp/(tp+fp), recall = tp/(tp+fn),
// f1 = tp/(tp + 0.5(fp+fn)). With `paper_exact_f1` the F1 denominator uses
// tn in place of fp, matching the formula as printed in the source text.
Metrics metrics(const ConfusionCounts& counts, bool paper_exact_f1 = false);

struct MetricsReport {
  ConfusionCounts counts;
  Metrics values;
  std::string dataset;
  std::string model;  // run id
  std::string regime;
  std::string render;
  std::string instruction_id;

  Json to_json() const;
  static MetricsReport from_json(const Json& j);
};

MetricsReport make_report(const ConfusionCounts& counts, std::string dataset, std::string model, std::string regime,
                          bool paper_exact_f1 = false);

// Columns: Model, Accuracy, F1 score, Precision, Recall, then provenance.
std::string reports_to_csv(const std::vector<MetricsReport>& reports);
Json reports_to_json(const std::vector<MetricsReport>& reports);

}  // namespace sentilab::eval
