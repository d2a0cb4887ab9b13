#include "sentilab/metrics.hpp"

#include "sentilab/csv.hpp"
#include "sentilab/errors.hpp"
#include "sentilab/text.hpp"

namespace sentilab::eval {

std::string_view to_string(Predicted p) {
  switch (p) {
    case Predicted::positive: return "positive";
    case Predicted::negative: return "negative";
    case Predicted::unparsed: return "unparsed";
  }
  return "unparsed";
}

Predicted predicted_from_string(std::string_view s) {
  if (s == "positive") return Predicted::positive;
  if (s == "negative") return Predicted::negative;
  if (s == "unparsed") return Predicted::unparsed;
  throw ParseError("unknown predicted label: " + std::string(s));
}

Predicted from_label(Label label) {
  switch (label) {
    case Label::positive: return Predicted::positive;
    case Label::negative: return Predicted::negative;
    case Label::neutral: break;
  }
  return Predicted::unparsed;
}

Predicted parse_label(std::string_view raw_output) {
  bool pos = false;
  bool neg = false;
  for (const auto& w : text::word_tokens(raw_output)) {
    pos = pos || w == "positive" || w == "pos";
    neg = neg || w == "negative" || w == "neg";
  }
  if (pos == neg) return Predicted::unparsed;
  return pos ? Predicted::positive : Predicted::negative;
}

ConfusionCounts confusion(std::span<const Predicted> predictions, std::span<const Label> golds) {
  if (predictions.size() != golds.size()) {
    throw PreconditionError("confusion: " + std::to_string(predictions.size()) + " predictions vs " +
                            std::to_string(golds.size()) + " golds");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    if (golds[i] == Label::neutral) throw PreconditionError("confusion: neutral gold at index " + std::to_string(i));
    const bool gold_pos = golds[i] == Label::positive;
    switch (predictions[i]) {
      case Predicted::positive: ++(gold_pos ? c.tp : c.fp); break;
      case Predicted::negative: ++(gold_pos ? c.fn : c.tn); break;
      case Predicted::unparsed: ++c.unparsed; break;
    }
  }
  return c;
}

Metrics metrics(const ConfusionCounts& c, bool paper_exact_f1) {
  Metrics m;
  auto ratio = [&](double num, double den, const char* name) {
    if (den <= 0.0) {
      m.undefined.insert(name);
      return 0.0;
    }
    return num / den;
  };
  const auto tp = static_cast<double>(c.tp);
  const auto tn = static_cast<double>(c.tn);
  const auto fp = static_cast<double>(c.fp);
  const auto fn = static_cast<double>(c.fn);
  m.accuracy = ratio(tp + tn, static_cast<double>(c.total()), "accuracy");
  m.precision = ratio(tp, tp + fp, "precision");
  m.recall = ratio(tp, tp + fn, "recall");
  const double wrong = paper_exact_f1 ? (tn + fn) : (fp + fn);
  m.f1 = ratio(tp, tp + 0.5 * wrong, "f1");
  return m;
}

MetricsReport make_report(const ConfusionCounts& counts, std::string dataset, std::string model, std::string regime,
                          bool paper_exact_f1) {
  MetricsReport r;
  r.counts = counts;
  r.values = metrics(counts, paper_exact_f1);
  r.dataset = std::move(dataset);
  r.model = std::move(model);
  r.regime = std::move(regime);
  return r;
}

Json MetricsReport::to_json() const {
  return {{"Model", model},
          {"Accuracy", values.accuracy},
          {"F1 score", values.f1},
          {"Precision", values.precision},
          {"Recall", values.recall},
          {"dataset", dataset},
          {"regime", regime},
          {"render", render},
          {"instruction_id", instruction_id},
          {"tp", counts.tp},
          {"tn", counts.tn},
          {"fp", counts.fp},
          {"fn", counts.fn},
          {"unparsed", counts.unparsed},
          {"undefined", values.undefined}};
}

MetricsReport MetricsReport::from_json(const Json& j) {
  MetricsReport r;
  r.model = j.at("Model").get<std::string>();
  r.values.accuracy = j.at("Accuracy").get<double>();
  r.values.f1 = j.at("F1 score").get<double>();
  r.values.precision = j.at("Precision").get<double>();
  r.values.recall = j.at("Recall").get<double>();
  r.values.undefined = j.value("undefined", std::set<std::string>{});
  r.dataset = j.at("dataset").get<std::string>();
  r.regime = j.at("regime").get<std::string>();
  r.render = j.value("render", std::string());
  r.instruction_id = j.value("instruction_id", std::string());
  r.counts.tp = j.at("tp").get<std::size_t>();
  r.counts.tn = j.at("tn").get<std::size_t>();
  r.counts.fp = j.at("fp").get<std::size_t>();
  r.counts.fn = j.at("fn").get<std::size_t>();
  r.counts.unparsed = j.at("unparsed").get<std::size_t>();
  return r;
}

std::string reports_to_csv(const std::vector<MetricsReport>& reports) {
  std::string out = "Model,Accuracy,F1 score,Precision,Recall,dataset,regime,render,instruction_id,tp,tn,fp,fn,unparsed\n";
  for (const auto& r : reports) {
    out += csv::join({r.model, format_fixed(r.values.accuracy, 6), format_fixed(r.values.f1, 6),
                      format_fixed(r.values.precision, 6), format_fixed(r.values.recall, 6), r.dataset, r.regime,
                      r.render, r.instruction_id, std::to_string(r.counts.tp), std::to_string(r.counts.tn),
                      std::to_string(r.counts.fp), std::to_string(r.counts.fn), std::to_string(r.counts.unparsed)});
    out += '\n';
  }
  return out;
}

Json reports_to_json(const std::vector<MetricsReport>& reports) {
  Json arr = Json::array();
  for (const auto& r : reports) arr.push_back(r.to_json());
  return arr;
}

}  // namespace sentilab::eval
