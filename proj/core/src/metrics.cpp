#include "tsan/metrics/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "tsan/errors.hpp"
#include "tsan/log.hpp"

namespace tsan::metrics {
namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.empty()) throw ContractError("metrics need at least one prediction");
  if (scores.size() != labels.size()) {
    throw ContractError("metrics: " + std::to_string(scores.size()) + " scores but " +
                        std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw ContractError("metrics: labels must be 0 or 1");
  }
}

}  // namespace

Classification from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
  Classification c{tp, fp, tn, fn};
  const auto d = [](std::size_t v) { return static_cast<double>(v); };
  if (c.total() > 0) c.accuracy = d(tp + tn) / d(c.total());
  if (tp + fp == 0) {
    c.precision_undefined = true;
  } else {
    c.precision = d(tp) / d(tp + fp);
  }
  if (tp + fn == 0) {
    c.recall_undefined = true;
  } else {
    c.recall = d(tp) / d(tp + fn);
  }
  if (c.precision + c.recall > 0.0) c.f1 = 2.0 * c.precision * c.recall / (c.precision + c.recall);
  return c;
}

Classification confusion_and_prf1(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_inputs(scores, labels);
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int pred = threshold_decision(scores[i], threshold);
    if (pred == 1) {
      (labels[i] == 1 ? tp : fp) += 1;
    } else {
      (labels[i] == 1 ? fn : tn) += 1;
    }
  }
  return from_counts(tp, fp, tn, fn);
}

nlohmann::json Classification::to_json() const {
  return {{"tp", tp},
          {"fp", fp},
          {"tn", tn},
          {"fn", fn},
          {"accuracy", accuracy},
          {"precision", precision},
          {"recall", recall},
          {"f1", f1},
          {"precision_undefined", precision_undefined},
          {"recall_undefined", recall_undefined}};
}

double RocCurve::accuracy_at(const RocPoint& p) const {
  const double pos = static_cast<double>(positives), neg = static_cast<double>(negatives);
  return (p.tpr * pos + (1.0 - p.fpr) * neg) / (pos + neg);
}

RocCurve auc_roc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const std::size_t n = scores.size();
  RocCurve roc;
  for (int y : labels) (y == 1 ? roc.positives : roc.negatives) += 1;
  if (roc.positives == 0 || roc.negatives == 0) {
    throw ContractError("AUC is undefined when the labels hold a single class");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midranks (1-based); every rank is a multiple of 1/2, so the sums stay exact.
  double positive_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = static_cast<double>(i + 1 + j) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) positive_rank_sum += midrank;
    }
    i = j;
  }
  const double p = static_cast<double>(roc.positives), q = static_cast<double>(roc.negatives);
  roc.auc = (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * q);

  roc.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = n; i > 0;) {
    const double t = scores[order[i - 1]];
    while (i > 0 && scores[order[i - 1]] == t) {
      (labels[order[i - 1]] == 1 ? tp : fp) += 1;
      --i;
    }
    roc.points.push_back({static_cast<double>(fp) / q, static_cast<double>(tp) / p, t});
  }
  return roc;
}

void write_roc_csv(const std::filesystem::path& path, const RocCurve& roc) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "fpr,tpr\n";
  out.precision(17);
  for (const auto& p : roc.points) out << p.fpr << ',' << p.tpr << '\n';
  if (!out) throw IoError("error while writing " + path.string());
}

nlohmann::json Timing::to_json() const {
  return {{"train_seconds", train_seconds},
          {"inference_ms_per_sample", inference_ms_per_sample},
          {"repetitions_ms_per_sample", repetitions_ms_per_sample},
          {"model_size_bytes", model_size_bytes},
          {"reference",
           {{"inference_ms_per_sample", kReferenceInferenceMsPerSample},
            {"model_size_mb", kReferenceModelSizeMb}}}};
}

double median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

Timing measure_timing(TsanModel<float>& model, const data::WindowedDataset& dataset, std::size_t repetitions,
                      std::size_t batch, const std::optional<std::filesystem::path>& checkpoint) {
  Timing timing;
  if (checkpoint) timing.model_size_bytes = std::filesystem::file_size(*checkpoint);
  if (dataset.empty() || repetitions == 0) return timing;
  if (batch == 0) throw ConfigError("timing batch must be >= 1");
  const std::size_t n = dataset.size();
  std::vector<data::WindowedDataset> parts;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += batch) {
    idx.resize(std::min(n, start + batch) - start);
    std::iota(idx.begin(), idx.end(), start);
    parts.push_back(dataset.subset(idx));
  }
  auto run = [&] {
    for (const auto& part : parts) {
      Tape<float> tape;
      model.forward(tape, part.x_temporal, part.x_spatial, ForwardContext{Mode::eval, nullptr});
    }
  };
  run();
  for (std::size_t r = 0; r < repetitions; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    run();
    const std::chrono::duration<double, std::milli> elapsed = std::chrono::steady_clock::now() - t0;
    timing.repetitions_ms_per_sample.push_back(elapsed.count() / static_cast<double>(n));
  }
  timing.inference_ms_per_sample = median(timing.repetitions_ms_per_sample);
  return timing;
}

MetricsReport evaluate_scores(std::span<const double> scores, std::span<const int> labels, double threshold) {
  MetricsReport report;
  report.threshold = threshold;
  report.classification = confusion_and_prf1(scores, labels, threshold);
  const auto& c = report.classification;
  if (c.tp + c.fn > 0 && c.tn + c.fp > 0) {
    report.roc = auc_roc(scores, labels);
  } else {
    log::warn("evaluation labels hold a single class; AUC-ROC is undefined and omitted");
  }
  return report;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j = classification.to_json();
  j["threshold"] = threshold;
  j["auc_roc"] = roc ? nlohmann::json(roc->auc) : nlohmann::json(nullptr);
  j["roc_points"] = nlohmann::json::array();
  if (roc) {
    for (const auto& p : roc->points) j["roc_points"].push_back({p.fpr, p.tpr});
  }
  j["timing"] = timing.to_json();
  return j;
}

}  // namespace tsan::metrics
