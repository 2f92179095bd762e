#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsan/data/windows.hpp"
#include "tsan/model/tsan_model.hpp"

namespace tsan::metrics {

struct Classification {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Set when the metric's denominator was zero and 0 was reported instead.
  bool precision_undefined = false;
  bool recall_undefined = false;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  nlohmann::json to_json() const;
};

Classification from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn);

// Predictions are 1 iff score > threshold. Empty input or a length mismatch
// throws ContractError.
Classification confusion_and_prf1(std::span<const double> scores, std::span<const int> labels, double threshold);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // +inf for the (0, 0) endpoint
};

struct RocCurve {
  double auc = 0.0;
  std::vector<RocPoint> points;
  std::size_t positives = 0;
  std::size_t negatives = 0;

  // Accuracy of the classifier at one ROC point.
  double accuracy_at(const RocPoint& p) const;
};

// AUC as the Mann-Whitney rank statistic with midranks (ties count 1/2).
// ROC points are taken at every distinct score, thresholding with >=, and
// start at (0, 0) and end at (1, 1). Single-class labels throw ContractError.
RocCurve auc_roc(std::span<const double> scores, std::span<const int> labels);

void write_roc_csv(const std::filesystem::path& path, const RocCurve& roc);

struct Timing {
  double train_seconds = 0.0;
  double inference_ms_per_sample = 0.0;  // median over repetitions
  std::vector<double> repetitions_ms_per_sample;
  std::uint64_t model_size_bytes = 0;

  nlohmann::json to_json() const;
};

// Reference figures for the report header; not asserted anywhere.
inline constexpr double kReferenceInferenceMsPerSample = 0.83;
inline constexpr double kReferenceModelSizeMb = 11.4;

double median(std::vector<double> values);

// Times eval-mode batched inference over the whole dataset after one
// untimed warm-up pass. `checkpoint` (if given) supplies model_size_bytes.
Timing measure_timing(TsanModel<float>& model, const data::WindowedDataset& dataset, std::size_t repetitions,
                      std::size_t batch = 128, const std::optional<std::filesystem::path>& checkpoint = std::nullopt);

struct MetricsReport {
  double threshold = 0.5;
  Classification classification;
  std::optional<RocCurve> roc;  // absent when the labels hold a single class
  Timing timing;

  nlohmann::json to_json() const;
};

MetricsReport evaluate_scores(std::span<const double> scores, std::span<const int> labels, double threshold);

}  // namespace tsan::metrics
