#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsan/model/tsan_model.hpp"
#include "tsan/objective/multitask.hpp"

namespace tsan {

struct GradcheckOptions {
  std::size_t sample_count = 50;
  double step = 1e-6;        // central-difference half-width
  double tolerance = 1e-3;   // on |a - n| / max(|a|, |n|, floor)
  double floor = 1e-6;
  std::uint64_t seed = 0;
  LossWeights weights;
  // Paths that are always sampled (one random element each) on top of the
  // random draw.
  std::vector<std::string> include_paths;
  // Runs after the analytic gradients are computed; lets tests inject faults.
  std::function<void(ParameterSet<double>&)> after_backward;
};

struct GradcheckEntry {
  std::string path;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double max_rel_error = 0.0;
  std::vector<std::string> failing_paths;
  double tolerance = 0.0;

  bool passed() const noexcept { return failing_paths.empty(); }
  nlohmann::json to_json() const;
};

double relative_error(double analytic, double numeric, double floor);

// Compares analytic and central-difference gradients of the total loss on
// `batch` for randomly chosen trainable scalars. Runs the model in eval mode
// (dropout off, batch-norm on running statistics).
GradcheckReport gradcheck(TsanModel<double>& model, const TaskBatch<double>& batch, const GradcheckOptions& options);

// Double-precision copy of a float model, for gradient checking.
TsanModel<double> to_double(const TsanModel<float>& model);

}  // namespace tsan
