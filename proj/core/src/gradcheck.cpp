#include "tsan/train/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "tsan/errors.hpp"

namespace tsan {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

nlohmann::json GradcheckReport::to_json() const {
  nlohmann::json e = nlohmann::json::array();
  for (const auto& x : entries) {
    e.push_back({{"path", x.path},
                 {"index", x.index},
                 {"analytic", x.analytic},
                 {"numeric", x.numeric},
                 {"rel_error", x.rel_error}});
  }
  return {{"passed", passed()},
          {"max_rel_error", max_rel_error},
          {"tolerance", tolerance},
          {"samples", entries.size()},
          {"failing_paths", failing_paths},
          {"entries", e}};
}

GradcheckReport gradcheck(TsanModel<double>& model, const TaskBatch<double>& batch, const GradcheckOptions& options) {
  GradcheckReport report;
  report.tolerance = options.tolerance;
  auto& params = model.params();
  const ForwardContext eval{Mode::eval, nullptr};
  auto loss_value = [&] {
    Tape<double> tape;
    const auto out = model.forward(tape, batch.x_temporal, batch.x_spatial, eval);
    return compute_losses(out, batch, options.weights).total.value().item();
  };

  {
    Tape<double> tape;
    const auto out = model.forward(tape, batch.x_temporal, batch.x_spatial, eval);
    backward(tape, compute_losses(out, batch, options.weights).total, params);
  }
  if (options.after_backward) options.after_backward(params);

  std::vector<Parameter<double>*> candidates;
  for (auto& p : params) {
    if (p.trainable && p.value.size() > 0) candidates.push_back(&p);
  }
  if (candidates.empty()) return report;

  std::mt19937_64 rng(options.seed);
  std::vector<std::pair<Parameter<double>*, std::size_t>> samples;
  auto pick_index = [&](const Parameter<double>& p) {
    return std::uniform_int_distribution<std::size_t>(0, p.value.size() - 1)(rng);
  };
  for (const auto& path : options.include_paths) {
    Parameter<double>& p = params.at(path);
    samples.emplace_back(&p, pick_index(p));
  }
  std::uniform_int_distribution<std::size_t> pick_param(0, candidates.size() - 1);
  for (std::size_t s = 0; s < options.sample_count; ++s) {
    Parameter<double>* p = candidates[pick_param(rng)];
    samples.emplace_back(p, pick_index(*p));
  }

  std::set<std::string> failing;
  for (const auto& [p, index] : samples) {
    double& v = p->value[index];
    const double saved = v;
    v = saved + options.step;
    const double up = loss_value();
    v = saved - options.step;
    const double down = loss_value();
    v = saved;
    GradcheckEntry entry{p->path, index, p->grad[index], (up - down) / (2.0 * options.step), 0.0};
    entry.rel_error = relative_error(entry.analytic, entry.numeric, options.floor);
    report.max_rel_error = std::max(report.max_rel_error, entry.rel_error);
    if (!(entry.rel_error < options.tolerance)) failing.insert(entry.path);
    report.entries.push_back(std::move(entry));
  }
  report.failing_paths.assign(failing.begin(), failing.end());
  return report;
}

TsanModel<double> to_double(const TsanModel<float>& model) {
  TsanModel<double> out(model.config());
  for (auto& p : out.params()) p.value = model.params().at(p.path).value.cast<double>();
  return out;
}

}  // namespace tsan
