#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsan/data/windows.hpp"
#include "tsan/model/tsan_model.hpp"

namespace tsan {

struct PretrainConfig {
  std::size_t epochs = 3;  // 0 disables pretraining
  std::size_t batch = 128;
  double lr = 1e-3;
  std::uint64_t seed = 42;

  void validate() const;
  nlohmann::json to_json() const;
  static PretrainConfig from_json(const nlohmann::json& j);
};

// Next-step prediction pairs: for a window ending at row i the target is
// rows[i + 1]. Windows without a following row are left out.
struct NextStepPairs {
  Tensor x_temporal;                    // (M, w, f)
  Tensor target;                        // (M, f)
  std::vector<std::size_t> window_index;  // index into the source dataset
  std::vector<std::size_t> target_row;    // row index of each target

  std::size_t size() const noexcept { return window_index.size(); }
};

NextStepPairs next_step_pairs(const data::WindowedDataset& windows, const Tensor& rows);

struct PretrainCurve {
  double initial_loss = 0.0;  // full-data eval-mode MSE before training
  double final_loss = 0.0;    // and after
  std::vector<double> epoch_loss;  // mean training-batch MSE per epoch

  nlohmann::json to_json() const;
};

// Trains the temporal encoder of `model` under MSE(dense(h_temp), x_{t+1}).
// The prediction head lives only for the duration of the call. Throws
// ContractError when `pairs` is empty.
PretrainCurve pretrain_temporal(TsanModel<float>& model, const NextStepPairs& pairs, const PretrainConfig& config);

// Trains the spatial encoder of `model` under MSE(dense(h_spat), x) over
// `rows` (N, f).
PretrainCurve pretrain_spatial(TsanModel<float>& model, const Tensor& rows, const PretrainConfig& config);

// Copy of every temporal/spatial encoder parameter in `params`.
ParameterSet<float> encoder_parameters(const ParameterSet<float>& params);

// Copies every encoder path of `pretrained` that `target` also holds and
// returns the copied paths in order. Fusion and head parameters are never
// touched. A shape mismatch throws ShapeError naming the path.
std::vector<std::string> transfer_weights(const ParameterSet<float>& pretrained, ParameterSet<float>& target);

struct PretrainResult {
  ParameterSet<float> encoders;
  PretrainCurve temporal;
  PretrainCurve spatial;
};

// Builds a model from `config`, pretrains whichever encoders it enables on
// the training windows (temporal: next-step pairs over `train_rows`;
// spatial: reconstruction of the windows' last records) and returns the
// encoder parameters.
PretrainResult pretrain_encoders(const ModelConfig& config, const data::WindowedDataset& train,
                                 const Tensor& train_rows, const PretrainConfig& pretrain);

}  // namespace tsan
