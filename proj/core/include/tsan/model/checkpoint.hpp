#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "tsan/autodiff/container.hpp"
#include "tsan/model/tsan_model.hpp"

namespace tsan {

// Checkpoint = parameter container whose header also carries the model
// config under "config" plus any `extra` top-level keys.
Container make_checkpoint(const TsanModel<float>& model,
                          const nlohmann::ordered_json& extra = nlohmann::ordered_json::object());

// Rebuilds the model described by the header's "config" and loads every
// parameter. Missing or mis-shaped entries throw ShapeError.
TsanModel<float> load_checkpoint(const Container& checkpoint);
TsanModel<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace tsan
