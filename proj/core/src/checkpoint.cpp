#include "tsan/model/checkpoint.hpp"

#include "tsan/errors.hpp"

namespace tsan {

Container make_checkpoint(const TsanModel<float>& model, const nlohmann::ordered_json& extra) {
  Container c = to_container(model.params());
  c.metadata["kind"] = "checkpoint";
  c.metadata["config"] = nlohmann::ordered_json::parse(model.config().to_json().dump());
  for (const auto& [key, value] : extra.items()) c.metadata[key] = value;
  return c;
}

TsanModel<float> load_checkpoint(const Container& checkpoint) {
  if (!checkpoint.metadata.contains("config")) {
    throw ParseError("checkpoint header has no \"config\" entry");
  }
  const auto config = ModelConfig::from_json(nlohmann::json::parse(checkpoint.metadata["config"].dump()));
  TsanModel<float> model(config);
  load_into(checkpoint, model.params());
  return model;
}

TsanModel<float> load_checkpoint(const std::filesystem::path& path) { return load_checkpoint(read_container(path)); }

}  // namespace tsan
