#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsan/autodiff/tensor.hpp"

namespace tsan::data {

inline constexpr std::size_t kFeatureCount = 41;
inline constexpr std::size_t kFieldCount = 43;  // 41 features + label + difficulty
inline constexpr std::size_t kNumericCount = 38;
inline constexpr std::size_t kProtocolColumn = 1;
inline constexpr std::size_t kServiceColumn = 2;
inline constexpr std::size_t kFlagColumn = 3;

// NSL-KDD feature names in file order.
const std::array<std::string_view, kFeatureCount>& feature_names();
// Names of the 38 numeric features, in file order with the three categorical
// columns removed. This is also their order in an encoded row.
const std::vector<std::string>& numeric_feature_names();
// Position of a numeric feature in RawRecord::numeric / an encoded row.
std::size_t numeric_index(std::string_view feature_name);

// Protocols in canonical one-hot order.
const std::array<std::string_view, 3>& known_protocols();

struct RawRecord {
  std::array<double, kNumericCount> numeric{};
  std::string protocol;
  std::string service;
  std::string flag;
  std::string label;
  int difficulty = 0;
  std::size_t line = 0;  // 1-based source line; 0 for generated records
};

// Parses one comma-separated line. Errors name the line and 1-based column.
RawRecord parse_record_line(std::string_view line, std::size_t line_no);
std::vector<RawRecord> parse_records(std::istream& in);
std::vector<RawRecord> parse_records(const std::filesystem::path& path);

std::string format_record(const RawRecord& record);
void write_records(const std::filesystem::path& path, std::span<const RawRecord> records);

// DoS variants labeled positive: neptune, smurf, pod, teardrop, land, back.
bool is_dos_label(std::string_view label);
bool is_normal_label(std::string_view label);

struct BinarizedRecords {
  std::vector<RawRecord> records;
  std::vector<int> labels;                // 1 = DoS, 0 = normal
  std::vector<std::size_t> source_index;  // position in the unfiltered input
  std::map<std::string, std::size_t> kept_by_label;
  std::map<std::string, std::size_t> dropped_by_label;
};

// Keeps DoS and normal records in their original relative order and drops
// every other attack type.
BinarizedRecords binarize_labels(std::span<const RawRecord> records);

struct FeatureSchema {
  std::vector<std::string> numeric_names;
  std::vector<std::string> protocol_vocab;
  std::vector<std::string> service_vocab;
  std::vector<std::string> flag_vocab;

  // Vocabularies come from `train` only: protocols in canonical order
  // (tcp, udp, icmp) restricted to those present, services and flags sorted.
  static FeatureSchema fit(std::span<const RawRecord> train);

  std::size_t width() const noexcept {
    return numeric_names.size() + protocol_vocab.size() + service_vocab.size() + flag_vocab.size();
  }
  std::size_t protocol_offset() const noexcept { return numeric_names.size(); }
  std::size_t service_offset() const noexcept { return protocol_offset() + protocol_vocab.size(); }
  std::size_t flag_offset() const noexcept { return service_offset() + service_vocab.size(); }

  std::optional<std::size_t> protocol_index(std::string_view protocol) const;

  nlohmann::json to_json() const;
  static FeatureSchema from_json(const nlohmann::json& j);
};

struct ScalerStats {
  static constexpr double kMinStd = 1e-8;

  std::vector<double> mean;
  std::vector<double> stddev;  // population, clamped to >= kMinStd

  double scale(std::size_t column, double x) const { return (x - mean[column]) / stddev[column]; }

  nlohmann::json to_json() const;
  static ScalerStats from_json(const nlohmann::json& j);
};

ScalerStats fit_scaler(std::span<const RawRecord> train, const FeatureSchema& schema);
std::vector<double> apply_scaler(std::span<const double> numeric, const ScalerStats& stats);

// Encodes records into an (n, f) tensor: scaled numeric features followed by
// one-hot protocol, service and flag blocks. Unseen categories encode as
// all-zero blocks.
Tensor encode_records(std::span<const RawRecord> records, const FeatureSchema& schema,
                      const ScalerStats& stats);
// Protocol vocabulary index per record, -1 when unseen.
std::vector<int> protocol_indices(std::span<const RawRecord> records, const FeatureSchema& schema);

}  // namespace tsan::data
