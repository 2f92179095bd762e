#include "tsan/data/preprocess.hpp"

#include <algorithm>
#include <random>

#include "tsan/errors.hpp"

namespace tsan::data {
namespace {

nlohmann::json count_summary(const BinarizedRecords& b, std::size_t total) {
  std::size_t dos = 0, normal = 0;
  double dos_difficulty = 0.0, normal_difficulty = 0.0;
  for (std::size_t i = 0; i < b.labels.size(); ++i) {
    if (b.labels[i] == 1) {
      ++dos;
      dos_difficulty += b.records[i].difficulty;
    } else {
      ++normal;
      normal_difficulty += b.records[i].difficulty;
    }
  }
  std::size_t dropped = 0;
  for (const auto& [label, n] : b.dropped_by_label) dropped += n;
  return {{"records", total},
          {"kept_dos", dos},
          {"kept_normal", normal},
          {"dropped", dropped},
          {"kept_by_label", b.kept_by_label},
          {"dropped_by_label", b.dropped_by_label},
          {"mean_difficulty_dos", dos ? dos_difficulty / static_cast<double>(dos) : 0.0},
          {"mean_difficulty_normal", normal ? normal_difficulty / static_cast<double>(normal) : 0.0}};
}

nlohmann::json window_summary(const WindowedDataset& ds) {
  std::size_t pos = 0;
  for (std::size_t j = 0; j < ds.size(); ++j) pos += ds.y[j] > 0.5f ? 1 : 0;
  return {{"windows", ds.size()}, {"positive", pos}, {"negative", ds.size() - pos}};
}

}  // namespace

std::vector<RawRecord> subsample(std::span<const RawRecord> records, std::size_t max_records,
                                 std::uint64_t seed) {
  if (max_records == 0 || records.size() <= max_records) {
    return {records.begin(), records.end()};
  }
  std::vector<std::size_t> idx(records.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < max_records; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(max_records);
  std::sort(idx.begin(), idx.end());
  std::vector<RawRecord> out;
  out.reserve(max_records);
  for (std::size_t i : idx) out.push_back(records[i]);
  return out;
}

WindowedDataset encode_windows(std::span<const RawRecord> records, const FeatureSchema& schema,
                               const ScalerStats& scaler, std::size_t window, std::size_t stride) {
  const BinarizedRecords bin = binarize_labels(records);
  return build_windows(encode_records(bin.records, schema, scaler), bin.labels, protocol_indices(bin.records, schema),
                       numeric_index("count"), window, stride);
}

PreparedData prepare(std::span<const RawRecord> train_raw, std::span<const RawRecord> test_raw,
                     const PreprocessOptions& options) {
  const auto train_records = subsample(train_raw, options.max_train_records, options.split.seed);
  const auto test_records = subsample(test_raw, options.max_test_records, options.split.seed + 1);

  const BinarizedRecords train_bin = binarize_labels(train_records);
  const BinarizedRecords test_bin = binarize_labels(test_records);
  if (train_bin.records.empty()) throw ContractError("training data holds no DoS or normal records");

  PreparedData out;
  out.schema = FeatureSchema::fit(train_bin.records);
  out.scaler = fit_scaler(train_bin.records, out.schema);
  out.train_rows = encode_records(train_bin.records, out.schema, out.scaler);

  const std::size_t traffic_column = numeric_index("count");
  const auto train_proto = protocol_indices(train_bin.records, out.schema);
  const WindowedDataset all_train = build_windows(out.train_rows, train_bin.labels, train_proto,
                                                  traffic_column, options.window, options.stride);
  out.test = encode_windows(test_records, out.schema, out.scaler, options.window, options.stride);
  SplitResult split = stratified_split(all_train, options.split);
  out.train = std::move(split.train);
  out.validation = std::move(split.validation);

  out.summary = {{"train_file", count_summary(train_bin, train_records.size())},
                 {"test_file", count_summary(test_bin, test_records.size())},
                 {"features", out.schema.width()},
                 {"window", options.window},
                 {"stride", options.stride},
                 {"n_protocol", out.schema.protocol_vocab.size()},
                 {"windows",
                  {{"train", window_summary(out.train)},
                   {"validation", window_summary(out.validation)},
                   {"test", window_summary(out.test)}}}};
  return out;
}

}  // namespace tsan::data
