#include "tsan/data/nslkdd.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "tsan/errors.hpp"

namespace tsan::data {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_categorical(std::size_t column) {
  return column == kProtocolColumn || column == kServiceColumn || column == kFlagColumn;
}

[[noreturn]] void fail(std::size_t line, std::size_t column, const std::string& what) {
  throw ParseError("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what);
}

std::string format_number(double v) {
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    return std::to_string(static_cast<long long>(v));
  }
  std::ostringstream ss;
  ss << std::setprecision(6) << v;
  return ss.str();
}

}  // namespace

const std::array<std::string_view, kFeatureCount>& feature_names() {
  static constexpr std::array<std::string_view, kFeatureCount> names = {
      "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes", "land",
      "wrong_fragment", "urgent", "hot", "num_failed_logins", "logged_in", "num_compromised",
      "root_shell", "su_attempted", "num_root", "num_file_creations", "num_shells",
      "num_access_files", "num_outbound_cmds", "is_host_login", "is_guest_login", "count",
      "srv_count", "serror_rate", "srv_serror_rate", "rerror_rate", "srv_rerror_rate",
      "same_srv_rate", "diff_srv_rate", "srv_diff_host_rate", "dst_host_count",
      "dst_host_srv_count", "dst_host_same_srv_rate", "dst_host_diff_srv_rate",
      "dst_host_same_src_port_rate", "dst_host_srv_diff_host_rate", "dst_host_serror_rate",
      "dst_host_srv_serror_rate", "dst_host_rerror_rate", "dst_host_srv_rerror_rate"};
  return names;
}

const std::vector<std::string>& numeric_feature_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (std::size_t c = 0; c < kFeatureCount; ++c) {
      if (!is_categorical(c)) out.emplace_back(feature_names()[c]);
    }
    return out;
  }();
  return names;
}

std::size_t numeric_index(std::string_view feature_name) {
  const auto& names = numeric_feature_names();
  auto it = std::find(names.begin(), names.end(), feature_name);
  if (it == names.end()) throw ContractError("unknown numeric feature '" + std::string(feature_name) + "'");
  return static_cast<std::size_t>(it - names.begin());
}

const std::array<std::string_view, 3>& known_protocols() {
  static constexpr std::array<std::string_view, 3> protocols = {"tcp", "udp", "icmp"};
  return protocols;
}

RawRecord parse_record_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string_view> fields;
  fields.reserve(kFieldCount);
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (fields.size() != kFieldCount) {
    throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(kFieldCount) +
                     " comma-separated fields, found " + std::to_string(fields.size()));
  }
  RawRecord r;
  r.line = line_no;
  std::size_t numeric_pos = 0;
  for (std::size_t c = 0; c < kFeatureCount; ++c) {
    const std::string_view f = fields[c];
    if (is_categorical(c)) {
      if (f.empty()) fail(line_no, c + 1, "empty categorical value");
      continue;
    }
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc{} || ptr != f.data() + f.size() || !std::isfinite(v)) {
      fail(line_no, c + 1, "cannot parse '" + std::string(f) + "' as a number for " +
                               std::string(feature_names()[c]));
    }
    r.numeric[numeric_pos++] = v;
  }
  r.protocol = lower(fields[kProtocolColumn]);
  r.service = std::string(fields[kServiceColumn]);
  r.flag = std::string(fields[kFlagColumn]);
  const auto& protos = known_protocols();
  if (std::find(protos.begin(), protos.end(), r.protocol) == protos.end()) {
    fail(line_no, kProtocolColumn + 1, "protocol '" + r.protocol + "' is not one of tcp/udp/icmp");
  }
  r.label = std::string(fields[41]);
  if (r.label.empty()) fail(line_no, 42, "empty label");
  const std::string_view diff = fields[42];
  const auto [ptr, ec] = std::from_chars(diff.data(), diff.data() + diff.size(), r.difficulty);
  if (ec != std::errc{} || ptr != diff.data() + diff.size()) {
    fail(line_no, 43, "cannot parse difficulty '" + std::string(diff) + "' as an integer");
  }
  return r;
}

std::vector<RawRecord> parse_records(std::istream& in) {
  std::vector<RawRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    out.push_back(parse_record_line(line, line_no));
  }
  return out;
}

std::vector<RawRecord> parse_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open NSL-KDD file '" + path.string() + "'");
  try {
    return parse_records(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string format_record(const RawRecord& record) {
  std::string out;
  std::size_t numeric_pos = 0;
  for (std::size_t c = 0; c < kFeatureCount; ++c) {
    if (c) out.push_back(',');
    if (c == kProtocolColumn) {
      out += record.protocol;
    } else if (c == kServiceColumn) {
      out += record.service;
    } else if (c == kFlagColumn) {
      out += record.flag;
    } else {
      out += format_number(record.numeric[numeric_pos++]);
    }
  }
  out += ',' + record.label + ',' + std::to_string(record.difficulty);
  return out;
}

void write_records(const std::filesystem::path& path, std::span<const RawRecord> records) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (const auto& r : records) out << format_record(r) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

bool is_dos_label(std::string_view label) {
  static const std::set<std::string, std::less<>> dos = {"neptune", "smurf", "pod",
                                                         "teardrop", "land", "back"};
  return dos.contains(lower(label));
}

bool is_normal_label(std::string_view label) { return lower(label) == "normal"; }

BinarizedRecords binarize_labels(std::span<const RawRecord> records) {
  BinarizedRecords out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const std::string key = lower(r.label);
    int label = -1;
    if (is_dos_label(key)) {
      label = 1;
    } else if (key == "normal") {
      label = 0;
    }
    if (label < 0) {
      ++out.dropped_by_label[key];
      continue;
    }
    ++out.kept_by_label[key];
    out.records.push_back(r);
    out.labels.push_back(label);
    out.source_index.push_back(i);
  }
  return out;
}

FeatureSchema FeatureSchema::fit(std::span<const RawRecord> train) {
  FeatureSchema s;
  s.numeric_names = numeric_feature_names();
  std::set<std::string> protocols, services, flags;
  for (const auto& r : train) {
    protocols.insert(r.protocol);
    services.insert(r.service);
    flags.insert(r.flag);
  }
  for (auto p : known_protocols()) {
    if (protocols.contains(std::string(p))) s.protocol_vocab.emplace_back(p);
  }
  s.service_vocab.assign(services.begin(), services.end());
  s.flag_vocab.assign(flags.begin(), flags.end());
  return s;
}

std::optional<std::size_t> FeatureSchema::protocol_index(std::string_view protocol) const {
  auto it = std::find(protocol_vocab.begin(), protocol_vocab.end(), protocol);
  if (it == protocol_vocab.end()) return std::nullopt;
  return static_cast<std::size_t>(it - protocol_vocab.begin());
}

nlohmann::json FeatureSchema::to_json() const {
  return {{"numeric", numeric_names},
          {"protocol", protocol_vocab},
          {"service", service_vocab},
          {"flag", flag_vocab},
          {"width", width()}};
}

FeatureSchema FeatureSchema::from_json(const nlohmann::json& j) {
  FeatureSchema s;
  s.numeric_names = j.at("numeric").get<std::vector<std::string>>();
  s.protocol_vocab = j.at("protocol").get<std::vector<std::string>>();
  s.service_vocab = j.at("service").get<std::vector<std::string>>();
  s.flag_vocab = j.at("flag").get<std::vector<std::string>>();
  return s;
}

nlohmann::json ScalerStats::to_json() const { return {{"mean", mean}, {"std", stddev}}; }

ScalerStats ScalerStats::from_json(const nlohmann::json& j) {
  ScalerStats s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.stddev = j.at("std").get<std::vector<double>>();
  if (s.mean.size() != s.stddev.size()) throw ParseError("scaler: mean/std length mismatch");
  return s;
}

ScalerStats fit_scaler(std::span<const RawRecord> train, const FeatureSchema& schema) {
  const std::size_t d = schema.numeric_names.size();
  ScalerStats s;
  s.mean.assign(d, 0.0);
  s.stddev.assign(d, ScalerStats::kMinStd);
  if (train.empty()) return s;
  const double n = static_cast<double>(train.size());
  for (const auto& r : train) {
    for (std::size_t c = 0; c < d; ++c) s.mean[c] += r.numeric[c];
  }
  for (auto& m : s.mean) m /= n;
  std::vector<double> var(d, 0.0);
  for (const auto& r : train) {
    for (std::size_t c = 0; c < d; ++c) {
      const double dlt = r.numeric[c] - s.mean[c];
      var[c] += dlt * dlt;
    }
  }
  for (std::size_t c = 0; c < d; ++c) s.stddev[c] = std::max(std::sqrt(var[c] / n), ScalerStats::kMinStd);
  return s;
}

std::vector<double> apply_scaler(std::span<const double> numeric, const ScalerStats& stats) {
  if (numeric.size() != stats.mean.size()) {
    throw ShapeError("apply_scaler: " + std::to_string(numeric.size()) + " values for " +
                     std::to_string(stats.mean.size()) + " fitted columns");
  }
  std::vector<double> out(numeric.size());
  for (std::size_t c = 0; c < numeric.size(); ++c) out[c] = stats.scale(c, numeric[c]);
  return out;
}

Tensor encode_records(std::span<const RawRecord> records, const FeatureSchema& schema,
                      const ScalerStats& stats) {
  const std::size_t f = schema.width();
  const std::size_t d = schema.numeric_names.size();
  if (stats.mean.size() != d) throw ShapeError("encode_records: scaler does not match schema");
  Tensor out({records.size(), f});
  auto index_of = [](const std::vector<std::string>& vocab, const std::string& v) -> std::optional<std::size_t> {
    auto it = std::lower_bound(vocab.begin(), vocab.end(), v);
    if (it == vocab.end() || *it != v) return std::nullopt;
    return static_cast<std::size_t>(it - vocab.begin());
  };
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    float* row = out.raw() + i * f;
    for (std::size_t c = 0; c < d; ++c) row[c] = static_cast<float>(stats.scale(c, r.numeric[c]));
    if (auto p = schema.protocol_index(r.protocol)) row[schema.protocol_offset() + *p] = 1.0f;
    if (auto sidx = index_of(schema.service_vocab, r.service)) row[schema.service_offset() + *sidx] = 1.0f;
    if (auto fidx = index_of(schema.flag_vocab, r.flag)) row[schema.flag_offset() + *fidx] = 1.0f;
  }
  return out;
}

std::vector<int> protocol_indices(std::span<const RawRecord> records, const FeatureSchema& schema) {
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    auto p = schema.protocol_index(r.protocol);
    out.push_back(p ? static_cast<int>(*p) : -1);
  }
  return out;
}

}  // namespace tsan::data
