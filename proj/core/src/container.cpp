#include "tsan/autodiff/container.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tsan {

const Tensor* Container::find(std::string_view path) const {
  for (const auto& e : entries) {
    if (e.path == path) return &e.tensor;
  }
  return nullptr;
}

const Tensor& Container::at(std::string_view path) const {
  if (const Tensor* t = find(path)) return *t;
  throw ContractError("container has no entry '" + std::string(path) + "'");
}

void Container::add(std::string path, Tensor tensor) {
  if (find(path) != nullptr) throw ContractError("duplicate container entry '" + path + "'");
  entries.push_back({std::move(path), std::move(tensor)});
}

std::string encode_container(const Container& container) {
  nlohmann::ordered_json header;
  header["version"] = Container::kVersion;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  std::size_t offset = 0;
  for (const auto& e : container.entries) {
    nlohmann::ordered_json item;
    item["path"] = e.path;
    item["shape"] = e.tensor.shape();
    item["offset"] = offset;
    item["len"] = e.tensor.size();
    list.push_back(std::move(item));
    offset += e.tensor.size() * sizeof(float);
  }
  header["params"] = std::move(list);
  for (const auto& [key, value] : container.metadata.items()) {
    if (key == "version" || key == "params") {
      throw ContractError("container metadata may not override '" + key + "'");
    }
    header[key] = value;
  }
  std::string out = header.dump();
  out.push_back('\n');
  out.reserve(out.size() + offset);
  for (const auto& e : container.entries) {
    for (float v : e.tensor.data()) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
    }
  }
  return out;
}

Container decode_container(std::string_view bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) throw ParseError("container: missing header line");
  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(bytes.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("container: malformed header: ") + e.what());
  }
  if (!header.is_object() || header.value("version", 0) != Container::kVersion || !header.contains("params")) {
    throw ParseError("container: unsupported header (expected version 1 with params)");
  }
  const std::string_view blob = bytes.substr(nl + 1);
  Container c;
  for (const auto& item : header["params"]) {
    const auto path = item.at("path").get<std::string>();
    const auto shape = item.at("shape").get<Shape>();
    const auto offset = item.at("offset").get<std::size_t>();
    const auto len = item.at("len").get<std::size_t>();
    if (numel(shape) != len) {
      throw ParseError("container: entry '" + path + "' shape " + to_string(shape) + " disagrees with len");
    }
    if (offset > blob.size() || len * sizeof(float) > blob.size() - offset) {
      throw ParseError("container: entry '" + path + "' points past the end of the file");
    }
    std::vector<float> data(len);
    for (std::size_t i = 0; i < len; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(blob[offset + i * 4 + b])) << (8 * b);
      }
      data[i] = std::bit_cast<float>(bits);
    }
    c.add(path, Tensor(shape, std::move(data)));
  }
  for (const auto& [key, value] : header.items()) {
    if (key != "version" && key != "params") c.metadata[key] = value;
  }
  return c;
}

void write_container(const std::filesystem::path& path, const Container& container) {
  const std::string bytes = encode_container(container);
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_container(ss.str());
}

bool looks_like_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  char buf[12] = {};
  in.read(buf, sizeof(buf));
  return std::string_view(buf, static_cast<std::size_t>(in.gcount())).starts_with("{\"version\":");
}

Container to_container(const ParameterSet<float>& params) {
  Container c;
  for (const auto& p : params) c.add(p.path, p.value);
  return c;
}

void load_into(const Container& container, ParameterSet<float>& params) {
  for (auto& p : params) {
    const Tensor* t = container.find(p.path);
    if (t == nullptr) throw ShapeError("checkpoint is missing parameter '" + p.path + "'");
    if (t->shape() != p.value.shape()) {
      throw ShapeError("checkpoint parameter '" + p.path + "' has shape " + to_string(t->shape()) +
                       ", model expects " + to_string(p.value.shape()));
    }
    p.value = *t;
  }
}

}  // namespace tsan
