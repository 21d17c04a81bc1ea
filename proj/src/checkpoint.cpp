#include "dyhgn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include "dyhgn/errors.hpp"

namespace dyhgn {

namespace {

void put_le(std::ostream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(bytes, 8);
}

double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& dir, const nlohmann::json& meta) {
  std::filesystem::create_directories(dir);
  std::ofstream bin(dir / "model.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + (dir / "model.bin").string());
  nlohmann::json entries = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : model.parameters()) {
    for (auto v : t.values()) put_le(bin, v);
    const auto bytes = t.numel() * 8;
    entries.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"bytes", bytes}});
    offset += bytes;
  }
  nlohmann::json manifest{{"format", "f64-le"},
                          {"total_bytes", offset},
                          {"parameters", entries},
                          {"config", to_json(model.config())},
                          {"output_dim", model.output_dim()},
                          {"meta", meta}};
  std::ofstream(dir / "model.json", std::ios::binary) << manifest.dump(2) << '\n';
}

nlohmann::json read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) throw ValidationError("missing checkpoint manifest " + (dir / "model.json").string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint manifest: " + std::string(e.what()));
  }
}

void load_checkpoint(Model& model, const std::filesystem::path& dir) {
  const auto manifest = read_manifest(dir);
  std::ifstream bin(dir / "model.bin", std::ios::binary);
  if (!bin) throw ValidationError("missing checkpoint data " + (dir / "model.bin").string());
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  std::map<std::string, std::vector<double>> values;
  for (const auto& entry : manifest.at("parameters")) {
    const auto name = entry.at("name").get<std::string>();
    const auto offset = entry.at("offset").get<std::size_t>();
    const auto bytes = entry.at("bytes").get<std::size_t>();
    if (bytes % 8 != 0 || offset + bytes > blob.size()) {
      throw ValidationError("checkpoint entry " + name + " exceeds model.bin");
    }
    std::vector<double> v(bytes / 8);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = get_le(blob.data() + offset + 8 * i);
    values[name] = std::move(v);
  }
  for (const auto& [name, t] : model.parameters()) {
    auto it = values.find(name);
    if (it == values.end()) throw ValidationError("checkpoint lacks parameter " + name);
    if (it->second.size() != t.numel()) {
      throw ValidationError("checkpoint parameter " + name + " has " + std::to_string(it->second.size()) +
                            " values, model expects " + shape_string(t.shape()));
    }
  }
  model.assign(values);
}

}  // namespace dyhgn
