#pragma once

// Checkpoint layout: 8-byte little-endian header length, a JSON header, then
// each parameter's values as contiguous little-endian floats (4 or 8 bytes).

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sild/errors.hpp"
#include "sild/model.hpp"

namespace sild {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

struct CheckpointHeader {
  int precision = 64;
  std::string config_hash;
  nlohmann::ordered_json config;
};

inline Group parse_group(const std::string& s) {
  if (s == "theta") return Group::theta;
  if (s == "f_I") return Group::f_I;
  if (s == "f_V") return Group::f_V;
  throw LoadError("checkpoint: unknown parameter group '" + s + "'");
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ModelParams<T>& params, const CheckpointHeader& meta) {
  nlohmann::ordered_json h;
  h["format"] = "sild-checkpoint";
  h["version"] = 1;
  h["precision"] = static_cast<int>(sizeof(T) * 8);
  h["config_hash"] = meta.config_hash;
  h["config"] = meta.config;
  std::size_t offset = 0;
  for (const auto& p : params.list) {
    h["params"].push_back({{"name", p.name},
                           {"shape", p.value.shape},
                           {"group", to_string(p.group)},
                           {"offset", offset},
                           {"count", p.value.size()}});
    offset += p.value.size();
  }
  const std::string header = h.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write checkpoint " + path.string());
  const std::uint64_t len = header.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& p : params.list)
    out.write(reinterpret_cast<const char*>(p.value.data.data()), static_cast<std::streamsize>(p.value.size() * sizeof(T)));
  if (!out) throw LoadError("failed writing checkpoint " + path.string());
}

inline CheckpointHeader read_checkpoint_header(const std::filesystem::path& path, nlohmann::json* raw = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1u << 28)) throw LoadError("checkpoint " + path.string() + ": bad header length");
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) throw LoadError("checkpoint " + path.string() + ": truncated header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("checkpoint " + path.string() + ": " + e.what());
  }
  if (h.value("format", "") != "sild-checkpoint") throw LoadError("checkpoint " + path.string() + ": wrong format tag");
  CheckpointHeader m;
  m.precision = h.at("precision").get<int>();
  m.config_hash = h.at("config_hash").get<std::string>();
  m.config = h.at("config");
  if (raw) *raw = std::move(h);
  return m;
}

template <typename T>
ModelParams<T> load_checkpoint(const std::filesystem::path& path, CheckpointHeader* meta = nullptr) {
  nlohmann::json h;
  auto m = read_checkpoint_header(path, &h);
  if (m.precision != static_cast<int>(sizeof(T) * 8))
    throw LoadError("checkpoint " + path.string() + " stores " + std::to_string(m.precision) +
                    "-bit values; requested " + std::to_string(sizeof(T) * 8) + "-bit");
  std::ifstream in(path, std::ios::binary);
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  in.seekg(static_cast<std::streamoff>(sizeof(len) + len));
  ModelParams<T> params;
  for (const auto& p : h.at("params")) {
    Parameter<T> q{p.at("name").get<std::string>(), parse_group(p.at("group").get<std::string>()),
                   ad::Tensor<T>(p.at("shape").get<ad::Shape>())};
    if (q.value.size() != p.at("count").get<std::size_t>())
      throw LoadError("checkpoint: parameter " + q.name + " count does not match its shape");
    in.read(reinterpret_cast<char*>(q.value.data.data()), static_cast<std::streamsize>(q.value.size() * sizeof(T)));
    if (!in) throw LoadError("checkpoint " + path.string() + ": truncated payload at " + q.name);
    params.list.push_back(std::move(q));
  }
  if (meta) *meta = std::move(m);
  return params;
}

}  // namespace sild
