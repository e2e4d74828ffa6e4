#pragma once

// On-disk checkpoint layout (one directory per checkpoint):
//   manifest.json  phase, step, key, config_hash, parent id, rng seed,
//                  architecture_id and role
//   index.json     ordered [{name, file, shape}] for every array
//   <file>         raw little-endian float32 values, one file per array

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "json.hpp"
#include "robosig/keys.hpp"
#include "robosig/params.hpp"

namespace robosig {

inline constexpr const char* kCheckpointFormat = "robosig-checkpoint-v1";

struct Manifest {
  std::string phase;
  long step = 0;
  std::optional<MessageKey> key;
  std::string config_hash;
  std::string parent_checkpoint_id;
  std::uint64_t rng_seed = 0;

  bool operator==(const Manifest&) const = default;
};

struct Checkpoint {
  ParamSet<float> params;
  Manifest manifest;

  bool operator==(const Checkpoint&) const = default;
};

// FNV-1a over a canonical (sorted-key, compact) JSON dump.
inline std::string config_hash(const nlohmann::json& config) {
  const std::string text = config.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace detail {

inline std::string array_file_name(std::size_t index, const std::string& name) {
  char prefix[8];
  std::snprintf(prefix, sizeof prefix, "%04zu_", index);
  return std::string(prefix) + name + ".f32";
}

inline std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
}

inline nlohmann::json read_json(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed JSON in " + file.string() + ": " + e.what());
  }
}

inline void write_text(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << text;
  if (!out) throw IoError("failed writing " + file.string());
}

}  // namespace detail

inline nlohmann::json manifest_to_json(const Manifest& m, const ParamSet<float>& params) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["architecture_id"] = params.architecture_id();
  j["role"] = to_string(params.role());
  j["phase"] = m.phase;
  j["step"] = m.step;
  j["key"] = m.key ? nlohmann::json(m.key->to_string()) : nlohmann::json(nullptr);
  j["config_hash"] = m.config_hash;
  j["parent_checkpoint_id"] = m.parent_checkpoint_id;
  j["rng_seed"] = m.rng_seed;
  return j;
}

inline void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());

  nlohmann::json index = nlohmann::json::array();
  const auto& entries = cp.params.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const std::string file = detail::array_file_name(i, e.name);
    index.push_back({{"name", e.name}, {"file", file}, {"shape", e.value.shape()}});

    std::vector<std::uint32_t> raw(e.value.size());
    for (std::size_t j = 0; j < raw.size(); ++j)
      raw[j] = detail::to_little_endian(std::bit_cast<std::uint32_t>(e.value[j]));
    std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write array '" + e.name + "' to " + (dir / file).string());
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size() * sizeof(std::uint32_t)));
    if (!out) throw IoError("failed writing array '" + e.name + "'");
  }
  detail::write_text(dir / "index.json", index.dump(2) + "\n");
  detail::write_text(dir / "manifest.json", manifest_to_json(cp.manifest, cp.params).dump(2) + "\n");
}

// `expected_architecture`, when non-empty, must match the manifest.
inline Checkpoint load_checkpoint(const std::filesystem::path& dir,
                                  const std::string& expected_architecture = {}) {
  if (!std::filesystem::is_directory(dir)) throw IoError("checkpoint not found: " + dir.string());
  const auto mj = detail::read_json(dir / "manifest.json");
  const auto ij = detail::read_json(dir / "index.json");

  Checkpoint cp;
  try {
    if (mj.at("format").get<std::string>() != kCheckpointFormat)
      throw IoError("unsupported checkpoint format in " + dir.string());
    const auto arch_id = mj.at("architecture_id").get<std::string>();
    if (!expected_architecture.empty() && arch_id != expected_architecture)
      throw IoError("checkpoint " + dir.string() + " has architecture_id '" + arch_id +
                    "', expected '" + expected_architecture + "'");
    cp.params = ParamSet<float>(arch_id, parse_role(mj.at("role").get<std::string>()));
    cp.manifest.phase = mj.at("phase").get<std::string>();
    cp.manifest.step = mj.at("step").get<long>();
    if (!mj.at("key").is_null()) cp.manifest.key = MessageKey::from_string(mj.at("key").get<std::string>());
    cp.manifest.config_hash = mj.at("config_hash").get<std::string>();
    cp.manifest.parent_checkpoint_id = mj.at("parent_checkpoint_id").get<std::string>();
    cp.manifest.rng_seed = mj.at("rng_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest in " + dir.string() + ": " + e.what());
  } catch (const ContractViolation& e) {
    throw IoError("malformed manifest in " + dir.string() + ": " + e.what());
  }

  for (const auto& item : ij) {
    std::string name = "<unnamed>";
    try {
      name = item.at("name").get<std::string>();
      const auto file = item.at("file").get<std::string>();
      const auto shape = item.at("shape").get<Shape>();
      const std::size_t count = shape_size(shape);
      const auto path = dir / file;
      std::ifstream in(path, std::ios::binary);
      if (!in) throw IoError("missing array file for '" + name + "': " + path.string());
      std::vector<std::uint32_t> raw(count);
      in.read(reinterpret_cast<char*>(raw.data()),
              static_cast<std::streamsize>(count * sizeof(std::uint32_t)));
      if (in.gcount() != static_cast<std::streamsize>(count * sizeof(std::uint32_t)) ||
          in.peek() != std::char_traits<char>::eof())
        throw IoError("array '" + name + "' has the wrong byte length in " + path.string());
      std::vector<float> values(count);
      for (std::size_t j = 0; j < count; ++j)
        values[j] = std::bit_cast<float>(detail::to_little_endian(raw[j]));
      cp.params.add(name, Tensor<float>(shape, std::move(values)));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("malformed index entry '" + name + "' in " + dir.string() + ": " + e.what());
    } catch (const ContractViolation& e) {
      throw IoError("invalid array '" + name + "' in " + dir.string() + ": " + e.what());
    }
  }
  return cp;
}

}  // namespace robosig
