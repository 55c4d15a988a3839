#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ktts/params.hpp"
#include "ktts/types.hpp"

namespace ktts::train {

inline constexpr uint32_t kCheckpointVersion = 1;

// On-disk training state: "KTTS" magic, u32 version, length-prefixed config
// snapshot, global step, then named parameter-store sections of per-tensor
// records (name, rank, dims, dtype tag, little-endian float64 payload).
struct Checkpoint {
  uint32_t version = kCheckpointVersion;
  std::string config_text;
  uint64_t global_step = 0;
  std::vector<std::pair<std::string, nets::ParameterStore>> sections;

  nets::ParameterStore& section(const std::string& name);
  const nets::ParameterStore& section(const std::string& name) const;
  bool has_section(const std::string& name) const;
};

// Atomic: writes to a temp file in the same directory, then renames.
void save_checkpoint(const Checkpoint& c, const std::string& path);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace ktts::train
