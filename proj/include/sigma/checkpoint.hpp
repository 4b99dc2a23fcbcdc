#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "sigma/vae.hpp"

namespace sigma {

inline constexpr int kCheckpointVersion = 1;

nlohmann::ordered_json vae_config_to_json(const SigmaVaeConfig& config);
SigmaVaeConfig vae_config_from_json(const nlohmann::json& j);

/// JSON envelope {format, version, config, metadata, tensors}; each tensor is
/// {name, shape, data}. Doubles are written in shortest round-trip form, so
/// save -> load -> save reproduces the file byte for byte.
std::string checkpoint_to_string(const Checkpoint& ckpt);
Checkpoint checkpoint_from_string(const std::string& text);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sigma
