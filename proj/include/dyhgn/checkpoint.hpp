#pragma once

#include <filesystem>

#include <json.hpp>

#include "dyhgn/models.hpp"

namespace dyhgn {

// model.bin holds the parameters as little-endian 64-bit floats back to back;
// model.json lists name, shape, byte offset and byte count of each, plus `meta`.
void save_checkpoint(const Model& model, const std::filesystem::path& dir, const nlohmann::json& meta);

// Reads model.json (the manifest) from `dir`.
nlohmann::json read_manifest(const std::filesystem::path& dir);

// Restores every parameter of `model` from `dir`; a missing or mis-shaped
// entry is a ValidationError.
void load_checkpoint(Model& model, const std::filesystem::path& dir);

}  // namespace dyhgn
