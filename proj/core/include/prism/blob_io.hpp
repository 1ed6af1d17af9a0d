#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prism/optim.hpp"

namespace prism::io {

// Key order matters for byte-identical reruns.
using Json = nlohmann::ordered_json;

/// Atomic file writes: write to <path>.tmp then rename.
void write_bytes_atomic(const std::filesystem::path& path,
                        const void* data, size_t size);
void write_text_atomic(const std::filesystem::path& path,
                       const std::string& text);
void write_json_atomic(const std::filesystem::path& path, const Json& j);

std::string read_text(const std::filesystem::path& path);
Json read_json(const std::filesystem::path& path);

/// Raw little-endian float32 blob, row-major.
void write_f32_blob(const std::filesystem::path& path,
                    const std::vector<float>& values);
std::vector<float> read_f32_blob(const std::filesystem::path& path);

/// Checkpoint = JSON manifest (shapes, hyperparameters, stage, seed) next to
/// an f32le parameter blob. Both written atomically; the manifest lists the
/// parameter order used in the blob.
void save_checkpoint(const std::filesystem::path& prefix,
                     const ad::ParamStore<float>& params,
                     const std::string& stage, uint64_t seed,
                     const Json& hyperparameters);
ad::ParamStore<float> load_checkpoint(const std::filesystem::path& prefix,
                                      Json* manifest_out = nullptr);

}  // namespace prism::io
