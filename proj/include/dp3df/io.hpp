// SPDX-License-Identifier: Apache-2.0
//
// File formats:
//   PPM        binary P6, maxval 255, frames [H,W,3] in [0,1]
//   container  "DPT1", little-endian: u32 section count, then per section
//              u32 name length, UTF-8 name, u32 rank, u64 dims[rank],
//              float32 payload
//   config     line-based "key = value", '#' starts a comment
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dp3df/tensor.hpp"

namespace dp3df {

std::vector<std::uint8_t> encode_ppm(const Tensor& frame);
Tensor decode_ppm(const std::vector<std::uint8_t>& bytes);
void write_ppm(const std::filesystem::path& path, const Tensor& frame);
Tensor read_ppm(const std::filesystem::path& path);

/// Rounds to the 8-bit grid the PPM format stores.
Tensor quantize_8bit(const Tensor& frame);

using TensorMap = std::map<std::string, Tensor>;

std::vector<std::uint8_t> encode_container(const TensorMap& sections);
TensorMap decode_container(const std::vector<std::uint8_t>& bytes);
void write_container(const std::filesystem::path& path, const TensorMap& sections);
TensorMap read_container(const std::filesystem::path& path);

using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config(const std::string& text);
ConfigMap read_config(const std::filesystem::path& path);
std::string format_config(const ConfigMap& config);
void write_config(const std::filesystem::path& path, const ConfigMap& config);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace dp3df
