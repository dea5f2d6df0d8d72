// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lftrank/encoder.hpp"

namespace lftrank {

// Named-tensor container:
//   "LFTR" | u16 version | u32 count |
//   per tensor: u16 name length | name | u8 rank | u32 dims[rank] | f32 data
// All integers and floats little-endian, data row-major.
inline constexpr std::uint16_t checkpoint_version = 1;

struct NamedTensor {
    std::string name;
    Tensor<float> tensor;
};

std::vector<std::uint8_t> encode_container(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_container(const std::vector<std::uint8_t>& bytes);

/// Writes through a temporary file renamed into place.
void write_container(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_container(const std::filesystem::path& path);

/// Saves every entry of store whose name starts with one of `prefixes`
/// (all entries when empty). Values are stored at 32-bit precision.
template <typename T>
void save_checkpoint(const ParamStore<T>& store, const std::filesystem::path& path,
                     const std::vector<std::string>& prefixes = {});

/// Reads an encoder checkpoint and validates it against config: every
/// expected name present with the expected shape, no unknown names.
template <typename T>
ParamStore<T> load_encoder_checkpoint(const std::filesystem::path& path, const EncoderConfig& config);

/// Overwrites entries of store from a checkpoint. Every tensor in the file
/// must already exist in store with the same shape.
template <typename T>
void load_into(ParamStore<T>& store, const std::filesystem::path& path);

}  // namespace lftrank
