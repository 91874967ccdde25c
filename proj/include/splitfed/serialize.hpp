#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>

#include "splitfed/bytes.hpp"
#include "splitfed/tensor.hpp"

namespace splitfed {

// Tensor encoding shared by the wire protocol and both file containers:
// u8 rank, rank x u32 dims, then product(dims) x f32, all little-endian.
void write_tensor(ByteWriter& w, const Tensor& t);
// Validates dims against the remaining input before allocating.
Tensor read_tensor(ByteReader& r);

// SFPS container: "SFPS", u8 version 0x01, u32 entry count, then per entry a
// 16-bit-length-prefixed name followed by the tensor encoding.
inline constexpr std::array<std::uint8_t, 4> kParamSetMagic{'S', 'F', 'P', 'S'};
inline constexpr std::uint8_t kParamSetVersion = 0x01;

Bytes serialize_paramset(const ParamSet& params);
ParamSet parse_paramset(std::span<const std::uint8_t> bytes);
void save_paramset(const ParamSet& params, const std::filesystem::path& path);
ParamSet load_paramset(const std::filesystem::path& path);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace splitfed
