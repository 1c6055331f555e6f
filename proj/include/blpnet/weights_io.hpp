#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "blpnet/nn.hpp"

namespace blpnet {

// Binary container, little-endian:
//   "BLPW" | u32 version = 1 | u32 record_count
//   per record: u16 name_len | name (UTF-8) | u8 rank | u32 dims[rank] | f32 values[prod(dims)]
// A parametric layer contributes two records, kernel then bias.
inline constexpr std::uint32_t kWeightFormatVersion = 1;

enum class WeightFormatErrc { BadMagic, VersionMismatch, Truncated, DimensionOverflow, Malformed, Io };

const char* to_string(WeightFormatErrc code);

class WeightFormatError : public std::runtime_error {
 public:
  WeightFormatError(WeightFormatErrc code, const std::string& what)
      : std::runtime_error(std::string(blpnet::to_string(code)) + ": " + what), code_(code) {}
  WeightFormatErrc code() const { return code_; }

 private:
  WeightFormatErrc code_;
};

std::vector<std::byte> encode_weights(const ParameterStore<float>& params);
ParameterStore<float> decode_weights(std::span<const std::byte> bytes);

void save_weights(const ParameterStore<float>& params, const std::filesystem::path& path);
ParameterStore<float> load_weights(const std::filesystem::path& path);

// Precomputed backbone output: the same container holding one tensor named "features".
void save_features(const Tensor<float>& features, const std::filesystem::path& path);
Tensor<float> load_features(const std::filesystem::path& path);

}  // namespace blpnet
