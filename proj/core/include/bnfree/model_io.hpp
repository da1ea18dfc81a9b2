#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "bnfree/network.hpp"

namespace bnfree {

inline constexpr char kModelMagic[4] = {'B', 'N', 'W', 'M'};
inline constexpr uint32_t kModelFormatVersion = 1;
/// Kind tag of the leading record that carries the architecture spec.
inline constexpr uint32_t kArchitectureRecord = 0;

/// Binary model file, little-endian:
///   magic "BNWM" | version u32 | variant u32 | record count u32
///   per record: kind u32 | shape 4 x u32 | quantized u8 | [sigma0 f64]
///               | payload length u64 | payload
///   CRC-32 (IEEE) of every preceding byte, u32
/// Record 0 holds the architecture (shape = family, depth, classes, 0;
/// payload = width f64, temperature f64, quantized u8) so the graph can be
/// rebuilt; one record per graph layer follows. Conv payloads are packed
/// sign bits when quantized and f32 row-major otherwise. BN and mean-only BN
/// payloads are mean, var, gain, shift as f32[C] then epsilon f64.
/// Standardisation payloads are mean f32[C], std f32[C].
std::vector<uint8_t> serialize_model(const Model& model);
Model deserialize_model(std::span<const uint8_t> bytes);

/// Throws StateError if BN statistics are not finalized.
void export_model(const Model& model, const std::filesystem::path& path);
/// Throws FormatError ("bad magic", "version mismatch", "truncated file",
/// "checksum failure", ...) or std::runtime_error on I/O failure.
Model import_model(const std::filesystem::path& path);

uint32_t crc32(std::span<const uint8_t> bytes);

}  // namespace bnfree
