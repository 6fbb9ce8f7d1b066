#pragma once

#include <string>

#include "mtard/net.hpp"

namespace mtard {

enum class Precision : std::uint8_t { f32 = 4, f64 = 8 };

/// Checkpoint layout (all little-endian):
///   "MTRD" | version u16 | role u8 | spec fingerprint u64 | dtype u8 |
///   tensor count u32 | per tensor: rank u8, dims u64..., raw payload.
/// dtype is the payload width in bytes (4 or 8).
inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_checkpoint(const NetworkParams& params, const std::string& path,
                     Precision precision = Precision::f64);

/// Loads and validates against the expected spec (fingerprint and shapes).
NetworkParams load_checkpoint(const std::string& path, const NetworkSpec& spec);

/// Header peek without shape validation (role/fingerprint inspection).
struct CheckpointInfo {
  std::uint16_t version = 0;
  Role role = Role::student;
  std::uint64_t fingerprint = 0;
  Precision precision = Precision::f64;
};
CheckpointInfo peek_checkpoint(const std::string& path);

}  // namespace mtard
