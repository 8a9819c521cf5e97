#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "roomgen/config.hpp"

namespace roomgen {

// Little-endian binary checkpoint. Layout:
//   magic "RGENCKPT" (8 bytes), u32 version,
//   then named sections in fixed order, each
//   { u32 name_len, name bytes, u64 payload_len, payload }:
//     config  canonical config text
//     cursor  u32 next_stage (4 = run complete), u64 next_iter_in_stage,
//             u64 global_iter
//     params  u64 count, count x f32
//     frozen  u64 count (0 when stage 1 has not finished), count x f32
//     adam    u64 count, count x f32 first moments, count x f32 second
//             moments, u64 step
//     rng     u64 word count (8), 4 x u64 sampler state, 4 x u64 step state
//     meta    u32 entry count (2), per entry u32 len + bytes
//             (prompt, negative prompt)
// Loads validate magic, version, section names and every length;
// violations raise CheckpointCorrupt.
struct Checkpoint {
  static constexpr char kMagic[9] = "RGENCKPT";
  static constexpr uint32_t kVersion = 1;

  std::string config_text;
  uint32_t next_stage = 1;
  uint64_t next_iter = 0;
  uint64_t global_iter = 0;
  std::vector<float> params;
  std::vector<float> frozen;
  std::vector<float> adam_m, adam_v;
  uint64_t adam_step = 0;
  std::array<uint64_t, 4> sampler_rng{};
  std::array<uint64_t, 4> step_rng{};
  std::string prompt_meta;
  std::string negative_prompt_meta;

  PipelineConfig parse_config() const { return parse_config_text(config_text); }
};

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes);

// Atomic write (temp file + rename).
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace roomgen
