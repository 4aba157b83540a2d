#ifndef TTLM_CHECKPOINT_HPP
#define TTLM_CHECKPOINT_HPP

#include <cstdint>
#include <filesystem>

#include "ttlm/model.hpp"

namespace ttlm {

// Little-endian layout:
//   "TTLM" | u32 version | u32 V | u32 E | u32 H | u32 flags (bit 0 = tied)
//   | u64 vocabulary hash
//   | embedding | w_input | w_hidden | bias_gates | w_out | bias_out
// with every tensor stored as row-major f64.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Params params;
  std::uint64_t vocab_hash = 0;
};

void save_checkpoint(const Params& params, const std::filesystem::path& path,
                     std::uint64_t vocab_hash = 0);

// Throws CheckpointError with kind kMagic, kVersion, kTruncated or kIo.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ttlm

#endif  // TTLM_CHECKPOINT_HPP
