#pragma once

#include <optional>
#include <string>

#include "usfg/network.hpp"

namespace usfg {

// Binary checkpoint, fixed little-endian layout:
//   magic "USFG", format version u32, tensor count u32, then per tensor
//   (name length u16, UTF-8 name, rank u8, extents u32 x rank, f32 payload).
// The architecture descriptor travels as a synthetic "arch" tensor so the
// container stays uniform.

constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    NetworkParams<float> params;
    std::optional<AdamState<float>> adam;
};

void save_checkpoint(const NetworkParams<float>& params, const AdamState<float>* state,
                     const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

std::vector<uint8_t> serialize_checkpoint(const NetworkParams<float>& params,
                                          const AdamState<float>* state);
Checkpoint deserialize_checkpoint(const std::vector<uint8_t>& bytes);

}  // namespace usfg
