#pragma once

#include <string>

#include "murax/model.h"

namespace murax {

// Container layout: magic "MURX", u32 LE format version, u32 LE header
// length, JSON header (config + ordered manifest of name/shape/offset/
// count), raw little-endian float32 arrays in manifest order, u32 LE
// CRC-32 of the payload.
void save_checkpoint(const ModelParams& params, const std::string& path);

// Rejects bad magic, unknown versions and CRC mismatches.
ModelParams load_checkpoint(const std::string& path);

}  // namespace murax
