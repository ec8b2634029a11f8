#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "e2p/tensor.hpp"

namespace e2p {

// Self-describing binary container for named parameter blocks.
//
// Layout (all integers little-endian):
//   magic   "E2PCKPT1"                                  8 bytes
//   u32     header length, then that many bytes of UTF-8 JSON
//   u32     block count
//   blocks  u32 name length, name bytes,
//           u32 ndim, u64 dims[ndim],
//           f64 values[prod(dims)] as IEEE-754 bits
//   sha256  digest over every preceding byte           32 bytes
//
// The digest is verified on load; a mismatch means corruption or tampering.
struct Checkpoint {
    nlohmann::json header;
    std::vector<std::pair<std::string, Tensor>> blocks;

    const Tensor& block(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

} // namespace e2p
