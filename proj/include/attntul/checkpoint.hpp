#pragma once

// Binary parameter checkpoint, little-endian:
//   8 bytes  magic "ATTNTULC"
//   u32      format version (1)
//   u32      metadata entry count, then per entry: u32 length + key bytes,
//            u32 length + value bytes
//   u32      parameter count, then per parameter: u32 length + name bytes,
//            u32 rank, rank x u64 extents, product(extents) x f64 values
// Values are stored as raw IEEE-754 bits, so a round trip is bit-exact.

#include "attntul/model.hpp"

#include <iosfwd>
#include <map>
#include <string>

namespace attntul {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, std::string> metadata;
  ModelParams params;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Copies values from `source` into same-named, same-shaped parameters of
// `target`. Throws DataError on any missing name or shape mismatch.
void assign_parameters(ModelParams& target, const ModelParams& source);

}  // namespace attntul
