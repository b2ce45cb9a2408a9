#pragma once

#include <filesystem>

#include "xrf/kvconfig.h"
#include "xrf/models.h"

namespace xrf {

// Checkpoint layout:
//
//   XRF-CHECKPOINT 1\n
//   <ModelSpec as key=value lines>\n
//   tensors=<count>\n
//   \n                                   (blank line ends the text header)
//   repeated <count> times:
//     u32 name length, name bytes, u32 rank, u64 extents[rank],
//     float64 values[prod(extents)]
//
// All integers and floats little-endian. Parameters come first, then buffers
// (batch-norm running statistics), each in registry order.

void save_checkpoint(const Model& model, const std::filesystem::path& path);
/// Rebuilds the model from the stored spec and loads every tensor.
/// Throws DataError on missing files, truncation or name/shape mismatch.
Model load_checkpoint(const std::filesystem::path& path);
/// Reads only the text header.
ModelSpec read_checkpoint_spec(const std::filesystem::path& path);

}  // namespace xrf
