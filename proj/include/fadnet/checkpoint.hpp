#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "fadnet/tensor.hpp"

namespace fadnet {

/// Named tensor collection persisted as a text manifest plus a binary payload.
///
/// Layout, for a checkpoint rooted at `path`:
///   path + ".manifest"  one line per tensor: `<name> <d0>x<d1>x... <byte offset>`,
///                       preceded by the header line `fadnet-checkpoint 1`
///   path + ".bin"       concatenated little-endian IEEE-754 float64 values,
///                       row-major, at the offsets listed in the manifest
/// Entries are written in lexicographic name order.
using TensorMap = std::map<std::string, Tensor>;

void save_checkpoint(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap load_checkpoint(const std::filesystem::path& path);

}  // namespace fadnet
