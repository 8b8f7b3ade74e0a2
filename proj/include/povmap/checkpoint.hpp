#pragma once

#include <filesystem>
#include <string>

#include "povmap/training.hpp"

namespace povmap {

// Binary layout: "PVMAPCKP" magic, format version, module tag, step, config
// hash, quantile, encoder config, POI dims, then for every parameter pack its
// block table followed by the values as little-endian IEEE-754 doubles.
std::string serialize_checkpoint(const Checkpoint& ck);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace povmap
