#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "docnmt/config.hpp"
#include "docnmt/param_set.hpp"

namespace docnmt {

// On-disk layout: a text manifest
//
//   docnmt-checkpoint 1
//   config <n>
//   <n lines of "key = value">
//   tensors <m>
//   <name> <rank> <extents...> <byte offset>     (m lines)
//   data <bytes>
//
// followed by the raw little-endian IEEE-754 doubles of every tensor in
// manifest order, each row-major. Offsets are relative to the data block.
struct Checkpoint {
  Config config;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Config& config, const ParamSet& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies tensors into params by name. With `strict`, every parameter must be
// present; otherwise only names in `prefix` (or all when empty) are copied.
// Shape mismatches are always rejected.
void apply_checkpoint(const Checkpoint& ckpt, ParamSet& params, bool strict, const std::string& prefix = {});

}  // namespace docnmt
