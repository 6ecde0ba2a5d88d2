#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "flow/nn/tensor.hpp"

namespace flow::nn {

// Named-parameter checkpoint `ZFCK` v1: magic, u32 version, u32 entry count,
// then per entry (u32 name length, name bytes, u32 ndims, u32 dims..., f64
// values). f64 payload is written verbatim, so round trips are bit-exact.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& params);
NamedTensors load_checkpoint(const std::filesystem::path& path);

}  // namespace flow::nn
