#pragma once

// Binary checkpoint, little-endian:
//   "ATRF" | u32 version | u32 entry count
//   per entry: u32 name length | UTF-8 name | u32 rank | u32 extents[rank]
//              | f32 data[prod(extents)]

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "attrib/tensor.hpp"

namespace attrib::tg {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor<float> tensor;
};

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace attrib::tg
