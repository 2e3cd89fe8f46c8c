#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "geoflow/tensor.hpp"

namespace geoflow {

// GFT1 layout (little-endian):
//   [0..3]  magic "GFT1"
//   [4]     dtype code (1 = f32, 2 = f64, 3 = u8)
//   [5]     rank r in 1..8
//   [6..7]  reserved, zero
//   then r x u64 dims, then the row-major payload.
// Format errors name the offending field: "magic", "dtype", "rank",
// "reserved", "dims", "payload length".
std::vector<char> encode_tensor(const TensorGrid& grid);
TensorGrid decode_tensor(const std::vector<char>& bytes);

void save_tensor(const TensorGrid& grid, const std::filesystem::path& path);
TensorGrid load_tensor(const std::filesystem::path& path);

}  // namespace geoflow
