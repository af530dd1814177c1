#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace blo {

// Flat binary array file:
//   bytes 0..3   magic "BLO1"
//   u32          rank R
//   R x u32      extents, outermost first
//   prod(extents) x f64, row-major
// All integers and floats little-endian.
struct BloArray {
  std::vector<std::uint32_t> extents;
  std::vector<double> values;
};

void write_blo1(const std::filesystem::path& path, std::span<const std::uint32_t> extents,
                std::span<const double> values);
BloArray read_blo1(const std::filesystem::path& path);

}  // namespace blo
