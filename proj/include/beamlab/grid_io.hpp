#pragma once

// Binary grid format: 8-byte magic "BLGRID01", uint32 rank, uint32 zero,
// uint64 dims[rank], then prod(dims) little-endian float64 values, row-major.

#include <cstdint>
#include <string>
#include <vector>

namespace beamlab {

struct GridFile {
  std::vector<std::uint64_t> dims;
  std::vector<double> data;
  std::size_t count() const;
};

void write_grid(const std::string& path, const GridFile& g);
GridFile read_grid(const std::string& path);

} // namespace beamlab
