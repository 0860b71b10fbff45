#include "beamlab/grid_io.hpp"

#include "beamlab/num.hpp"

#include <cstring>
#include <fstream>

namespace beamlab {

namespace {
constexpr char kMagic[8] = {'B', 'L', 'G', 'R', 'I', 'D', '0', '1'};
}

std::size_t GridFile::count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= static_cast<std::size_t>(d);
  return dims.empty() ? 0 : n;
}

void write_grid(const std::string& path, const GridFile& g) {
  if (g.count() != g.data.size()) throw Error("io", "grid data size does not match dims for " + path);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("io", "cannot open " + path + " for writing");
  std::uint32_t rank = static_cast<std::uint32_t>(g.dims.size()), zero = 0;
  os.write(kMagic, 8);
  os.write(reinterpret_cast<const char*>(&rank), 4);
  os.write(reinterpret_cast<const char*>(&zero), 4);
  os.write(reinterpret_cast<const char*>(g.dims.data()), 8 * rank);
  os.write(reinterpret_cast<const char*>(g.data.data()), static_cast<std::streamsize>(8 * g.data.size()));
  if (!os) throw Error("io", "write failed for " + path);
}

GridFile read_grid(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("io", "cannot open grid file " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw Error("io", "bad grid header in " + path);
  std::uint32_t rank = 0, zero = 0;
  is.read(reinterpret_cast<char*>(&rank), 4);
  is.read(reinterpret_cast<char*>(&zero), 4);
  if (!is || rank == 0 || rank > 8) throw Error("io", "bad grid rank in " + path);
  GridFile g;
  g.dims.resize(rank);
  is.read(reinterpret_cast<char*>(g.dims.data()), 8 * rank);
  g.data.resize(g.count());
  is.read(reinterpret_cast<char*>(g.data.data()), static_cast<std::streamsize>(8 * g.data.size()));
  if (!is) throw Error("io", "truncated grid file " + path);
  return g;
}

} // namespace beamlab
