#include "asrkit/matrix_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "asrkit/error.hpp"

namespace asrkit {

static_assert(std::endian::native == std::endian::little, "LPM1 I/O assumes a little-endian host");

void write_matrix(const LogProbMatrix& m, std::ostream& os) {
  std::uint32_t dims[2] = {static_cast<std::uint32_t>(m.rows), static_cast<std::uint32_t>(m.cols)};
  os.write("LPM1", 4);
  os.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  os.write(reinterpret_cast<const char*>(m.data.data()), static_cast<std::streamsize>(m.data.size() * sizeof(float)));
}

LogProbMatrix read_matrix(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4)) throw FormatError("LPM1: truncated header");
  if (std::memcmp(magic, "LPM1", 4) != 0) throw FormatError("LPM1: bad magic");
  std::uint32_t dims[2];
  if (!is.read(reinterpret_cast<char*>(dims), sizeof(dims))) throw FormatError("LPM1: truncated header");
  LogProbMatrix m(dims[0], dims[1]);
  auto bytes = static_cast<std::streamsize>(m.data.size() * sizeof(float));
  if (!is.read(reinterpret_cast<char*>(m.data.data()), bytes)) throw FormatError("LPM1: payload shorter than header size");
  return m;
}

void write_matrix(const LogProbMatrix& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  write_matrix(m, f);
  if (!f) throw Error("write failed: " + path.string());
}

LogProbMatrix read_matrix(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  LogProbMatrix m = read_matrix(f);
  if (f.peek() != std::char_traits<char>::eof()) throw FormatError("LPM1: trailing bytes after payload in " + path.string());
  return m;
}

}  // namespace asrkit
