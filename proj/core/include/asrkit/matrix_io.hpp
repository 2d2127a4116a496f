#pragma once

#include <filesystem>
#include <iosfwd>

#include "asrkit/matrix.hpp"

namespace asrkit {

// LPM1: "LPM1", u32 rows, u32 cols, rows*cols f32, all little-endian, row-major.
void write_matrix(const LogProbMatrix& m, const std::filesystem::path& path);
LogProbMatrix read_matrix(const std::filesystem::path& path);

void write_matrix(const LogProbMatrix& m, std::ostream& os);
LogProbMatrix read_matrix(std::istream& is);

}  // namespace asrkit
