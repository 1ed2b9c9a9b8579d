#pragma once

// Binary array files: a 16-byte header followed by little-endian float32 data
// in row-major order.
//
//   bytes 0..3   magic "DSCA"
//   bytes 4..7   rank (1 or 2), uint32 LE
//   bytes 8..11  rows, uint32 LE
//   bytes 12..15 cols, uint32 LE (1 for rank-1 arrays)

#include <cstdint>
#include <filesystem>

#include <Eigen/Dense>

namespace discover {

inline constexpr char kArrayMagic[4] = {'D', 'S', 'C', 'A'};

void write_array(const std::filesystem::path& path, const Eigen::MatrixXd& data, int rank = 2);
Eigen::MatrixXd read_array(const std::filesystem::path& path);

/// Rounds every element to the nearest float32, so values survive a
/// write/read cycle bit-exactly.
void round_to_float(Eigen::MatrixXd& m);

}  // namespace discover
