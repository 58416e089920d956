#pragma once

#include <string>
#include <utility>
#include <vector>

#include "frs/tensor.hpp"

namespace frs {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// FRST tensor snapshot codec, shared repo-wide.
///
/// Layout: magic "FRST", version u16 = 1, tensor count u32; per tensor:
/// name length u16 + UTF-8 name, rank u8, each dim u32, dtype code u8
/// (0 = f64), then the raw little-endian payload. All header integers are
/// little-endian. Round-trips are bit-exact.
void write_frst(const std::string& path, const NamedTensors& tensors);

/// Decode errors (bad magic, unknown version/dtype, truncation) name the
/// tensor being read and leave nothing partially constructed.
NamedTensors read_frst(const std::string& path);

/// 8-bit binary PGM (P5) / PPM (P6), row-major, maxval 255.
void write_pgm(const std::string& path, int width, int height,
               const std::vector<unsigned char>& gray);
void write_ppm(const std::string& path, int width, int height,
               const std::vector<unsigned char>& rgb);
std::vector<unsigned char> read_pgm(const std::string& path, int& width, int& height);

}  // namespace frs
