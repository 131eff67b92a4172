#pragma once

// Binary P6 images: header "P6\n<W> <H>\n255\n", RGB bytes, rows top to bottom.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "sau/tensor.hpp"

namespace sau {

/// Byte for a value in [0, 1] (clamped, rounded to nearest).
std::uint8_t quantize_unit(double v);

/// Writes sample `n` of an N x 3 x H x W image. Throws std::runtime_error if the path is not
/// writable.
void export_ppm(const TensorF& image, const std::filesystem::path& path, int n = 0);

/// Reads a P6 file with maxval 255 into a 1 x 3 x H x W tensor of bytes / 255.
TensorF read_ppm(const std::filesystem::path& path);

}  // namespace sau
