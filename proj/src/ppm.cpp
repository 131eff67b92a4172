#include "sau/ppm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "sau/stns.hpp"

namespace sau {

std::uint8_t quantize_unit(double v) {
  const double c = std::clamp(std::isnan(v) ? 0.0 : v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

void export_ppm(const TensorF& image, const std::filesystem::path& path, int n) {
  require_rank4(image, "export_ppm");
  if (image.c() != 3) throw ShapeError("export_ppm: expected 3 channels, got " + std::to_string(image.c()));
  if (n < 0 || n >= image.n()) throw std::out_of_range("export_ppm: sample index out of range");
  const int H = image.h(), W = image.w();
  std::vector<char> bytes;
  bytes.reserve(static_cast<std::size_t>(3) * H * W);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j)
      for (int c = 0; c < 3; ++c) bytes.push_back(static_cast<char>(quantize_unit(image.at(n, c, i, j))));
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("export_ppm: cannot write " + path.string());
  f << "P6\n" << W << ' ' << H << "\n255\n";
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("export_ppm: write failed for " + path.string());
}

TensorF read_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_ppm: cannot open " + path.string());
  std::string magic;
  int W = 0, H = 0, maxval = 0;
  f >> magic >> W >> H >> maxval;
  if (magic != "P6" || W < 1 || H < 1 || maxval != 255) throw FormatError("read_ppm: not a 255-level P6 file");
  f.get();  // single whitespace after the header
  std::vector<char> bytes(static_cast<std::size_t>(3) * H * W);
  f.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (f.gcount() != static_cast<std::streamsize>(bytes.size())) throw FormatError("read_ppm: truncated payload");
  TensorF out({1, 3, H, W});
  std::size_t p = 0;
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j)
      for (int c = 0; c < 3; ++c) out.at(0, c, i, j) = static_cast<unsigned char>(bytes[p++]) / 255.0f;
  return out;
}

}  // namespace sau
