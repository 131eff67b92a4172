#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>

#include "sau/tensor.hpp"

namespace sau {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// STNS tensor file:
//   "STNS" | u8 version=1 | u8 dtype (1=f32, 2=f64) | u8 rank | u8 0 |
//   rank x u32 LE dims | row-major LE payload
enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

using AnyTensor = std::variant<TensorF, TensorD>;

void write_stns(std::ostream& out, const TensorF& t);
void write_stns(std::ostream& out, const TensorD& t);
AnyTensor read_stns(std::istream& in);

void save_stns(const std::filesystem::path& path, const TensorF& t);
void save_stns(const std::filesystem::path& path, const TensorD& t);
AnyTensor load_stns(const std::filesystem::path& path);

/// Load and convert to the requested element type.
template <typename T>
Tensor<T> load_stns_as(const std::filesystem::path& path) {
  return std::visit([](const auto& t) { return tensor_cast<T>(t); }, load_stns(path));
}

// STNA archive: "STNA" | u32 LE count | count x (u32 LE name length | name | STNS record).
// Entries are written in name order.
using TensorArchive = std::map<std::string, AnyTensor>;

void save_archive(const std::filesystem::path& path, const TensorArchive& archive);
TensorArchive load_archive(const std::filesystem::path& path);

}  // namespace sau
