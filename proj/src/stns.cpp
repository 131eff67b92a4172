#include "sau/stns.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace sau {

namespace {

static_assert(std::endian::native == std::endian::little,
              "STNS I/O assumes a little-endian host");

constexpr char kMagic[4] = {'S', 'T', 'N', 'S'};
constexpr char kArchiveMagic[4] = {'S', 'T', 'N', 'A'};
constexpr std::uint8_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError("STNS: truncated header");
  return v;
}

template <typename T>
void write_impl(std::ostream& out, const Tensor<T>& t, DType code) {
  out.write(kMagic, 4);
  const std::uint8_t header[4] = {kVersion, static_cast<std::uint8_t>(code),
                                  static_cast<std::uint8_t>(t.rank()), 0};
  out.write(reinterpret_cast<const char*>(header), 4);
  for (const int d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(T)));
  if (!out) throw FormatError("STNS: write failed");
}

template <typename T>
Tensor<T> read_payload(std::istream& in, Shape dims) {
  const std::size_t count = shape_numel(dims);
  std::vector<T> data(count);
  if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * sizeof(T)))) {
    throw FormatError("STNS: truncated payload");
  }
  return Tensor<T>(std::move(dims), std::move(data));
}

}  // namespace

void write_stns(std::ostream& out, const TensorF& t) { write_impl(out, t, DType::f32); }
void write_stns(std::ostream& out, const TensorD& t) { write_impl(out, t, DType::f64); }

AnyTensor read_stns(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("STNS: bad magic");
  std::uint8_t header[4];
  if (!in.read(reinterpret_cast<char*>(header), 4)) throw FormatError("STNS: truncated header");
  if (header[0] != kVersion) throw FormatError("STNS: unsupported version " + std::to_string(header[0]));
  const std::uint8_t rank = header[2];
  if (rank < 1 || rank > 5) throw FormatError("STNS: rank must be 1-5, got " + std::to_string(rank));
  if (header[3] != 0) throw FormatError("STNS: reserved header byte must be zero");
  Shape dims(rank);
  for (auto& d : dims) {
    const std::uint32_t v = get_u32(in);
    if (v == 0 || v > (1u << 30)) throw FormatError("STNS: invalid extent " + std::to_string(v));
    d = static_cast<int>(v);
  }
  switch (static_cast<DType>(header[1])) {
    case DType::f32:
      return read_payload<float>(in, std::move(dims));
    case DType::f64:
      return read_payload<double>(in, std::move(dims));
  }
  throw FormatError("STNS: unknown dtype code " + std::to_string(header[1]));
}

void save_stns(const std::filesystem::path& path, const TensorF& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_stns(out, t);
}

void save_stns(const std::filesystem::path& path, const TensorD& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_stns(out, t);
}

AnyTensor load_stns(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_stns(in);
}

void save_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(kArchiveMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(archive.size()));
  for (const auto& [name, tensor] : archive) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    std::visit([&out](const auto& t) { write_stns(out, t); }, tensor);
  }
  if (!out) throw FormatError("STNA: write failed for " + path.string());
}

TensorArchive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kArchiveMagic, 4) != 0) {
    throw FormatError("STNA: bad magic in " + path.string());
  }
  const std::uint32_t count = get_u32(in);
  TensorArchive archive;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = get_u32(in);
    if (len > 4096) throw FormatError("STNA: entry name too long");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw FormatError("STNA: truncated entry name");
    archive.emplace(std::move(name), read_stns(in));
  }
  return archive;
}

}  // namespace sau
