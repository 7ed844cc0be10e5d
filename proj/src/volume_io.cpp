#include "vf/volume_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace vf {
namespace {

constexpr char kMagic[4] = {'V', 'O', 'L', '1'};
constexpr std::uint8_t kDtypeF32 = 1;
constexpr std::uint8_t kDtypeU8 = 2;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  in.seekg(0, std::ios::end);
  const std::streamoff len = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(len));
  if (len > 0) in.read(reinterpret_cast<char*>(bytes.data()), len);
  if (!in) throw FormatError("read failure on " + path);
  return bytes;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failure on " + path);
}

}  // namespace

int vol_file_dtype(const std::string& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 5) throw FormatError(path + ": header truncated");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError(path + ": bad magic");
  return bytes[4];
}

Volume read_vol(const std::string& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 20) throw FormatError(path + ": header truncated");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError(path + ": bad magic");
  const std::uint8_t dtype = bytes[4];
  if (dtype != kDtypeF32) throw FormatError(path + ": expected scalar dtype 1");
  Dims3 d;
  d.nx = static_cast<int>(get_u32(bytes.data() + 8));
  d.ny = static_cast<int>(get_u32(bytes.data() + 12));
  d.nz = static_cast<int>(get_u32(bytes.data() + 16));
  if (d.nx <= 0 || d.ny <= 0 || d.nz <= 0)
    throw FormatError(path + ": non-positive dimension");
  const std::size_t n = static_cast<std::size_t>(d.count());
  if (bytes.size() < 20 + 4 * n) throw TruncatedFile(path + ": payload truncated");
  Volume v;
  v.dims = d;
  v.voxels.resize(n);
  const std::uint8_t* p = bytes.data() + 20;
  for (std::size_t i = 0; i < n; ++i, p += 4) {
    std::uint32_t u = get_u32(p);
    float f;
    std::memcpy(&f, &u, 4);
    v.voxels[i] = static_cast<double>(f);
  }
  return v;
}

void write_vol(const std::string& path, const Volume& v) {
  if (v.dims.count() != static_cast<std::int64_t>(v.voxels.size()))
    throw InvalidVolume("write_vol: voxel count does not match dims");
  std::vector<std::uint8_t> bytes;
  bytes.reserve(20 + 4 * v.voxels.size());
  bytes.insert(bytes.end(), kMagic, kMagic + 4);
  bytes.push_back(kDtypeF32);
  bytes.insert(bytes.end(), {0, 0, 0});
  put_u32(bytes, static_cast<std::uint32_t>(v.dims.nx));
  put_u32(bytes, static_cast<std::uint32_t>(v.dims.ny));
  put_u32(bytes, static_cast<std::uint32_t>(v.dims.nz));
  for (double x : v.voxels) {
    const float f = static_cast<float>(x);
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    put_u32(bytes, u);
  }
  write_file(path, bytes);
}

LabelMask read_mask(const std::string& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 20) throw FormatError(path + ": header truncated");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError(path + ": bad magic");
  const std::uint8_t dtype = bytes[4];
  if (dtype != kDtypeU8) throw FormatError(path + ": expected label dtype 2");
  Dims3 d;
  d.nx = static_cast<int>(get_u32(bytes.data() + 8));
  d.ny = static_cast<int>(get_u32(bytes.data() + 12));
  d.nz = static_cast<int>(get_u32(bytes.data() + 16));
  if (d.nx <= 0 || d.ny <= 0 || d.nz <= 0)
    throw FormatError(path + ": non-positive dimension");
  const std::size_t n = static_cast<std::size_t>(d.count());
  if (bytes.size() < 20 + n) throw TruncatedFile(path + ": payload truncated");
  LabelMask m;
  m.dims = d;
  m.labels.assign(bytes.begin() + 20, bytes.begin() + 20 + static_cast<std::ptrdiff_t>(n));
  for (std::uint8_t l : m.labels)
    if (l > kUnhealthy) throw FormatError(path + ": label value out of range");
  return m;
}

void write_mask(const std::string& path, const LabelMask& m) {
  if (m.dims.count() != static_cast<std::int64_t>(m.labels.size()))
    throw InvalidVolume("write_mask: label count does not match dims");
  for (std::uint8_t l : m.labels)
    if (l > kUnhealthy) throw InvalidVolume("write_mask: label value out of range");
  std::vector<std::uint8_t> bytes;
  bytes.reserve(20 + m.labels.size());
  bytes.insert(bytes.end(), kMagic, kMagic + 4);
  bytes.push_back(kDtypeU8);
  bytes.insert(bytes.end(), {0, 0, 0});
  put_u32(bytes, static_cast<std::uint32_t>(m.dims.nx));
  put_u32(bytes, static_cast<std::uint32_t>(m.dims.ny));
  put_u32(bytes, static_cast<std::uint32_t>(m.dims.nz));
  bytes.insert(bytes.end(), m.labels.begin(), m.labels.end());
  write_file(path, bytes);
}

}  // namespace vf
