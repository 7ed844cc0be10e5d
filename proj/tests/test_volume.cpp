#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "vf/rng.hpp"
#include "vf/volume.hpp"
#include "vf/volume_io.hpp"

using namespace vf;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

Volume random_volume(Dims3 d, std::uint64_t seed) {
  Volume v = Volume::zeros(d);
  RngStream s(seed, "testvol", 0);
  for (double& x : v.voxels) x = s.uniform(0.0, 1500.0);
  return v;
}

}  // namespace

TEST_CASE("normalize_unit divides by the max") {
  Volume v = Volume::zeros({2, 2, 1});
  v.voxels = {0.0, 500.0, 1000.0, 250.0};
  const Volume n = normalize_unit(v);
  CHECK(n.range == RangeTag::unit);
  CHECK(n.voxels[0] == 0.0);
  CHECK(n.voxels[1] == 0.5);
  CHECK(n.voxels[2] == 1.0);
  CHECK(n.voxels[3] == 0.25);
}

TEST_CASE("normalize_unit passes an all-zero volume through") {
  const Volume v = Volume::zeros({3, 3, 3});
  const Volume n = normalize_unit(v);
  CHECK(n.range == RangeTag::unit);
  CHECK(n.voxels == v.voxels);
}

TEST_CASE("normalize_unit rejects non-finite voxels") {
  Volume v = Volume::zeros({2, 1, 1});
  v.voxels[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(normalize_unit(v), InvalidVolume);
}

TEST_CASE("rescale_signed maps [0,1] onto [-1,1] and inverts exactly") {
  Volume v = Volume::zeros({2, 2, 1}, RangeTag::unit);
  v.voxels = {0.0, 0.25, 0.5, 1.0};
  const Volume s = rescale_signed(v);
  CHECK(s.range == RangeTag::signed_range);
  CHECK(s.voxels[0] == -1.0);
  CHECK(s.voxels[1] == -0.5);
  CHECK(s.voxels[2] == 0.0);
  CHECK(s.voxels[3] == 1.0);
  const Volume u = rescale_unit(s);
  CHECK(u.range == RangeTag::unit);
  CHECK(u.voxels == v.voxels);
}

TEST_CASE("rescale functions demand the matching range tag") {
  CHECK_THROWS_AS(rescale_signed(Volume::zeros({2, 2, 2})), RangeMismatch);
  CHECK_THROWS_AS(rescale_unit(Volume::zeros({2, 2, 2}, RangeTag::unit)),
                  RangeMismatch);
}

TEST_CASE("normalize_validation scales by the masked max and keeps raw") {
  Volume v = Volume::zeros({2, 2, 1});
  v.voxels = {100.0, 800.0, 400.0, 1600.0};
  LabelMask m = LabelMask::zeros({2, 2, 1});
  m.labels = {0, kHealthy, kUnhealthy, 0};  // masked max = 800
  const Volume n = normalize_validation(v, m);
  CHECK(n.range == RangeTag::raw);
  CHECK(n.voxels[0] == 100.0 / 800.0);
  CHECK(n.voxels[1] == 1.0);
  CHECK(n.voxels[2] == 0.5);
  CHECK(n.voxels[3] == 2.0);  // unmasked voxels may leave [0,1]
}

TEST_CASE("normalize_validation error cases") {
  const Volume v = Volume::constant({2, 2, 1}, 5.0);
  CHECK_THROWS_AS(normalize_validation(v, LabelMask::zeros({2, 2, 1})), EmptyMask);
  LabelMask m = LabelMask::zeros({2, 2, 1});
  m.labels[0] = kHealthy;
  CHECK_THROWS_AS(normalize_validation(Volume::zeros({2, 2, 1}), m),
                  DegenerateNormalizer);
  CHECK_THROWS_AS(normalize_validation(v, LabelMask::zeros({2, 1, 2})), DimMismatch);
}

TEST_CASE("void_image zeroes exactly the masked voxels and is idempotent") {
  const Volume v = random_volume({4, 3, 2}, 11);
  LabelMask m = LabelMask::zeros({4, 3, 2});
  m.at(0, 0, 0) = kHealthy;
  m.at(3, 2, 1) = kUnhealthy;
  m.at(1, 1, 0) = kHealthy;
  const Volume voided = void_image(v, m);
  for (int z = 0; z < 2; ++z)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 4; ++x) {
        if (m.at(x, y, z) == kBackground)
          CHECK(voided.at(x, y, z) == v.at(x, y, z));
        else
          CHECK(voided.at(x, y, z) == 0.0);
      }
  CHECK(void_image(voided, m).voxels == voided.voxels);
}

TEST_CASE("label mask counting") {
  LabelMask m = LabelMask::zeros({3, 3, 1});
  m.labels = {0, 1, 1, 2, 0, 1, 2, 0, 0};
  CHECK(m.count_label(kHealthy) == 3);
  CHECK(m.count_label(kUnhealthy) == 2);
  CHECK(m.count_masked() == 5);
}

TEST_CASE("volume roundtrips through VOL1 with f32 rounding") {
  Volume v = random_volume({5, 4, 3}, 3);
  // force f32-representable values so the roundtrip is exact
  for (double& x : v.voxels) x = static_cast<double>(static_cast<float>(x));
  const std::string path = tmp_path("vf_roundtrip.vol");
  write_vol(path, v);
  const Volume r = read_vol(path);
  CHECK(r.dims == v.dims);
  CHECK(r.range == RangeTag::raw);
  CHECK(r.voxels == v.voxels);
  CHECK(vol_file_dtype(path) == 1);
  std::filesystem::remove(path);
}

TEST_CASE("mask roundtrips through VOL1") {
  LabelMask m = LabelMask::zeros({4, 4, 2});
  RngStream s(5, "labels", 0);
  for (auto& l : m.labels) l = static_cast<std::uint8_t>(s.uniform_index(3));
  const std::string path = tmp_path("vf_roundtrip_mask.vol");
  write_mask(path, m);
  const LabelMask r = read_mask(path);
  CHECK(r.dims == m.dims);
  CHECK(r.labels == m.labels);
  CHECK(vol_file_dtype(path) == 2);
  std::filesystem::remove(path);
}

TEST_CASE("write-read-write produces identical bytes") {
  const Volume v = random_volume({4, 4, 4}, 9);
  const std::string p1 = tmp_path("vf_once.vol"), p2 = tmp_path("vf_twice.vol");
  write_vol(p1, v);
  write_vol(p2, read_vol(p1));
  std::ifstream a(p1, std::ios::binary), b(p2, std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), {});
  const std::string sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("VOL1 negative cases") {
  const std::string path = tmp_path("vf_bad.vol");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTAVOL1HEADER";
  }
  CHECK_THROWS_AS(read_vol(path), FormatError);
  CHECK_THROWS_AS(vol_file_dtype(path), FormatError);

  const Volume v = random_volume({4, 4, 4}, 1);
  write_vol(path, v);
  // chop the payload
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 7);
  CHECK_THROWS_AS(read_vol(path), TruncatedFile);

  // dtype mixups
  write_vol(path, v);
  CHECK_THROWS_AS(read_mask(path), FormatError);
  LabelMask m = LabelMask::zeros({2, 2, 2});
  write_mask(path, m);
  CHECK_THROWS_AS(read_vol(path), FormatError);

  // out-of-range labels refuse to serialize
  m.labels[0] = 7;
  CHECK_THROWS_AS(write_mask(path, m), InvalidVolume);
  std::filesystem::remove(path);
}
