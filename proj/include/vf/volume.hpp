#ifndef VF_VOLUME_HPP
#define VF_VOLUME_HPP

#include <cstdint>
#include <vector>

#include "vf/errors.hpp"

namespace vf {

struct Dims3 {
  int nx = 0, ny = 0, nz = 0;

  bool operator==(const Dims3&) const = default;
  std::int64_t count() const {
    return static_cast<std::int64_t>(nx) * ny * nz;
  }
};

// Value-range annotation carried by every Volume. "raw" volumes are
// unconstrained non-negative scanner intensities; "unit" means [0,1];
// "signed_range" means [-1,1].
enum class RangeTag : std::uint8_t { raw = 0, unit = 1, signed_range = 2 };

// Dense 3D scalar grid, x-fastest storage: index = x + nx*(y + ny*z).
// Treated as immutable after construction; all operations return new values.
struct Volume {
  Dims3 dims;
  std::vector<double> voxels;
  RangeTag range = RangeTag::raw;

  double& at(int x, int y, int z) {
    return voxels[static_cast<std::size_t>(x) +
                  static_cast<std::size_t>(dims.nx) *
                      (static_cast<std::size_t>(y) +
                       static_cast<std::size_t>(dims.ny) * z)];
  }
  double at(int x, int y, int z) const {
    return voxels[static_cast<std::size_t>(x) +
                  static_cast<std::size_t>(dims.nx) *
                      (static_cast<std::size_t>(y) +
                       static_cast<std::size_t>(dims.ny) * z)];
  }

  static Volume zeros(Dims3 d, RangeTag tag = RangeTag::raw);
  static Volume constant(Dims3 d, double value, RangeTag tag = RangeTag::raw);
};

// Voxel labels.
inline constexpr std::uint8_t kBackground = 0;
inline constexpr std::uint8_t kHealthy = 1;
inline constexpr std::uint8_t kUnhealthy = 2;

// 3D grid over {background, healthy, unhealthy}; one label per voxel, so the
// healthy and unhealthy sets are disjoint by construction.
struct LabelMask {
  Dims3 dims;
  std::vector<std::uint8_t> labels;

  std::uint8_t& at(int x, int y, int z) {
    return labels[static_cast<std::size_t>(x) +
                  static_cast<std::size_t>(dims.nx) *
                      (static_cast<std::size_t>(y) +
                       static_cast<std::size_t>(dims.ny) * z)];
  }
  std::uint8_t at(int x, int y, int z) const {
    return labels[static_cast<std::size_t>(x) +
                  static_cast<std::size_t>(dims.nx) *
                      (static_cast<std::size_t>(y) +
                       static_cast<std::size_t>(dims.ny) * z)];
  }

  static LabelMask zeros(Dims3 d);
  std::int64_t count_label(std::uint8_t label) const;
  // Voxels labeled healthy or unhealthy.
  std::int64_t count_masked() const;
};

// Divides every voxel by max(v). An all-zero volume passes through unchanged
// (blank padding volumes occur in synthetic pipelines). Throws InvalidVolume
// on non-finite input.
Volume normalize_unit(const Volume& v);

// Affine map [0,1] -> [-1,1], voxel <- 2*voxel - 1. Requires unit range.
Volume rescale_signed(const Volume& v);

// Exact inverse of rescale_signed.
Volume rescale_unit(const Volume& v);

// Divides gt by M = max of gt over voxels labeled healthy or unhealthy.
// Throws EmptyMask when no such voxel exists, DegenerateNormalizer when
// M <= 0. The result keeps RangeTag::raw: only the masked region is
// guaranteed to land in [0,1].
Volume normalize_validation(const Volume& gt, const LabelMask& mask);

// Zeroes every voxel labeled healthy or unhealthy; all other voxels are
// bit-identical to the input. Idempotent.
Volume void_image(const Volume& t1n, const LabelMask& mask);

}  // namespace vf

#endif  // VF_VOLUME_HPP
