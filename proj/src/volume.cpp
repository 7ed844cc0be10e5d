#include "vf/volume.hpp"

#include <algorithm>
#include <cmath>

namespace vf {

Volume Volume::zeros(Dims3 d, RangeTag tag) {
  Volume v;
  v.dims = d;
  v.voxels.assign(static_cast<std::size_t>(d.count()), 0.0);
  v.range = tag;
  return v;
}

Volume Volume::constant(Dims3 d, double value, RangeTag tag) {
  Volume v;
  v.dims = d;
  v.voxels.assign(static_cast<std::size_t>(d.count()), value);
  v.range = tag;
  return v;
}

LabelMask LabelMask::zeros(Dims3 d) {
  LabelMask m;
  m.dims = d;
  m.labels.assign(static_cast<std::size_t>(d.count()), kBackground);
  return m;
}

std::int64_t LabelMask::count_label(std::uint8_t label) const {
  return std::count(labels.begin(), labels.end(), label);
}

std::int64_t LabelMask::count_masked() const {
  std::int64_t n = 0;
  for (std::uint8_t l : labels)
    if (l == kHealthy || l == kUnhealthy) ++n;
  return n;
}

Volume normalize_unit(const Volume& v) {
  double max_val = 0.0;
  for (double x : v.voxels) {
    if (!std::isfinite(x)) throw InvalidVolume("normalize_unit: non-finite voxel");
    max_val = std::max(max_val, x);
  }
  Volume out = v;
  out.range = RangeTag::unit;
  if (max_val == 0.0) return out;  // all-zero volume passes through
  for (double& x : out.voxels) x /= max_val;
  return out;
}

Volume rescale_signed(const Volume& v) {
  if (v.range != RangeTag::unit)
    throw RangeMismatch("rescale_signed: input must be unit range");
  Volume out = v;
  out.range = RangeTag::signed_range;
  for (double& x : out.voxels) x = 2.0 * x - 1.0;
  return out;
}

Volume rescale_unit(const Volume& v) {
  if (v.range != RangeTag::signed_range)
    throw RangeMismatch("rescale_unit: input must be signed range");
  Volume out = v;
  out.range = RangeTag::unit;
  for (double& x : out.voxels) x = (x + 1.0) * 0.5;
  return out;
}

Volume normalize_validation(const Volume& gt, const LabelMask& mask) {
  if (gt.dims != mask.dims)
    throw DimMismatch("normalize_validation: dims mismatch");
  double max_val = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < mask.labels.size(); ++i) {
    const std::uint8_t l = mask.labels[i];
    if (l == kHealthy || l == kUnhealthy) {
      if (!any || gt.voxels[i] > max_val) max_val = gt.voxels[i];
      any = true;
    }
  }
  if (!any) throw EmptyMask("normalize_validation: mask has no healthy/unhealthy voxels");
  if (!(max_val > 0.0))
    throw DegenerateNormalizer("normalize_validation: masked max <= 0");
  Volume out = gt;
  for (double& x : out.voxels) x /= max_val;
  out.range = RangeTag::raw;
  return out;
}

Volume void_image(const Volume& t1n, const LabelMask& mask) {
  if (t1n.dims != mask.dims) throw DimMismatch("void_image: dims mismatch");
  Volume out = t1n;
  for (std::size_t i = 0; i < mask.labels.size(); ++i) {
    const std::uint8_t l = mask.labels[i];
    if (l == kHealthy || l == kUnhealthy) out.voxels[i] = 0.0;
  }
  return out;
}

}  // namespace vf
