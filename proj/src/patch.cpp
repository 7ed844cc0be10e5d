#include "vf/patch.hpp"

#include <algorithm>
#include <cmath>

#include "vf/convert.hpp"

namespace vf {

namespace {

int place_axis(int lo, int hi, int patch, int dim) {
  // center of the support span, ties toward the lower index
  const int o = static_cast<int>(
      std::floor((static_cast<double>(lo) + hi + 1 - patch) / 2.0));
  return std::clamp(o, 0, dim - patch);
}

}  // namespace

PatchCrop crop_to_patch(const Volume& v, const LabelMask& m, Dims3 patch_dims) {
  if (v.dims != m.dims) throw DimMismatch("crop_to_patch: volume/mask grids differ");
  if (patch_dims.nx < 1 || patch_dims.ny < 1 || patch_dims.nz < 1 ||
      patch_dims.nx > v.dims.nx || patch_dims.ny > v.dims.ny ||
      patch_dims.nz > v.dims.nz)
    throw DimMismatch("crop_to_patch: patch dims exceed volume");

  int lo[3] = {v.dims.nx, v.dims.ny, v.dims.nz};
  int hi[3] = {-1, -1, -1};
  for (int z = 0; z < v.dims.nz; ++z)
    for (int y = 0; y < v.dims.ny; ++y)
      for (int x = 0; x < v.dims.nx; ++x) {
        if (v.at(x, y, z) == 0.0) continue;
        lo[0] = std::min(lo[0], x);
        lo[1] = std::min(lo[1], y);
        lo[2] = std::min(lo[2], z);
        hi[0] = std::max(hi[0], x);
        hi[1] = std::max(hi[1], y);
        hi[2] = std::max(hi[2], z);
      }

  PatchSpec spec;
  spec.dims = patch_dims;
  if (hi[0] < 0) {
    // no support: center in the grid
    spec.ox = (v.dims.nx - patch_dims.nx) / 2;
    spec.oy = (v.dims.ny - patch_dims.ny) / 2;
    spec.oz = (v.dims.nz - patch_dims.nz) / 2;
  } else {
    if (hi[0] - lo[0] + 1 > patch_dims.nx || hi[1] - lo[1] + 1 > patch_dims.ny ||
        hi[2] - lo[2] + 1 > patch_dims.nz)
      throw BrainTooLarge("crop_to_patch: support bounding box exceeds patch dims");
    spec.ox = place_axis(lo[0], hi[0], patch_dims.nx, v.dims.nx);
    spec.oy = place_axis(lo[1], hi[1], patch_dims.ny, v.dims.ny);
    spec.oz = place_axis(lo[2], hi[2], patch_dims.nz, v.dims.nz);
  }

  PatchCrop out;
  out.spec = spec;
  out.vol = Volume::zeros(patch_dims, v.range);
  out.mask = LabelMask::zeros(patch_dims);
  for (int z = 0; z < patch_dims.nz; ++z)
    for (int y = 0; y < patch_dims.ny; ++y)
      for (int x = 0; x < patch_dims.nx; ++x) {
        out.vol.at(x, y, z) = v.at(spec.ox + x, spec.oy + y, spec.oz + z);
        out.mask.at(x, y, z) = m.at(spec.ox + x, spec.oy + y, spec.oz + z);
      }
  return out;
}

Volume stitch(const Volume& original, const Volume& prediction,
              const PatchSpec& spec, const LabelMask& mask) {
  if (prediction.dims != spec.dims)
    throw DimMismatch("stitch: prediction does not match the patch spec");
  if (mask.dims != original.dims)
    throw DimMismatch("stitch: mask grid differs from the original");
  if (spec.ox < 0 || spec.oy < 0 || spec.oz < 0 ||
      spec.ox + spec.dims.nx > original.dims.nx ||
      spec.oy + spec.dims.ny > original.dims.ny ||
      spec.oz + spec.dims.nz > original.dims.nz)
    throw DimMismatch("stitch: patch spec outside the original volume");

  double peak = 0.0;
  for (double v : original.voxels) peak = std::max(peak, v);
  if (peak <= 0.0) peak = 1.0;

  Volume out = original;
  for (int z = 0; z < spec.dims.nz; ++z)
    for (int y = 0; y < spec.dims.ny; ++y)
      for (int x = 0; x < spec.dims.nx; ++x) {
        const int gx = spec.ox + x, gy = spec.oy + y, gz = spec.oz + z;
        const std::uint8_t lab = mask.at(gx, gy, gz);
        if (lab != kHealthy && lab != kUnhealthy) continue;
        double p = prediction.at(x, y, z);
        switch (prediction.range) {
          case RangeTag::signed_range: p = (p + 1.0) / 2.0 * peak; break;
          case RangeTag::unit: p = p * peak; break;
          case RangeTag::raw: break;
        }
        out.at(gx, gy, gz) = p;
      }
  return out;
}

LabelMask merge_masks(const LabelMask& healthy, const LabelMask& unhealthy) {
  if (healthy.dims != unhealthy.dims)
    throw DimMismatch("merge_masks: grids differ");
  LabelMask out = LabelMask::zeros(healthy.dims);
  for (std::size_t i = 0; i < out.labels.size(); ++i) {
    if (unhealthy.labels[i] == kUnhealthy) out.labels[i] = kUnhealthy;
    else if (healthy.labels[i] == kHealthy) out.labels[i] = kHealthy;
  }
  return out;
}

TrainingPair make_training_pair(const Volume& t1n, const LabelMask& healthy,
                                const LabelMask& unhealthy, Dims3 patch_dims) {
  const LabelMask combined = merge_masks(healthy, unhealthy);
  PatchCrop crop = crop_to_patch(t1n, combined, patch_dims);
  const Volume signed_patch = rescale_signed(normalize_unit(crop.vol));
  const Volume voided = void_image(signed_patch, crop.mask);

  const Tensor ch0 = volume_to_tensor(voided);
  const Tensor ch1 = label_indicator(crop.mask, true, true);
  std::vector<double> joint;
  joint.reserve(static_cast<std::size_t>(2 * ch0.size()));
  joint.insert(joint.end(), ch0.values().begin(), ch0.values().end());
  joint.insert(joint.end(), ch1.values().begin(), ch1.values().end());

  TrainingPair pair;
  pair.input = Tensor({2, patch_dims.nx, patch_dims.ny, patch_dims.nz},
                      std::move(joint));
  pair.target = volume_to_tensor(signed_patch);
  pair.mask = std::move(crop.mask);
  pair.spec = crop.spec;
  return pair;
}

}  // namespace vf
