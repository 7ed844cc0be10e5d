#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "vf/maskgen.hpp"
#include "vf/patch.hpp"
#include "vf/phantom.hpp"
#include "vf/rng.hpp"
#include "vf/volume.hpp"

using namespace vf;

namespace {

Phantom test_phantom(std::uint64_t seed = 3) {
  PhantomSpec spec;
  spec.dims = {24, 24, 24};
  spec.seed = seed;
  return synth_phantom(spec);
}

std::size_t tidx(const Dims3& d, int x, int y, int z) {
  return (static_cast<std::size_t>(x) * d.ny + y) * d.nz + z;
}

}  // namespace

TEST_CASE("a patch-sized support at the origin crops with zero offset") {
  const Dims3 grid{12, 12, 12};
  const Dims3 patch{4, 4, 4};
  Volume v = Volume::zeros(grid);
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) v.at(x, y, z) = 1.0 + x + y + z;
  const PatchCrop c = crop_to_patch(v, LabelMask::zeros(grid), patch);
  CHECK(c.spec.ox == 0);
  CHECK(c.spec.oy == 0);
  CHECK(c.spec.oz == 0);
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) CHECK(c.vol.at(x, y, z) == v.at(x, y, z));
}

TEST_CASE("an all-zero volume centers the patch in the grid") {
  const Dims3 grid{12, 10, 8};
  const PatchCrop c =
      crop_to_patch(Volume::zeros(grid), LabelMask::zeros(grid), {4, 4, 4});
  CHECK(c.spec.ox == 4);  // (12-4)/2
  CHECK(c.spec.oy == 3);  // (10-4)/2
  CHECK(c.spec.oz == 2);  // (8-4)/2
}

TEST_CASE("re-embedding a cropped phantom patch reproduces the region") {
  const Phantom ph = test_phantom();
  const Dims3 patch{20, 20, 20};
  const PatchCrop c = crop_to_patch(ph.t1n, ph.brain, patch);
  for (int z = 0; z < patch.nz; ++z)
    for (int y = 0; y < patch.ny; ++y)
      for (int x = 0; x < patch.nx; ++x) {
        CHECK(c.vol.at(x, y, z) ==
              ph.t1n.at(c.spec.ox + x, c.spec.oy + y, c.spec.oz + z));
        CHECK(c.mask.at(x, y, z) ==
              ph.brain.at(c.spec.ox + x, c.spec.oy + y, c.spec.oz + z));
      }
  // support is fully inside the patch
  for (int z = 0; z < ph.t1n.dims.nz; ++z)
    for (int y = 0; y < ph.t1n.dims.ny; ++y)
      for (int x = 0; x < ph.t1n.dims.nx; ++x) {
        if (ph.t1n.at(x, y, z) == 0.0) continue;
        CHECK(x >= c.spec.ox);
        CHECK(x < c.spec.ox + patch.nx);
        CHECK(y >= c.spec.oy);
        CHECK(y < c.spec.oy + patch.ny);
        CHECK(z >= c.spec.oz);
        CHECK(z < c.spec.oz + patch.nz);
      }
}

TEST_CASE("crop rejects oversized supports and mismatched grids") {
  const Phantom ph = test_phantom();
  CHECK_THROWS_AS(crop_to_patch(ph.t1n, ph.brain, Dims3{8, 8, 8}),
                  BrainTooLarge);
  CHECK_THROWS_AS(crop_to_patch(ph.t1n, ph.brain, Dims3{25, 24, 24}),
                  DimMismatch);  // patch exceeds the volume
  CHECK_THROWS_AS(
      crop_to_patch(ph.t1n, LabelMask::zeros(Dims3{24, 24, 25}), {20, 20, 20}),
      DimMismatch);
}

TEST_CASE("stitching the cropped original back is the identity") {
  const Phantom ph = test_phantom();
  RngStream s(5, "stitch-mask", 0);
  LabelMask grid_mask = LabelMask::zeros(ph.t1n.dims);
  for (auto& l : grid_mask.labels)
    l = static_cast<std::uint8_t>(s.uniform_index(3));
  const PatchCrop c = crop_to_patch(ph.t1n, grid_mask, {20, 20, 20});
  // raw-tagged prediction: inserted unchanged
  const Volume out = stitch(ph.t1n, c.vol, c.spec, grid_mask);
  CHECK(out.voxels == ph.t1n.voxels);
}

TEST_CASE("an empty mask gates every prediction voxel out") {
  const Phantom ph = test_phantom();
  const PatchCrop c = crop_to_patch(ph.t1n, ph.brain, {20, 20, 20});
  Volume garbage = c.vol;
  for (double& x : garbage.voxels) x = -1234.5;
  const Volume out =
      stitch(ph.t1n, garbage, c.spec, LabelMask::zeros(ph.t1n.dims));
  CHECK(out.voxels == ph.t1n.voxels);
}

TEST_CASE("stitch only writes masked voxels inside the patch") {
  const Phantom ph = test_phantom();
  RngStream s(6, "stitch-prop", 0);
  LabelMask mask = LabelMask::zeros(ph.t1n.dims);
  for (auto& l : mask.labels) l = static_cast<std::uint8_t>(s.uniform_index(3));
  const PatchCrop c = crop_to_patch(ph.t1n, mask, {20, 20, 20});
  Volume pred = c.vol;
  for (double& x : pred.voxels) x = s.uniform(0.0, 2.0);
  const Volume out = stitch(ph.t1n, pred, c.spec, mask);
  const Dims3 pd = c.spec.dims;
  for (int z = 0; z < ph.t1n.dims.nz; ++z)
    for (int y = 0; y < ph.t1n.dims.ny; ++y)
      for (int x = 0; x < ph.t1n.dims.nx; ++x) {
        const bool in_patch = x >= c.spec.ox && x < c.spec.ox + pd.nx &&
                              y >= c.spec.oy && y < c.spec.oy + pd.ny &&
                              z >= c.spec.oz && z < c.spec.oz + pd.nz;
        if (in_patch && mask.at(x, y, z) != 0)
          CHECK(out.at(x, y, z) ==
                pred.at(x - c.spec.ox, y - c.spec.oy, z - c.spec.oz));
        else
          CHECK(out.at(x, y, z) == ph.t1n.at(x, y, z));  // untouched
      }
}

TEST_CASE("stitch inverts the range tag of the prediction") {
  const Dims3 grid{9, 9, 9};
  Volume orig = Volume::zeros(grid);
  orig.at(1, 1, 1) = 4.0;  // peak M = 4
  orig.at(2, 2, 2) = 2.0;
  LabelMask mask = LabelMask::zeros(grid);
  mask.at(2, 2, 2) = kHealthy;
  PatchSpec spec;
  spec.dims = {3, 3, 3};
  spec.ox = spec.oy = spec.oz = 1;

  Volume pred = Volume::zeros(spec.dims);
  pred.range = RangeTag::signed_range;
  pred.at(1, 1, 1) = 0.5;  // signed -> (0.5+1)/2 * 4 = 3
  Volume out = stitch(orig, pred, spec, mask);
  CHECK(out.at(2, 2, 2) == 3.0);
  CHECK(out.at(1, 1, 1) == 4.0);

  pred.range = RangeTag::unit;
  pred.at(1, 1, 1) = 0.25;  // unit -> 0.25 * 4 = 1
  out = stitch(orig, pred, spec, mask);
  CHECK(out.at(2, 2, 2) == 1.0);

  pred.range = RangeTag::raw;
  pred.at(1, 1, 1) = 7.5;  // raw -> unchanged
  out = stitch(orig, pred, spec, mask);
  CHECK(out.at(2, 2, 2) == 7.5);
}

TEST_CASE("stitch validates the spec against both volumes") {
  const Phantom ph = test_phantom();
  const PatchCrop c = crop_to_patch(ph.t1n, ph.brain, {20, 20, 20});
  PatchSpec bad = c.spec;
  bad.ox = 10;  // 10 + 20 > 24
  CHECK_THROWS_AS(stitch(ph.t1n, c.vol, bad, ph.brain), DimMismatch);
  PatchSpec wrong_dims = c.spec;
  wrong_dims.dims = {19, 20, 20};
  CHECK_THROWS_AS(stitch(ph.t1n, c.vol, wrong_dims, ph.brain), DimMismatch);
  CHECK_THROWS_AS(
      stitch(ph.t1n, c.vol, c.spec, LabelMask::zeros(Dims3{24, 24, 23})),
      DimMismatch);
}

TEST_CASE("merge_masks unions the labels with unhealthy priority") {
  const Dims3 d{3, 1, 1};
  LabelMask h = LabelMask::zeros(d);
  LabelMask u = LabelMask::zeros(d);
  h.at(0, 0, 0) = kHealthy;
  h.at(1, 0, 0) = kHealthy;
  u.at(1, 0, 0) = kUnhealthy;
  u.at(2, 0, 0) = kUnhealthy;
  const LabelMask m = merge_masks(h, u);
  CHECK(m.at(0, 0, 0) == kHealthy);
  CHECK(m.at(1, 0, 0) == kUnhealthy);  // unhealthy wins the overlap
  CHECK(m.at(2, 0, 0) == kUnhealthy);
  CHECK_THROWS_AS(merge_masks(h, LabelMask::zeros(Dims3{3, 1, 2})),
                  DimMismatch);
}

TEST_CASE("empty masks make the input channel equal the target") {
  const Phantom ph = test_phantom();
  const LabelMask none = LabelMask::zeros(ph.t1n.dims);
  const TrainingPair pair =
      make_training_pair(ph.t1n, none, none, {20, 20, 20});
  const Shape in_shape = pair.input.shape();
  REQUIRE(in_shape == Shape{2, 20, 20, 20});
  REQUIRE(pair.target.shape() == Shape{1, 20, 20, 20});
  const std::vector<double>& in = pair.input.values();
  const std::vector<double>& tg = pair.target.values();
  const std::size_t n = tg.size();
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(in[i] == tg[i]);      // channel 0: nothing voided
    CHECK(in[n + i] == 0.0);    // channel 1: indicator all zero
  }
  CHECK(pair.mask.count_masked() == 0);
}

TEST_CASE("training pairs match the stepwise composition oracle") {
  const Phantom ph = test_phantom();
  MaskGenParams params;
  RngStream ms(8, "pair-mask", 0);
  const LabelMask healthy =
      generate_healthy_mask(ph.brain, ph.unhealthy, params, ms);
  const Dims3 patch{20, 20, 20};
  const TrainingPair pair =
      make_training_pair(ph.t1n, healthy, ph.unhealthy, patch);

  // independent composition: merge, crop, normalize unit -> signed, void
  const LabelMask combined = merge_masks(healthy, ph.unhealthy);
  const PatchCrop crop = crop_to_patch(ph.t1n, combined, patch);
  const Volume target_v = rescale_signed(normalize_unit(crop.vol));
  const Volume voided_v = void_image(target_v, crop.mask);

  const std::vector<double>& in = pair.input.values();
  const std::vector<double>& tg = pair.target.values();
  const std::size_t n = tg.size();
  for (int z = 0; z < patch.nz; ++z)
    for (int y = 0; y < patch.ny; ++y)
      for (int x = 0; x < patch.nx; ++x) {
        const std::size_t i = tidx(patch, x, y, z);
        CHECK(tg[i] == target_v.at(x, y, z));
        CHECK(in[i] == voided_v.at(x, y, z));
        const bool masked = crop.mask.at(x, y, z) != 0;
        CHECK(in[n + i] == (masked ? 1.0 : 0.0));
        if (!masked) CHECK(in[i] == tg[i]);  // voiding confined to the mask
        CHECK(pair.mask.at(x, y, z) == crop.mask.at(x, y, z));
      }
  CHECK(pair.spec.ox == crop.spec.ox);
  CHECK(pair.spec.oy == crop.spec.oy);
  CHECK(pair.spec.oz == crop.spec.oz);
}

TEST_CASE("identity roundtrip: crop, copy, stitch reproduces the phantom") {
  for (std::uint64_t seed : {1ull, 2ull, 9ull}) {
    const Phantom ph = test_phantom(seed);
    MaskGenParams params;
    RngStream ms(seed, "roundtrip", 0);
    const LabelMask healthy =
        generate_healthy_mask(ph.brain, ph.unhealthy, params, ms);
    const LabelMask combined = merge_masks(healthy, ph.unhealthy);
    const PatchCrop c = crop_to_patch(ph.t1n, combined, {20, 20, 20});
    const Volume out = stitch(ph.t1n, c.vol, c.spec, combined);
    CHECK(out.voxels == ph.t1n.voxels);
  }
}
