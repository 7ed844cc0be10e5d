#ifndef VF_PATCH_HPP
#define VF_PATCH_HPP

#include "vf/tensor.hpp"
#include "vf/volume.hpp"

namespace vf {

// Placement of a network-sized patch inside a full volume.
struct PatchSpec {
  Dims3 dims{128, 128, 96};
  int ox = 0, oy = 0, oz = 0;
};

struct PatchCrop {
  Volume vol;
  LabelMask mask;
  PatchSpec spec;
};

// Crops volume and mask to patch_dims, centered on the bounding box of the
// volume's nonzero support (ties toward the lower index) and clamped to the
// grid. An all-zero volume centers the patch in the grid. Throws
// BrainTooLarge when the support does not fit, DimMismatch when patch_dims
// exceed the volume or the mask grid differs.
PatchCrop crop_to_patch(const Volume& v, const LabelMask& m, Dims3 patch_dims);

// Reinserts a patch prediction into the original volume: voxels inside the
// patch with mask label healthy or unhealthy take the prediction, everything
// else keeps the original bit-exactly. The prediction is mapped back to raw
// intensities through the inverse of the normalization chain indicated by
// its range tag, with M = max(original): signed -> (p+1)/2*M, unit -> p*M,
// raw -> unchanged.
Volume stitch(const Volume& original, const Volume& prediction,
              const PatchSpec& spec, const LabelMask& mask);

// One training example in network space.
struct TrainingPair {
  Tensor input;    // [2,px,py,pz]: voided signed patch + combined {0,1} mask
  Tensor target;   // [1,px,py,pz]: signed ground-truth patch
  LabelMask mask;  // patch-sized combined labels (healthy=1, unhealthy=2)
  PatchSpec spec;
};

// Merges the masks, crops around the ground truth's support, normalizes the
// patch (unit then signed), and voids the combined region at signed fill 0.
TrainingPair make_training_pair(const Volume& t1n, const LabelMask& healthy,
                                const LabelMask& unhealthy, Dims3 patch_dims);

// Single-label union of two masks; unhealthy wins where both claim a voxel.
LabelMask merge_masks(const LabelMask& healthy, const LabelMask& unhealthy);

}  // namespace vf

#endif  // VF_PATCH_HPP
