#ifndef VF_MASKGEN_HPP
#define VF_MASKGEN_HPP

#include <string>
#include <vector>

#include "vf/rng.hpp"
#include "vf/volume.hpp"

namespace vf {

struct MaskGenParams {
  double fmin = 0.005;  // target volume fraction of brain, lower bound
  double fmax = 0.05;
  int min_blobs = 1;
  int max_blobs = 3;
  int dilation_radius = 3;  // safety margin around unhealthy tissue, voxels
  int max_attempts = 100;

  void validate() const;  // throws ConfigError
};

// Healthy-region sampler: a union of 1-3 randomly oriented ellipsoids with
// centers uniform over the brain support, semi-axes scaled to hit the target
// volume fraction, intersected with the brain and rejection-resampled until
// the region keeps Euclidean distance > dilation_radius from every unhealthy
// voxel and its realized fraction lands in [fmin, fmax]. Brain support is
// any nonzero label.
LabelMask generate_healthy_mask(const LabelMask& brain,
                                const LabelMask& unhealthy,
                                const MaskGenParams& params, RngStream& stream);

struct AugmentSpec {
  bool mirror_x = false;
  bool mirror_y = false;
  bool mirror_z = false;
  double theta_xy = 0.0;  // degrees in [0, 360)
  double theta_yz = 0.0;
};

// Mirror flags Bernoulli(0.5) per axis, angles uniform in [0, 360).
AugmentSpec sample_augment(RngStream& stream);

Volume apply_mirror(const Volume& v, bool fx, bool fy, bool fz);
LabelMask apply_mirror(const LabelMask& m, bool fx, bool fy, bool fz);

enum class Interp : std::uint8_t { nearest, trilinear };
Interp interp_from_string(const std::string& s);  // throws ConfigError

// Rotation about the voxel-center grid midpoint: X-Y plane first, then Y-Z,
// resampled by inverse mapping. Out-of-bounds samples fill with
// 0/background. Zero angles (mod 360) return the input bit-exactly.
Volume apply_rotation(const Volume& v, double theta_xy_deg,
                      double theta_yz_deg, Interp interp);
LabelMask apply_rotation(const LabelMask& m, double theta_xy_deg,
                         double theta_yz_deg);

// Mirror, then rotate.
Volume apply_augment(const Volume& v, const AugmentSpec& s, Interp interp);
LabelMask apply_augment(const LabelMask& m, const AugmentSpec& s);

struct MaskAugmentPair {
  LabelMask healthy;
  AugmentSpec spec;
};

// n_masks pairwise-distinct healthy masks, each with an independently
// sampled AugmentSpec. Distinctness is voxel-set inequality; duplicates are
// resampled, and exhausting max_attempts raises MaskGenFailure.
std::vector<MaskAugmentPair> build_augmented_set(const LabelMask& brain,
                                                 const LabelMask& unhealthy,
                                                 const MaskGenParams& params,
                                                 int n_masks,
                                                 RngStream& stream);

}  // namespace vf

#endif  // VF_MASKGEN_HPP
