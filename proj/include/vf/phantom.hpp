#ifndef VF_PHANTOM_HPP
#define VF_PHANTOM_HPP

#include <cstdint>

#include "vf/volume.hpp"

namespace vf {

// Synthetic stand-in for a skull-stripped scan: an ellipsoidal brain with
// concentric smooth intensity shells, seeded texture noise, and an optional
// bright ellipsoidal lesion labeled unhealthy.
struct PhantomSpec {
  Dims3 dims{32, 32, 32};
  int shells = 3;
  double noise = 0.02;  // relative amplitude of the intensity scale
  bool tumor = true;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

struct Phantom {
  Volume t1n;           // raw intensities, zero outside the brain
  LabelMask brain;      // support (healthy label inside the brain)
  LabelMask unhealthy;  // lesion voxels, empty when tumor is off
};

Phantom synth_phantom(const PhantomSpec& spec);

}  // namespace vf

#endif  // VF_PHANTOM_HPP
