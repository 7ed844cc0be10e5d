#ifndef VF_CONVERT_HPP
#define VF_CONVERT_HPP

#include "vf/tensor.hpp"
#include "vf/volume.hpp"

namespace vf {

// Volumes store x-fastest, tensors [C,X,Y,Z] store z-fastest; these helpers
// transpose between the two layouts coordinate-faithfully.

Tensor volume_to_tensor(const Volume& v);  // [1,nx,ny,nz]

// Accepts [1,X,Y,Z]; the tag is attached unchecked.
Volume tensor_to_volume(const Tensor& t, RangeTag tag);

// [1,nx,ny,nz] indicator: 1 where the voxel label is among the selected
// classes, else 0.
Tensor label_indicator(const LabelMask& m, bool healthy, bool unhealthy);

}  // namespace vf

#endif  // VF_CONVERT_HPP
