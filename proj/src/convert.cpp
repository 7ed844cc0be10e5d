#include "vf/convert.hpp"

namespace vf {

Tensor volume_to_tensor(const Volume& v) {
  Tensor t({1, v.dims.nx, v.dims.ny, v.dims.nz});
  double* d = t.data();
  std::int64_t i = 0;
  for (int x = 0; x < v.dims.nx; ++x)
    for (int y = 0; y < v.dims.ny; ++y)
      for (int z = 0; z < v.dims.nz; ++z, ++i) d[i] = v.at(x, y, z);
  return t;
}

Volume tensor_to_volume(const Tensor& t, RangeTag tag) {
  if (t.rank() != 4 || t.shape()[0] != 1)
    throw ShapeError("tensor_to_volume: expected [1,X,Y,Z], got " +
                     shape_str(t.shape()));
  Volume v = Volume::zeros({t.shape()[1], t.shape()[2], t.shape()[3]}, tag);
  const double* d = t.data();
  std::int64_t i = 0;
  for (int x = 0; x < v.dims.nx; ++x)
    for (int y = 0; y < v.dims.ny; ++y)
      for (int z = 0; z < v.dims.nz; ++z, ++i) v.at(x, y, z) = d[i];
  return v;
}

Tensor label_indicator(const LabelMask& m, bool healthy, bool unhealthy) {
  Tensor t({1, m.dims.nx, m.dims.ny, m.dims.nz});
  double* d = t.data();
  std::int64_t i = 0;
  for (int x = 0; x < m.dims.nx; ++x)
    for (int y = 0; y < m.dims.ny; ++y)
      for (int z = 0; z < m.dims.nz; ++z, ++i) {
        const std::uint8_t lab = m.at(x, y, z);
        d[i] = (healthy && lab == kHealthy) || (unhealthy && lab == kUnhealthy)
                   ? 1.0
                   : 0.0;
      }
  return t;
}

}  // namespace vf
