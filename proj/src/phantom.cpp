#include "vf/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "vf/rng.hpp"

namespace vf {

void PhantomSpec::validate() const {
  if (dims.nx < 16 || dims.ny < 16 || dims.nz < 16)
    throw ConfigError("phantom dims must be >= 16 per axis");
  if (shells < 1) throw ConfigError("phantom needs >= 1 shell");
  if (noise < 0.0) throw ConfigError("noise amplitude must be >= 0");
}

Phantom synth_phantom(const PhantomSpec& spec) {
  spec.validate();
  constexpr double kPi = 3.14159265358979323846;
  const Dims3 d = spec.dims;
  const double cx = (d.nx - 1) / 2.0;
  const double cy = (d.ny - 1) / 2.0;
  const double cz = (d.nz - 1) / 2.0;
  const double ax = 0.42 * d.nx, ay = 0.42 * d.ny, az = 0.42 * d.nz;
  // lesion offset toward +x, safely inside the brain
  const double tx = cx + 0.18 * d.nx, ty = cy, tz = cz;
  const double tr_x = 0.11 * d.nx, tr_y = 0.10 * d.ny, tr_z = 0.10 * d.nz;
  constexpr double kScale = 1000.0;

  RngStream noise_stream(spec.seed, "phantom", 0);
  Phantom ph;
  ph.t1n = Volume::zeros(d, RangeTag::raw);
  ph.brain = LabelMask::zeros(d);
  ph.unhealthy = LabelMask::zeros(d);

  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        const double ex = (x - cx) / ax, ey = (y - cy) / ay, ez = (z - cz) / az;
        const double rho2 = ex * ex + ey * ey + ez * ez;
        if (rho2 > 1.0) continue;
        ph.brain.at(x, y, z) = kHealthy;
        const double rho = std::sqrt(rho2);
        double val =
            kScale * (0.35 + 0.45 * (0.5 + 0.5 * std::sin(2.0 * kPi * spec.shells * rho)));
        if (spec.tumor) {
          const double ux = (x - tx) / tr_x, uy = (y - ty) / tr_y,
                       uz = (z - tz) / tr_z;
          if (ux * ux + uy * uy + uz * uz <= 1.0) {
            ph.unhealthy.at(x, y, z) = kUnhealthy;
            val = kScale * 0.95;
          }
        }
        if (spec.noise > 0.0) val += kScale * spec.noise * noise_stream.normal();
        ph.t1n.at(x, y, z) = std::max(1.0, val);
      }
  return ph;
}

}  // namespace vf
