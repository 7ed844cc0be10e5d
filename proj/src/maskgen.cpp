#include "vf/maskgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace vf {

void MaskGenParams::validate() const {
  if (!(fmin > 0.0 && fmin < fmax && fmax < 1.0))
    throw ConfigError("mask fraction range must satisfy 0 < fmin < fmax < 1");
  if (min_blobs < 1 || max_blobs < min_blobs)
    throw ConfigError("blob count range invalid");
  if (dilation_radius < 0) throw ConfigError("dilation radius must be >= 0");
  if (max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
}

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Mat3 {
  double m[3][3];
};

Mat3 euler_rotation(double a, double b, double c) {
  const double ca = std::cos(a), sa = std::sin(a);
  const double cb = std::cos(b), sb = std::sin(b);
  const double cc = std::cos(c), sc = std::sin(c);
  // Rz(c) * Ry(b) * Rx(a)
  Mat3 r;
  r.m[0][0] = cc * cb;
  r.m[0][1] = cc * sb * sa - sc * ca;
  r.m[0][2] = cc * sb * ca + sc * sa;
  r.m[1][0] = sc * cb;
  r.m[1][1] = sc * sb * sa + cc * ca;
  r.m[1][2] = sc * sb * ca - cc * sa;
  r.m[2][0] = -sb;
  r.m[2][1] = cb * sa;
  r.m[2][2] = cb * ca;
  return r;
}

std::vector<std::array<int, 3>> ball_offsets(int r) {
  std::vector<std::array<int, 3>> out;
  for (int dz = -r; dz <= r; ++dz)
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx)
        if (dx * dx + dy * dy + dz * dz <= r * r)
          out.push_back({dx, dy, dz});
  return out;
}

}  // namespace

LabelMask generate_healthy_mask(const LabelMask& brain,
                                const LabelMask& unhealthy,
                                const MaskGenParams& params,
                                RngStream& stream) {
  params.validate();
  if (brain.dims != unhealthy.dims)
    throw DimMismatch("generate_healthy_mask: grids differ");
  const Dims3 d = brain.dims;

  std::vector<std::int64_t> brain_voxels;
  for (std::int64_t i = 0; i < d.count(); ++i)
    if (brain.labels[static_cast<std::size_t>(i)] != kBackground)
      brain_voxels.push_back(i);
  if (brain_voxels.empty())
    throw EmptyMask("generate_healthy_mask: empty brain support");
  const double brain_count = static_cast<double>(brain_voxels.size());

  // voxels too close to unhealthy tissue
  std::vector<std::uint8_t> excluded(static_cast<std::size_t>(d.count()), 0);
  const auto ball = ball_offsets(params.dilation_radius);
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        if (unhealthy.at(x, y, z) != kUnhealthy) continue;
        for (const auto& off : ball) {
          const int px = x + off[0], py = y + off[1], pz = z + off[2];
          if (px < 0 || px >= d.nx || py < 0 || py >= d.ny || pz < 0 ||
              pz >= d.nz)
            continue;
          excluded[static_cast<std::size_t>(px) +
                   static_cast<std::size_t>(d.nx) *
                       (static_cast<std::size_t>(py) +
                        static_cast<std::size_t>(d.ny) * pz)] = 1;
        }
      }

  std::vector<std::uint8_t> candidate(static_cast<std::size_t>(d.count()));
  for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
    std::fill(candidate.begin(), candidate.end(), 0);
    const int blobs =
        params.min_blobs +
        static_cast<int>(stream.uniform_index(
            static_cast<std::uint64_t>(params.max_blobs - params.min_blobs + 1)));
    const double frac = stream.uniform(params.fmin, params.fmax);
    const double per_blob = frac * brain_count / blobs;

    for (int blob = 0; blob < blobs; ++blob) {
      const std::int64_t center_idx = brain_voxels[stream.uniform_index(
          static_cast<std::uint64_t>(brain_voxels.size()))];
      const int cx = static_cast<int>(center_idx % d.nx);
      const int cy = static_cast<int>((center_idx / d.nx) % d.ny);
      const int cz = static_cast<int>(center_idx / (static_cast<std::int64_t>(d.nx) * d.ny));
      const double u1 = stream.uniform(0.6, 1.4);
      const double u2 = stream.uniform(0.6, 1.4);
      const double u3 = stream.uniform(0.6, 1.4);
      const double s =
          std::cbrt(per_blob * 3.0 / (4.0 * kPi * u1 * u2 * u3));
      const double ax = s * u1, ay = s * u2, az = s * u3;
      const Mat3 rot = euler_rotation(stream.uniform(0.0, 2.0 * kPi),
                                      stream.uniform(0.0, 2.0 * kPi),
                                      stream.uniform(0.0, 2.0 * kPi));
      const double rb = s * std::max({u1, u2, u3});
      const int x0 = std::max(0, static_cast<int>(std::floor(cx - rb)));
      const int x1 = std::min(d.nx - 1, static_cast<int>(std::ceil(cx + rb)));
      const int y0 = std::max(0, static_cast<int>(std::floor(cy - rb)));
      const int y1 = std::min(d.ny - 1, static_cast<int>(std::ceil(cy + rb)));
      const int z0 = std::max(0, static_cast<int>(std::floor(cz - rb)));
      const int z1 = std::min(d.nz - 1, static_cast<int>(std::ceil(cz + rb)));
      for (int z = z0; z <= z1; ++z)
        for (int y = y0; y <= y1; ++y)
          for (int x = x0; x <= x1; ++x) {
            if (brain.at(x, y, z) == kBackground) continue;
            const double dx = x - cx, dy = y - cy, dz = z - cz;
            // into the ellipsoid frame: R^T * d
            const double qx =
                rot.m[0][0] * dx + rot.m[1][0] * dy + rot.m[2][0] * dz;
            const double qy =
                rot.m[0][1] * dx + rot.m[1][1] * dy + rot.m[2][1] * dz;
            const double qz =
                rot.m[0][2] * dx + rot.m[1][2] * dy + rot.m[2][2] * dz;
            const double e = (qx / ax) * (qx / ax) + (qy / ay) * (qy / ay) +
                             (qz / az) * (qz / az);
            if (e <= 1.0)
              candidate[static_cast<std::size_t>(x) +
                        static_cast<std::size_t>(d.nx) *
                            (static_cast<std::size_t>(y) +
                             static_cast<std::size_t>(d.ny) * z)] = 1;
          }
    }

    std::int64_t realized = 0;
    bool clash = false;
    for (std::size_t i = 0; i < candidate.size(); ++i) {
      if (!candidate[i]) continue;
      ++realized;
      if (excluded[i]) {
        clash = true;
        break;
      }
    }
    if (clash) continue;
    const double realized_frac = static_cast<double>(realized) / brain_count;
    if (realized < 1 || realized_frac < params.fmin ||
        realized_frac > params.fmax)
      continue;

    LabelMask out = LabelMask::zeros(d);
    for (std::size_t i = 0; i < candidate.size(); ++i)
      if (candidate[i]) out.labels[i] = kHealthy;
    return out;
  }
  throw MaskGenFailure("generate_healthy_mask: no admissible region in " +
                       std::to_string(params.max_attempts) + " attempts");
}

AugmentSpec sample_augment(RngStream& stream) {
  AugmentSpec s;
  s.mirror_x = stream.bernoulli(0.5);
  s.mirror_y = stream.bernoulli(0.5);
  s.mirror_z = stream.bernoulli(0.5);
  s.theta_xy = stream.uniform(0.0, 360.0);
  s.theta_yz = stream.uniform(0.0, 360.0);
  return s;
}

namespace {

template <typename GridT>
GridT mirror_grid(const GridT& in, bool fx, bool fy, bool fz) {
  GridT out = in;
  const Dims3 d = in.dims;
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x)
        out.at(x, y, z) = in.at(fx ? d.nx - 1 - x : x, fy ? d.ny - 1 - y : y,
                                fz ? d.nz - 1 - z : z);
  return out;
}

struct InverseRotation {
  double cxy, sxy, cyz, syz;
  double cx, cy, cz;

  // source coordinates for an output voxel: undo Y-Z, then undo X-Y
  void map(int x, int y, int z, double& sx, double& sy, double& sz) const {
    const double dx = x - cx, dy = y - cy, dz = z - cz;
    const double ry = cyz * dy + syz * dz;
    const double rz = -syz * dy + cyz * dz;
    sx = cxy * dx + sxy * ry + cx;
    sy = -sxy * dx + cxy * ry + cy;
    sz = rz + cz;
  }
};

double normalize_deg(double deg) {
  double t = std::fmod(deg, 360.0);
  if (t < 0.0) t += 360.0;
  return t;
}

InverseRotation make_inverse(const Dims3& d, double xy_deg, double yz_deg) {
  const double axy = xy_deg * kPi / 180.0;
  const double ayz = yz_deg * kPi / 180.0;
  InverseRotation inv;
  inv.cxy = std::cos(axy);
  inv.sxy = std::sin(axy);
  inv.cyz = std::cos(ayz);
  inv.syz = std::sin(ayz);
  inv.cx = (d.nx - 1) / 2.0;
  inv.cy = (d.ny - 1) / 2.0;
  inv.cz = (d.nz - 1) / 2.0;
  return inv;
}

bool in_grid(const Dims3& d, long long x, long long y, long long z) {
  return x >= 0 && x < d.nx && y >= 0 && y < d.ny && z >= 0 && z < d.nz;
}

double sample_trilinear(const Volume& v, double sx, double sy, double sz) {
  const double fx = std::floor(sx), fy = std::floor(sy), fz = std::floor(sz);
  const long long x0 = static_cast<long long>(fx);
  const long long y0 = static_cast<long long>(fy);
  const long long z0 = static_cast<long long>(fz);
  const double tx = sx - fx, ty = sy - fy, tz = sz - fz;
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const long long px = x0 + dx, py = y0 + dy, pz = z0 + dz;
        if (!in_grid(v.dims, px, py, pz)) continue;  // fill 0
        const double wgt = (dx ? tx : 1.0 - tx) * (dy ? ty : 1.0 - ty) *
                           (dz ? tz : 1.0 - tz);
        acc += wgt * v.at(static_cast<int>(px), static_cast<int>(py),
                          static_cast<int>(pz));
      }
  return acc;
}

}  // namespace

Volume apply_mirror(const Volume& v, bool fx, bool fy, bool fz) {
  return mirror_grid(v, fx, fy, fz);
}

LabelMask apply_mirror(const LabelMask& m, bool fx, bool fy, bool fz) {
  return mirror_grid(m, fx, fy, fz);
}

Interp interp_from_string(const std::string& s) {
  if (s == "nearest") return Interp::nearest;
  if (s == "trilinear") return Interp::trilinear;
  throw ConfigError("unknown interpolation '" + s + "'");
}

Volume apply_rotation(const Volume& v, double theta_xy_deg,
                      double theta_yz_deg, Interp interp) {
  const double xy = normalize_deg(theta_xy_deg);
  const double yz = normalize_deg(theta_yz_deg);
  if (xy == 0.0 && yz == 0.0) return v;
  const InverseRotation inv = make_inverse(v.dims, xy, yz);
  Volume out = Volume::zeros(v.dims, v.range);
  for (int z = 0; z < v.dims.nz; ++z)
    for (int y = 0; y < v.dims.ny; ++y)
      for (int x = 0; x < v.dims.nx; ++x) {
        double sx, sy, sz;
        inv.map(x, y, z, sx, sy, sz);
        if (interp == Interp::nearest) {
          const long long px = std::llround(sx);
          const long long py = std::llround(sy);
          const long long pz = std::llround(sz);
          if (in_grid(v.dims, px, py, pz))
            out.at(x, y, z) = v.at(static_cast<int>(px), static_cast<int>(py),
                                   static_cast<int>(pz));
        } else {
          out.at(x, y, z) = sample_trilinear(v, sx, sy, sz);
        }
      }
  return out;
}

LabelMask apply_rotation(const LabelMask& m, double theta_xy_deg,
                         double theta_yz_deg) {
  const double xy = normalize_deg(theta_xy_deg);
  const double yz = normalize_deg(theta_yz_deg);
  if (xy == 0.0 && yz == 0.0) return m;
  const InverseRotation inv = make_inverse(m.dims, xy, yz);
  LabelMask out = LabelMask::zeros(m.dims);
  for (int z = 0; z < m.dims.nz; ++z)
    for (int y = 0; y < m.dims.ny; ++y)
      for (int x = 0; x < m.dims.nx; ++x) {
        double sx, sy, sz;
        inv.map(x, y, z, sx, sy, sz);
        const long long px = std::llround(sx);
        const long long py = std::llround(sy);
        const long long pz = std::llround(sz);
        if (in_grid(m.dims, px, py, pz))
          out.at(x, y, z) = m.at(static_cast<int>(px), static_cast<int>(py),
                                 static_cast<int>(pz));
      }
  return out;
}

Volume apply_augment(const Volume& v, const AugmentSpec& s, Interp interp) {
  Volume out = apply_mirror(v, s.mirror_x, s.mirror_y, s.mirror_z);
  return apply_rotation(out, s.theta_xy, s.theta_yz, interp);
}

LabelMask apply_augment(const LabelMask& m, const AugmentSpec& s) {
  LabelMask out = apply_mirror(m, s.mirror_x, s.mirror_y, s.mirror_z);
  return apply_rotation(out, s.theta_xy, s.theta_yz);
}

std::vector<MaskAugmentPair> build_augmented_set(const LabelMask& brain,
                                                 const LabelMask& unhealthy,
                                                 const MaskGenParams& params,
                                                 int n_masks,
                                                 RngStream& stream) {
  if (n_masks < 1) throw ConfigError("build_augmented_set: n_masks must be >= 1");
  std::vector<MaskAugmentPair> out;
  out.reserve(static_cast<std::size_t>(n_masks));
  for (int k = 0; k < n_masks; ++k) {
    LabelMask mask;
    bool distinct = false;
    for (int attempt = 0; attempt < params.max_attempts && !distinct; ++attempt) {
      mask = generate_healthy_mask(brain, unhealthy, params, stream);
      distinct = true;
      for (const MaskAugmentPair& prev : out)
        if (prev.healthy.labels == mask.labels) {
          distinct = false;
          break;
        }
    }
    if (!distinct)
      throw MaskGenFailure("build_augmented_set: could not draw a distinct mask");
    out.push_back({std::move(mask), sample_augment(stream)});
  }
  return out;
}

}  // namespace vf
