#ifndef VF_TESTS_ORACLES_HPP
#define VF_TESTS_ORACLES_HPP

// Independent reference implementations used to pin the library's numerics.
// Deliberately naive: straight nested loops, no code shared with the library
// execution paths.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

struct ConvSpec {
  int ci = 1, co = 1;
  int ix = 1, iy = 1, iz = 1;
  int k = 3, pad = 1, stride = 1;

  int ox() const { return (ix + 2 * pad - k) / stride + 1; }
  int oy() const { return (iy + 2 * pad - k) / stride + 1; }
  int oz() const { return (iz + 2 * pad - k) / stride + 1; }
};

// Direct seven-loop cross-correlation, input [ci,ix,iy,iz] row-major,
// kernel [co,ci,k,k,k], bias [co].
inline std::vector<double> conv3d(const std::vector<double>& in,
                                  const std::vector<double>& w,
                                  const std::vector<double>& b,
                                  const ConvSpec& s) {
  const int ox = s.ox(), oy = s.oy(), oz = s.oz();
  std::vector<double> out(static_cast<std::size_t>(s.co) * ox * oy * oz);
  auto in_at = [&](int c, int x, int y, int z) {
    return in[((static_cast<std::size_t>(c) * s.ix + x) * s.iy + y) * s.iz + z];
  };
  auto w_at = [&](int co, int ci, int kx, int ky, int kz) {
    return w[(((static_cast<std::size_t>(co) * s.ci + ci) * s.k + kx) * s.k + ky) * s.k + kz];
  };
  std::size_t o = 0;
  for (int co = 0; co < s.co; ++co)
    for (int x = 0; x < ox; ++x)
      for (int y = 0; y < oy; ++y)
        for (int z = 0; z < oz; ++z, ++o) {
          double acc = b[static_cast<std::size_t>(co)];
          for (int ci = 0; ci < s.ci; ++ci)
            for (int kx = 0; kx < s.k; ++kx)
              for (int ky = 0; ky < s.k; ++ky)
                for (int kz = 0; kz < s.k; ++kz) {
                  const int sx = x * s.stride - s.pad + kx;
                  const int sy = y * s.stride - s.pad + ky;
                  const int sz = z * s.stride - s.pad + kz;
                  if (sx < 0 || sx >= s.ix || sy < 0 || sy >= s.iy ||
                      sz < 0 || sz >= s.iz)
                    continue;
                  acc += w_at(co, ci, kx, ky, kz) * in_at(ci, sx, sy, sz);
                }
          out[o] = acc;
        }
  return out;
}

inline double ssim_formula(double mx, double my, double vx, double vy,
                           double cov, double c1, double c2) {
  return ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
         ((mx * mx + my * my + c1) * (vx + vy + c2));
}

// Biased moments over an explicit index list.
inline double ssim_over(const std::vector<double>& x,
                        const std::vector<double>& y,
                        const std::vector<std::size_t>& idx, double c1,
                        double c2) {
  const double n = static_cast<double>(idx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i : idx) { mx += x[i]; my += y[i]; }
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0, cov = 0.0;
  for (std::size_t i : idx) {
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
    cov += (x[i] - mx) * (y[i] - my);
  }
  return ssim_formula(mx, my, vx / n, vy / n, cov / n, c1, c2);
}

inline double ssim_global(const std::vector<double>& x,
                          const std::vector<double>& y, double c1, double c2) {
  std::vector<std::size_t> idx(x.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return ssim_over(x, y, idx, c1, c2);
}

// Mean of the similarity formula over every valid window start of a
// [C,X,Y,Z] pair.
inline double ssim_windowed(const std::vector<double>& x,
                            const std::vector<double>& y, int C, int X, int Y,
                            int Z, int win, double c1, double c2) {
  double total = 0.0;
  std::int64_t count = 0;
  for (int c = 0; c < C; ++c)
    for (int x0 = 0; x0 + win <= X; ++x0)
      for (int y0 = 0; y0 + win <= Y; ++y0)
        for (int z0 = 0; z0 + win <= Z; ++z0) {
          std::vector<std::size_t> idx;
          for (int i = x0; i < x0 + win; ++i)
            for (int j = y0; j < y0 + win; ++j)
              for (int k = z0; k < z0 + win; ++k)
                idx.push_back(((static_cast<std::size_t>(c) * X + i) * Y + j) * Z + k);
          total += ssim_over(x, y, idx, c1, c2);
          ++count;
        }
  return total / static_cast<double>(count);
}

// Central finite difference of a re-evaluated scalar function with respect
// to one coordinate, restoring the coordinate afterwards.
inline double central_diff(const std::function<double()>& f, double* coord,
                           double h = 1e-5) {
  const double saved = *coord;
  *coord = saved + h;
  const double fp = f();
  *coord = saved - h;
  const double fm = f();
  *coord = saved;
  return (fp - fm) / (2.0 * h);
}

inline double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-6});
}

}  // namespace oracle

#endif  // VF_TESTS_ORACLES_HPP
