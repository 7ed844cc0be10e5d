#include "vf/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "vf/convert.hpp"

namespace vf {

void LossConfig::validate() const {
  if (lambda1 < 0.0 || lambda2 < 0.0)
    throw ConfigError("loss weights must be non-negative");
  if (window < 3 || window % 2 == 0)
    throw ConfigError("ssim window must be odd and >= 3");
  if (!(dynamic_range > 0.0)) throw ConfigError("dynamic range must be positive");
  if (!(k1 > 0.0) || !(k2 > 0.0)) throw ConfigError("k1, k2 must be positive");
}

namespace {

void require_bound(const Tensor& t, const char* op) {
  if (!t.bound()) throw Error(std::string(op) + ": operand not bound to a graph");
}

void require_mask_dims(const Tensor& t, const LabelMask& m, const char* op) {
  if (t.rank() != 4 || t.shape()[0] != 1 || t.shape()[1] != m.dims.nx ||
      t.shape()[2] != m.dims.ny || t.shape()[3] != m.dims.nz)
    throw DimMismatch(std::string(op) + ": tensor " + shape_str(t.shape()) +
                      " does not match mask grid");
}

// Similarity of two patches from their biased moments.
double ssim_formula(double mx, double my, double vx, double vy, double cov,
                    double c1, double c2) {
  return ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
         ((mx * mx + my * my + c1) * (vx + vy + c2));
}

Tensor ssim_from_moments(const Tensor& mx, const Tensor& my, const Tensor& mxx,
                         const Tensor& myy, const Tensor& mxy, double c1,
                         double c2) {
  Tensor vx = sub(mxx, mul(mx, mx));
  Tensor vy = sub(myy, mul(my, my));
  Tensor cov = sub(mxy, mul(mx, my));
  Tensor num = mul(add_scalar(scale(mul(mx, my), 2.0), c1),
                   add_scalar(scale(cov, 2.0), c2));
  Tensor den = mul(add_scalar(add(mul(mx, mx), mul(my, my)), c1),
                   add_scalar(add(vx, vy), c2));
  return div(num, den);
}

}  // namespace

Tensor masked_mae(const Tensor& pred, const Tensor& gt, const LabelMask& healthy) {
  require_bound(pred, "masked_mae");
  require_bound(gt, "masked_mae");
  if (pred.shape() != gt.shape())
    throw ShapeError("masked_mae: shape mismatch " + shape_str(pred.shape()) +
                     " vs " + shape_str(gt.shape()));
  require_mask_dims(pred, healthy, "masked_mae");
  const std::int64_t m = healthy.count_label(kHealthy);
  if (m == 0) throw EmptyMask("masked_mae: no healthy voxels");
  Graph& g = *pred.graph();
  Tensor ind = g.constant(label_indicator(healthy, true, false));
  Tensor total = sum_all(mul(abs(sub(gt, pred)), ind));
  return scale(total, 1.0 / static_cast<double>(m));
}

Tensor ssim(const Tensor& x, const Tensor& y, const LossConfig& cfg) {
  cfg.validate();
  require_bound(x, "ssim");
  require_bound(y, "ssim");
  if (x.shape() != y.shape())
    throw ShapeError("ssim: shape mismatch " + shape_str(x.shape()) + " vs " +
                     shape_str(y.shape()));
  const double c1 = cfg.c1(), c2 = cfg.c2();

  if (cfg.ssim_variant == SsimVariant::global) {
    Tensor mx = mean_all(x);
    Tensor my = mean_all(y);
    Tensor mxx = mean_all(mul(x, x));
    Tensor myy = mean_all(mul(y, y));
    Tensor mxy = mean_all(mul(x, y));
    return ssim_from_moments(mx, my, mxx, myy, mxy, c1, c2);
  }

  if (x.rank() != 4)
    throw ShapeError("ssim windowed: expected [C,X,Y,Z], got " +
                     shape_str(x.shape()));
  for (int axis = 1; axis <= 3; ++axis)
    if (x.shape()[axis] < cfg.window)
      throw WindowTooLarge("ssim: dim " + std::to_string(x.shape()[axis]) +
                           " below window " + std::to_string(cfg.window));
  Graph& g = *x.graph();
  const int w = cfg.window;
  const double wvol = static_cast<double>(w) * w * w;
  const int c = x.shape()[0];
  Tensor kbox = g.constant(Tensor::full({1, c, w, w, w}, 1.0 / wvol));
  Tensor zero = g.constant(Tensor({1}, {0.0}));
  Tensor mx = conv3d(x, kbox, zero, 0, 1);
  Tensor my = conv3d(y, kbox, zero, 0, 1);
  Tensor mxx = conv3d(mul(x, x), kbox, zero, 0, 1);
  Tensor myy = conv3d(mul(y, y), kbox, zero, 0, 1);
  Tensor mxy = conv3d(mul(x, y), kbox, zero, 0, 1);
  return mean_all(ssim_from_moments(mx, my, mxx, myy, mxy, c1, c2));
}

Tensor combined_loss(const Tensor& pred, const Tensor& gt,
                     const LabelMask& healthy, const LossConfig& cfg) {
  cfg.validate();
  Tensor mae = masked_mae(pred, gt, healthy);
  Tensor sim = ssim(pred, gt, cfg);
  Tensor dissim = add_scalar(scale(sim, -1.0), 1.0);
  return add(scale(mae, cfg.lambda1), scale(dissim, cfg.lambda2));
}

double psnr_from_mse(double mse) {
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

ScanMetrics eval_metrics(const Volume& pred, const Volume& gt,
                         const LabelMask& healthy, const LossConfig& cfg,
                         std::string scan_id) {
  cfg.validate();
  if (pred.dims != gt.dims || pred.dims != healthy.dims)
    throw DimMismatch("eval_metrics: volume/mask grids differ");
  const std::int64_t m = healthy.count_label(kHealthy);
  if (m == 0) throw EmptyMask("eval_metrics: no healthy voxels");
  const int w = cfg.window;
  if (pred.dims.nx < w || pred.dims.ny < w || pred.dims.nz < w)
    throw WindowTooLarge("eval_metrics: volume smaller than ssim window");

  double sq = 0.0;
  for (int z = 0; z < pred.dims.nz; ++z)
    for (int y = 0; y < pred.dims.ny; ++y)
      for (int x = 0; x < pred.dims.nx; ++x)
        if (healthy.at(x, y, z) == kHealthy) {
          const double d = pred.at(x, y, z) - gt.at(x, y, z);
          sq += d * d;
        }
  const double mse = sq / static_cast<double>(m);

  const double c1 = cfg.c1(), c2 = cfg.c2();
  const double n = static_cast<double>(w) * w * w;
  const int half = w / 2;
  double ssim_sum = 0.0;
  for (int z = 0; z < pred.dims.nz; ++z)
    for (int y = 0; y < pred.dims.ny; ++y)
      for (int x = 0; x < pred.dims.nx; ++x) {
        if (healthy.at(x, y, z) != kHealthy) continue;
        const int sx = std::clamp(x - half, 0, pred.dims.nx - w);
        const int sy = std::clamp(y - half, 0, pred.dims.ny - w);
        const int sz = std::clamp(z - half, 0, pred.dims.nz - w);
        double mx = 0.0, my = 0.0;
        for (int dz = 0; dz < w; ++dz)
          for (int dy = 0; dy < w; ++dy)
            for (int dx = 0; dx < w; ++dx) {
              mx += pred.at(sx + dx, sy + dy, sz + dz);
              my += gt.at(sx + dx, sy + dy, sz + dz);
            }
        mx /= n;
        my /= n;
        double vx = 0.0, vy = 0.0, cov = 0.0;
        for (int dz = 0; dz < w; ++dz)
          for (int dy = 0; dy < w; ++dy)
            for (int dx = 0; dx < w; ++dx) {
              const double a = pred.at(sx + dx, sy + dy, sz + dz) - mx;
              const double b = gt.at(sx + dx, sy + dy, sz + dz) - my;
              vx += a * a;
              vy += b * b;
              cov += a * b;
            }
        vx /= n;
        vy /= n;
        cov /= n;
        ssim_sum += ssim_formula(mx, my, vx, vy, cov, c1, c2);
      }

  ScanMetrics out;
  out.scan_id = std::move(scan_id);
  out.mse = mse;
  out.psnr = psnr_from_mse(mse);
  out.ssim = ssim_sum / static_cast<double>(m);
  return out;
}

namespace {

double quantile_sorted(const std::vector<double>& v, double q) {
  const double p = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(p);
  if (lo + 1 >= v.size()) return v.back();
  const double frac = p - static_cast<double>(lo);
  return v[lo] + frac * (v[lo + 1] - v[lo]);
}

MetricStats stats_of(std::vector<double> v) {
  MetricStats s;
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  double sq = 0.0;
  for (double x : v) sq += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(v.size()));
  std::sort(v.begin(), v.end());
  s.q25 = quantile_sorted(v, 0.25);
  s.median = quantile_sorted(v, 0.5);
  s.q75 = quantile_sorted(v, 0.75);
  return s;
}

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

EvalReport aggregate_report(const std::vector<ScanMetrics>& metrics) {
  if (metrics.empty()) throw EmptyReport("aggregate_report: no scans");
  std::vector<double> mse, psnr, ssim_v;
  mse.reserve(metrics.size());
  psnr.reserve(metrics.size());
  ssim_v.reserve(metrics.size());
  for (const ScanMetrics& m : metrics) {
    mse.push_back(m.mse);
    psnr.push_back(m.psnr);
    ssim_v.push_back(m.ssim);
  }
  EvalReport r;
  r.scans = metrics;
  r.mse = stats_of(std::move(mse));
  r.psnr = stats_of(std::move(psnr));
  r.ssim = stats_of(std::move(ssim_v));
  return r;
}

namespace {

const char* kStatNames[5] = {"Mean", "Standard deviation", "25 quantile",
                             "Median", "75 quantile"};
const char* kStatKeys[5] = {"mean", "std", "q25", "median", "q75"};

double stat_field(const MetricStats& s, int i) {
  switch (i) {
    case 0: return s.mean;
    case 1: return s.stddev;
    case 2: return s.q25;
    case 3: return s.median;
    default: return s.q75;
  }
}

double& stat_field(MetricStats& s, int i) {
  switch (i) {
    case 0: return s.mean;
    case 1: return s.stddev;
    case 2: return s.q25;
    case 3: return s.median;
    default: return s.q75;
  }
}

}  // namespace

std::string report_table(const EvalReport& r) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-20s %-15s %-15s %-15s\n", "", "MSE",
                "PSNR", "SSIM");
  os << line;
  for (int i = 0; i < 5; ++i) {
    std::snprintf(line, sizeof line, "%-20s %-15s %-15s %-15s\n", kStatNames[i],
                  fmt9(stat_field(r.mse, i)).c_str(),
                  fmt9(stat_field(r.psnr, i)).c_str(),
                  fmt9(stat_field(r.ssim, i)).c_str());
    os << line;
  }
  return os.str();
}

std::string report_kv(const EvalReport& r) {
  std::ostringstream os;
  const MetricStats* metrics[3] = {&r.mse, &r.psnr, &r.ssim};
  const char* names[3] = {"mse", "psnr", "ssim"};
  for (int m = 0; m < 3; ++m)
    for (int i = 0; i < 5; ++i)
      os << names[m] << "." << kStatKeys[i] << " = "
         << fmt9(stat_field(*metrics[m], i)) << "\n";
  return os.str();
}

EvalReport parse_report_kv(const std::string& text) {
  EvalReport r;
  MetricStats* metrics[3] = {&r.mse, &r.psnr, &r.ssim};
  const char* names[3] = {"mse", "psnr", "ssim"};
  bool seen = false;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const std::size_t eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::size_t dot = key.find('.');
    if (dot == std::string::npos) continue;
    const std::string metric = key.substr(0, dot);
    const std::string stat = key.substr(dot + 1);
    for (int m = 0; m < 3; ++m) {
      if (metric != names[m]) continue;
      for (int i = 0; i < 5; ++i)
        if (stat == kStatKeys[i]) {
          stat_field(*metrics[m], i) = std::stod(line.substr(eq + 3));
          seen = true;
        }
    }
  }
  if (!seen) throw EmptyReport("parse_report_kv: no aggregate lines found");
  return r;
}

}  // namespace vf
