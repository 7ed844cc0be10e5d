#ifndef VF_LOSSES_HPP
#define VF_LOSSES_HPP

#include <string>
#include <vector>

#include "vf/tensor.hpp"
#include "vf/volume.hpp"

namespace vf {

enum class SsimVariant : std::uint8_t { global, windowed };

struct LossConfig {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  SsimVariant ssim_variant = SsimVariant::global;
  int window = 7;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 2.0;  // L: 2 in signed training space, 1 in unit space

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
  void validate() const;  // throws ConfigError
};

// Mean absolute error over voxels labeled healthy; gradient support is
// confined to those voxels. Throws EmptyMask when no voxel is healthy.
Tensor masked_mae(const Tensor& pred, const Tensor& gt, const LabelMask& healthy);

// Structural similarity. global: one evaluation with moments over all
// voxels. windowed: mean over all valid (unpadded) window positions of the
// per-window evaluation with a uniform window^3 filter. Biased moments
// throughout. Throws WindowTooLarge when a spatial dim is below the window.
Tensor ssim(const Tensor& x, const Tensor& y, const LossConfig& cfg);

// lambda1 * masked_mae + lambda2 * (1 - ssim). The similarity term enters
// as a dissimilarity so that minimizing the loss drives SSIM toward 1.
Tensor combined_loss(const Tensor& pred, const Tensor& gt,
                     const LabelMask& healthy, const LossConfig& cfg);

struct ScanMetrics {
  std::string scan_id;
  double mse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
};

// PSNR sentinel: zero MSE maps to the cap, and finite values saturate there
// so the mapping stays monotone.
inline constexpr double kPsnrCap = 99.0;

// 10*log10(R^2/mse) with R=1, capped at kPsnrCap.
double psnr_from_mse(double mse);

// Masked evaluation in unit intensity space. MSE/PSNR over healthy voxels;
// SSIM as a per-voxel map (uniform window^3 centered on each voxel, edge
// windows shifted to stay inside the volume) averaged over healthy voxels.
ScanMetrics eval_metrics(const Volume& pred, const Volume& gt,
                         const LabelMask& healthy, const LossConfig& cfg,
                         std::string scan_id = "");

struct MetricStats {
  double mean = 0.0;
  double stddev = 0.0;  // population
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
};

struct EvalReport {
  std::vector<ScanMetrics> scans;
  MetricStats mse, psnr, ssim;
};

// Population standard deviation; quantiles by linear interpolation between
// order statistics. Throws EmptyReport on an empty list.
EvalReport aggregate_report(const std::vector<ScanMetrics>& metrics);

// Aggregate table: one column per metric, five statistic rows.
std::string report_table(const EvalReport& r);

// Machine-readable block, lines "metric.statistic = value" at 9 significant
// digits.
std::string report_kv(const EvalReport& r);

// Reads the aggregate block back (lines not matching a known key are
// ignored); print-parse-print is a fixed point.
EvalReport parse_report_kv(const std::string& text);

}  // namespace vf

#endif  // VF_LOSSES_HPP
