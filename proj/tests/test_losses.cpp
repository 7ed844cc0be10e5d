#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "vf/losses.hpp"
#include "vf/rng.hpp"
#include "vf/tensor.hpp"
#include "vf/volume.hpp"

using namespace vf;

namespace {

// Tensor layout [1,nx,ny,nz] is z-fastest; LabelMask is x-fastest. Both
// sides of every comparison below walk (x,y,z) explicitly so the mapping is
// spelled out once.
std::size_t tidx(const Dims3& d, int x, int y, int z) {
  return (static_cast<std::size_t>(x) * d.ny + y) * d.nz + z;
}

Tensor grid_tensor(const Dims3& d, std::uint64_t seed, double lo, double hi) {
  RngStream s(seed, "losses", 0);
  std::vector<double> v(static_cast<std::size_t>(d.nx) * d.ny * d.nz);
  for (double& x : v) x = s.uniform(lo, hi);
  return Tensor(Shape{1, d.nx, d.ny, d.nz}, std::move(v));
}

LabelMask random_mask(const Dims3& d, std::uint64_t seed) {
  RngStream s(seed, "losses-mask", 0);
  LabelMask m = LabelMask::zeros(d);
  for (auto& l : m.labels) l = static_cast<std::uint8_t>(s.uniform_index(3));
  m.labels[0] = kHealthy;  // never empty
  return m;
}

double mae_oracle(const Tensor& pred, const Tensor& gt, const LabelMask& m) {
  double total = 0.0;
  std::int64_t n = 0;
  for (int z = 0; z < m.dims.nz; ++z)
    for (int y = 0; y < m.dims.ny; ++y)
      for (int x = 0; x < m.dims.nx; ++x)
        if (m.at(x, y, z) == kHealthy) {
          const std::size_t i = tidx(m.dims, x, y, z);
          total += std::fabs(gt.values()[i] - pred.values()[i]);
          ++n;
        }
  return total / static_cast<double>(n);
}

}  // namespace

TEST_CASE("masked_mae matches hand examples and vanishes at identity") {
  Graph g;
  const Dims3 d{3, 1, 1};
  LabelMask m = LabelMask::zeros(d);
  m.at(0, 0, 0) = kHealthy;
  m.at(2, 0, 0) = kHealthy;
  const Tensor gt = g.constant(Tensor(Shape{1, 3, 1, 1}, {1.0, 2.0, 3.0}));
  const Tensor pred = g.constant(Tensor(Shape{1, 3, 1, 1}, {1.5, 2.0, 2.0}));
  CHECK(masked_mae(pred, gt, m).value() == 0.75);  // (0.5 + 1)/2
  CHECK(masked_mae(gt, gt, m).value() == 0.0);
  // symmetry of |.|
  CHECK(masked_mae(gt, pred, m).value() == 0.75);
}

TEST_CASE("masked_mae equals the explicit-loop oracle on random data") {
  const Dims3 d{6, 5, 4};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor pred = grid_tensor(d, 100 + seed, -1.0, 1.0);
    const Tensor gt = grid_tensor(d, 200 + seed, -1.0, 1.0);
    const LabelMask m = random_mask(d, 300 + seed);
    Graph g;
    const double got =
        masked_mae(g.constant(pred), g.constant(gt), m).value();
    const double want = mae_oracle(pred, gt, m);
    CHECK(std::fabs(got - want) <= 1e-12);
  }
}

TEST_CASE("masked_mae gradient support is confined to healthy voxels") {
  const Dims3 d{5, 4, 3};
  // Keep pred and gt strictly separated so every healthy voxel contributes
  // a full +-1/m subgradient (no |.| kink at zero).
  const Tensor pred = grid_tensor(d, 7, 0.0, 0.4);
  const Tensor gt = grid_tensor(d, 8, 0.5, 1.0);
  const LabelMask m = random_mask(d, 9);
  const double unit = 1.0 / static_cast<double>(m.count_label(kHealthy));

  Graph g;
  const Tensor p = g.variable(pred);
  const Tensor loss = masked_mae(p, g.constant(gt), m);
  g.backward(loss);
  const std::vector<double> grad = g.grad(p).values();
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        const double gv = grad[tidx(d, x, y, z)];
        if (m.at(x, y, z) == kHealthy)
          CHECK(std::fabs(gv) == unit);  // pred < gt everywhere: grad = -1/m
        else
          CHECK(gv == 0.0);
      }
}

TEST_CASE("masked_mae rejects an empty mask and mismatched grids") {
  Graph g;
  const Dims3 d{3, 3, 3};
  const Tensor a = g.constant(grid_tensor(d, 1, -1.0, 1.0));
  const Tensor b = g.constant(grid_tensor(d, 2, -1.0, 1.0));
  CHECK_THROWS_AS(masked_mae(a, b, LabelMask::zeros(d)), EmptyMask);
  LabelMask wrong = LabelMask::zeros(Dims3{3, 3, 4});
  wrong.labels[0] = kHealthy;
  CHECK_THROWS_AS(masked_mae(a, b, wrong), DimMismatch);
}

TEST_CASE("ssim is exactly 1 at identity and symmetric in its arguments") {
  LossConfig cfg;  // global, L = 2
  Graph g;
  const Dims3 d{6, 6, 6};
  const Tensor x = g.constant(grid_tensor(d, 11, -1.0, 1.0));
  const Tensor y = g.constant(grid_tensor(d, 12, -1.0, 1.0));
  CHECK(ssim(x, x, cfg).value() == 1.0);
  CHECK(ssim(x, y, cfg).value() == ssim(y, x, cfg).value());

  cfg.ssim_variant = SsimVariant::windowed;
  cfg.window = 5;
  CHECK(ssim(x, x, cfg).value() == 1.0);
  CHECK(ssim(x, y, cfg).value() == ssim(y, x, cfg).value());
}

TEST_CASE("ssim of the constant pair 0/1 matches the closed form at L=1") {
  LossConfig cfg;
  cfg.dynamic_range = 1.0;  // c1 = 1e-4
  Graph g;
  const Shape s{1, 5, 5, 5};
  const Tensor zero = g.constant(Tensor::full(s, 0.0));
  const Tensor one = g.constant(Tensor::full(s, 1.0));
  // (2*0*1 + c1)c2 / ((0 + 1 + c1)c2) = 1e-4 / 1.0001
  const double got = ssim(zero, one, cfg).value();
  CHECK(got == doctest::Approx(9.999000099990002e-05).epsilon(1e-12));
  CHECK(std::fabs(got - oracle::ssim_formula(0.0, 1.0, 0.0, 0.0, 0.0,
                                             cfg.c1(), cfg.c2())) <= 1e-19);
}

TEST_CASE("global ssim matches the centered-moment oracle") {
  LossConfig cfg;
  const Dims3 d{7, 5, 6};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor x = grid_tensor(d, 400 + seed, -1.0, 1.0);
    const Tensor y = grid_tensor(d, 500 + seed, -1.0, 1.0);
    Graph g;
    const double got = ssim(g.constant(x), g.constant(y), cfg).value();
    const double want =
        oracle::ssim_global(x.values(), y.values(), cfg.c1(), cfg.c2());
    CHECK(std::fabs(got - want) <= 1e-12);
    CHECK(std::fabs(got) <= 1.0);
  }
}

TEST_CASE("windowed ssim equals the per-window brute-force oracle") {
  LossConfig cfg;
  cfg.ssim_variant = SsimVariant::windowed;  // window 7 on an 8^3 grid
  const Dims3 d{8, 8, 8};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor x = grid_tensor(d, 600 + seed, -1.0, 1.0);
    const Tensor y = grid_tensor(d, 700 + seed, -1.0, 1.0);
    Graph g;
    const double got = ssim(g.constant(x), g.constant(y), cfg).value();
    const double want = oracle::ssim_windowed(x.values(), y.values(), 1, 8, 8,
                                              8, 7, cfg.c1(), cfg.c2());
    CHECK(std::fabs(got - want) <= 1e-10);
    CHECK(std::fabs(got) <= 1.0);
  }
}

TEST_CASE("windowed ssim rejects dims below the window") {
  LossConfig cfg;
  cfg.ssim_variant = SsimVariant::windowed;
  Graph g;
  const Tensor x = g.constant(grid_tensor(Dims3{4, 8, 8}, 13, -1.0, 1.0));
  CHECK_THROWS_AS(ssim(x, x, cfg), WindowTooLarge);
}

TEST_CASE("combined_loss composes its parts and degenerates with the weights") {
  const Dims3 d{6, 6, 6};
  LossConfig cfg;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const Tensor pred = grid_tensor(d, 800 + seed, -1.0, 1.0);
    const Tensor gt = grid_tensor(d, 900 + seed, -1.0, 1.0);
    const LabelMask m = random_mask(d, 1000 + seed);
    Graph g;
    const Tensor p = g.constant(pred);
    const Tensor t = g.constant(gt);
    const double whole = combined_loss(p, t, m, cfg).value();
    const double parts =
        cfg.lambda1 * masked_mae(p, t, m).value() +
        cfg.lambda2 * (1.0 - ssim(p, t, cfg).value());
    CHECK(std::fabs(whole - parts) <= 1e-12);
    CHECK(whole >= 0.0);

    LossConfig mae_only = cfg;
    mae_only.lambda2 = 0.0;
    CHECK(combined_loss(p, t, m, mae_only).value() ==
          masked_mae(p, t, m).value());
  }
  // identity: both terms vanish
  Graph g;
  const Tensor x = g.constant(grid_tensor(d, 77, -1.0, 1.0));
  LabelMask all = LabelMask::zeros(d);
  for (auto& l : all.labels) l = kHealthy;
  CHECK(combined_loss(x, x, all, cfg).value() == 0.0);
}

TEST_CASE("loss config validation rejects out-of-range settings") {
  LossConfig bad;
  bad.lambda1 = -0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = LossConfig{};
  bad.window = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = LossConfig{};
  bad.window = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = LossConfig{};
  bad.dynamic_range = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = LossConfig{};
  bad.k1 = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  LossConfig good;
  good.dynamic_range = 1.0;
  CHECK(good.c1() == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(good.c2() == doctest::Approx(9e-4).epsilon(1e-12));
}

TEST_CASE("psnr anchors reproduce the reference pairs within 1e-4") {
  struct Anchor {
    double mse, psnr;
  };
  const Anchor anchors[3] = {{0.005796814, 22.3681049},
                             {0.000171515, 37.65698624},
                             {0.022642322, 16.45079041}};
  LossConfig cfg;
  cfg.dynamic_range = 1.0;
  for (const Anchor& a : anchors) {
    CHECK(std::fabs(psnr_from_mse(a.mse) - a.psnr) <= 1e-4);

    // Same pair pushed through the full masked evaluation: one healthy voxel
    // carrying the whole squared error.
    const Dims3 d{7, 7, 7};
    Volume gt = Volume::zeros(d, RangeTag::unit);
    Volume pred = gt;
    LabelMask m = LabelMask::zeros(d);
    m.at(3, 3, 3) = kHealthy;
    pred.at(3, 3, 3) = std::sqrt(a.mse);
    const ScanMetrics got = eval_metrics(pred, gt, m, cfg, "anchor");
    CHECK(std::fabs(got.psnr - a.psnr) <= 1e-4);
    CHECK(got.mse == doctest::Approx(a.mse).epsilon(1e-12));
    CHECK(got.scan_id == "anchor");
  }
}

TEST_CASE("psnr is monotone in mse and saturates at the cap") {
  CHECK(psnr_from_mse(0.0) == kPsnrCap);
  CHECK(psnr_from_mse(1e-11) == kPsnrCap);
  double prev = psnr_from_mse(1e-8);
  CHECK(prev < kPsnrCap);
  for (double mse = 2e-8; mse <= 1.0; mse *= 1.7) {
    const double cur = psnr_from_mse(mse);
    CHECK(cur < prev);  // strictly decreasing below the cap
    prev = cur;
  }
}

TEST_CASE("eval_metrics at identity reports mse 0, capped psnr, ssim 1") {
  const Dims3 d{8, 8, 8};
  RngStream s(21, "eval-id", 0);
  Volume v = Volume::zeros(d, RangeTag::unit);
  for (double& x : v.voxels) x = s.uniform(0.0, 1.0);
  LabelMask m = LabelMask::zeros(d);
  for (auto& l : m.labels) l = kHealthy;
  LossConfig cfg;
  cfg.dynamic_range = 1.0;
  const ScanMetrics got = eval_metrics(v, v, m, cfg);
  CHECK(got.mse == 0.0);
  CHECK(got.psnr == kPsnrCap);
  CHECK(got.ssim == 1.0);
}

TEST_CASE("eval_metrics rejects empty masks and undersized volumes") {
  LossConfig cfg;
  cfg.dynamic_range = 1.0;
  const Dims3 d{8, 8, 8};
  const Volume v = Volume::zeros(d, RangeTag::unit);
  CHECK_THROWS_AS(eval_metrics(v, v, LabelMask::zeros(d), cfg), EmptyMask);

  const Dims3 small{4, 8, 8};
  const Volume sv = Volume::zeros(small, RangeTag::unit);
  LabelMask sm = LabelMask::zeros(small);
  sm.labels[0] = kHealthy;
  CHECK_THROWS_AS(eval_metrics(sv, sv, sm, cfg), WindowTooLarge);

  LabelMask wrong = LabelMask::zeros(Dims3{8, 8, 9});
  wrong.labels[0] = kHealthy;
  CHECK_THROWS_AS(eval_metrics(v, v, wrong, cfg), DimMismatch);
}

namespace {

ScanMetrics sm(double mse, double psnr, double s) {
  ScanMetrics m;
  m.mse = mse;
  m.psnr = psnr;
  m.ssim = s;
  return m;
}

}  // namespace

TEST_CASE("aggregate_report reproduces hand-computed order statistics") {
  // mse column [1,2,3,4]: quantiles by linear interpolation between order
  // statistics, population standard deviation.
  std::vector<ScanMetrics> rows = {sm(1, 10, 0.1), sm(2, 20, 0.2),
                                   sm(3, 30, 0.3), sm(4, 40, 0.4)};
  const EvalReport r = aggregate_report(rows);
  CHECK(r.mse.mean == 2.5);
  CHECK(r.mse.stddev == doctest::Approx(std::sqrt(1.25)).epsilon(1e-15));
  CHECK(r.mse.q25 == 1.75);
  CHECK(r.mse.median == 2.5);
  CHECK(r.mse.q75 == 3.25);
  CHECK(r.psnr.q25 == 17.5);
  CHECK(r.ssim.median == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(r.scans.size() == 4);

  // quantile ordering invariant
  CHECK(r.mse.q25 <= r.mse.median);
  CHECK(r.mse.median <= r.mse.q75);
}

TEST_CASE("aggregate_report singleton statistics collapse to the value") {
  const EvalReport r = aggregate_report({sm(0.007, 23.257, 0.841)});
  for (const MetricStats* s : {&r.mse, &r.psnr, &r.ssim}) {
    CHECK(s->stddev == 0.0);
    CHECK(s->q25 == s->mean);
    CHECK(s->median == s->mean);
    CHECK(s->q75 == s->mean);
  }
  CHECK(r.mse.mean == 0.007);
  CHECK(r.psnr.mean == 23.257);
  CHECK(r.ssim.mean == 0.841);
}

TEST_CASE("aggregate_report is permutation-invariant") {
  RngStream s(31, "perm", 0);
  std::vector<ScanMetrics> rows;
  for (int i = 0; i < 9; ++i)
    rows.push_back(
        sm(s.uniform(0.0, 0.05), s.uniform(10.0, 40.0), s.uniform(0.4, 1.0)));
  const EvalReport a = aggregate_report(rows);
  std::vector<ScanMetrics> shuffled = rows;
  for (std::size_t i = shuffled.size() - 1; i > 0; --i)
    std::swap(shuffled[i], shuffled[s.uniform_index(i + 1)]);
  const EvalReport b = aggregate_report(shuffled);
  for (int mi = 0; mi < 3; ++mi) {
    const MetricStats& x = mi == 0 ? a.mse : mi == 1 ? a.psnr : a.ssim;
    const MetricStats& y = mi == 0 ? b.mse : mi == 1 ? b.psnr : b.ssim;
    CHECK(std::fabs(x.mean - y.mean) <= 1e-12);
    CHECK(std::fabs(x.stddev - y.stddev) <= 1e-12);
    // quantiles sort internally, so they agree bitwise
    CHECK(x.q25 == y.q25);
    CHECK(x.median == y.median);
    CHECK(x.q75 == y.q75);
  }
  CHECK_THROWS_AS(aggregate_report({}), EmptyReport);
}

TEST_CASE("report table carries the five statistic rows per metric column") {
  const EvalReport r =
      aggregate_report({sm(1, 10, 0.1), sm(2, 20, 0.2), sm(3, 30, 0.3)});
  const std::string table = report_table(r);
  for (const char* row : {"Mean", "Standard deviation", "25 quantile",
                          "Median", "75 quantile"})
    CHECK(table.find(row) != std::string::npos);
  for (const char* col : {"MSE", "PSNR", "SSIM"})
    CHECK(table.find(col) != std::string::npos);
  CHECK(std::count(table.begin(), table.end(), '\n') == 6);  // header + 5
}

TEST_CASE("report kv block is a print-parse-print fixed point") {
  const EvalReport r = aggregate_report(
      {sm(0.005796814, 22.3681049, 0.929092348),
       sm(0.000171515, 37.65698624, 0.999154925),
       sm(0.022642322, 16.45079041, 0.647443771)});
  const std::string kv = report_kv(r);
  CHECK(std::count(kv.begin(), kv.end(), '\n') == 15);  // 3 metrics x 5 stats
  CHECK(kv.find("mse.mean = ") != std::string::npos);
  CHECK(kv.find("ssim.q75 = ") != std::string::npos);
  const EvalReport back = parse_report_kv(kv);
  CHECK(report_kv(back) == kv);
  // unknown lines are ignored, not fatal
  const EvalReport again = parse_report_kv("# comment\n" + kv + "junk\n");
  CHECK(report_kv(again) == kv);
  CHECK_THROWS_AS(parse_report_kv("nothing here\n"), EmptyReport);
}
