#include "vf/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vf/convert.hpp"
#include "vf/losses.hpp"
#include "vf/maskgen.hpp"
#include "vf/parallel.hpp"
#include "vf/patch.hpp"
#include "vf/phantom.hpp"
#include "vf/training.hpp"
#include "vf/unet.hpp"
#include "vf/volume_io.hpp"

namespace fs = std::filesystem;

namespace vf {
namespace {

struct GlobalOpts {
  std::uint64_t seed = 0;
  int threads = 1;
  bool quiet = false;

  void info(const std::string& msg) const {
    if (!quiet) std::printf("%s\n", msg.c_str());
  }
};

std::string scan_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "scan%03d", i);
  return buf;
}

Dims3 dims_from(const std::vector<int>& v, const char* flag) {
  if (v.size() != 3)
    throw ConfigError(std::string(flag) + " wants three comma-separated values");
  return {v[0], v[1], v[2]};
}

std::string trimmed(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: " + key + " wants true/false, got '" + v + "'");
}

Dims3 parse_dims(const std::string& v, const std::string& key) {
  Dims3 d;
  char extra;
  if (std::sscanf(v.c_str(), "%d,%d,%d%c", &d.nx, &d.ny, &d.nz, &extra) != 3)
    throw ConfigError("config: " + key + " wants X,Y,Z");
  return d;
}

// Plain `key = value` lines; `#` starts a comment.
TrainConfig parse_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  TrainConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trimmed(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trimmed(line.substr(0, eq));
    const std::string val = trimmed(line.substr(eq + 1));
    try {
      if (key == "epochs") cfg.epochs = std::stoi(val);
      else if (key == "k_folds") cfg.k_folds = std::stoi(val);
      else if (key == "n_best") cfg.n_best = std::stoi(val);
      else if (key == "lr") cfg.lr = std::stod(val);
      else if (key == "beta1") cfg.beta1 = std::stod(val);
      else if (key == "beta2") cfg.beta2 = std::stod(val);
      else if (key == "eps") cfg.eps = std::stod(val);
      else if (key == "lambda1") cfg.lambda1 = std::stod(val);
      else if (key == "lambda2") cfg.lambda2 = std::stod(val);
      else if (key == "batch_size") cfg.batch_size = std::stoi(val);
      else if (key == "seed") cfg.seed = std::stoull(val);
      else if (key == "augment") cfg.augment = parse_bool(val, key);
      else if (key == "patch_dims") cfg.patch = parse_dims(val, key);
      else if (key == "base_channels") cfg.net.base_channels = std::stoi(val);
      else if (key == "levels") cfg.net.levels = std::stoi(val);
      else if (key == "in_channels") cfg.net.in_channels = std::stoi(val);
      else if (key == "out_channels") cfg.net.out_channels = std::stoi(val);
      else if (key == "dropout_rate") cfg.net.dropout_rate = std::stod(val);
      else if (key == "up_channel_rule") cfg.net.up_channel_rule = up_rule_from_string(val);
      else if (key == "final_activation") cfg.net.final_activation = final_act_from_string(val);
      else throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": bad value for '" + key + "'");
    }
  }
  return cfg;
}

// --- subcommands -----------------------------------------------------------

void run_synth(const GlobalOpts& g, const std::string& out_dir, int count,
               Dims3 dims, int shells, double noise, bool tumor) {
  fs::create_directories(out_dir);
  for (int i = 0; i < count; ++i) {
    PhantomSpec spec;
    spec.dims = dims;
    spec.shells = shells;
    spec.noise = noise;
    spec.tumor = tumor;
    spec.seed = g.seed + static_cast<std::uint64_t>(i);
    const Phantom ph = synth_phantom(spec);
    const std::string base = out_dir + "/" + scan_name(i);
    write_vol(base + "_t1n.vol", ph.t1n);
    write_mask(base + "_brain.vol", ph.brain);
    write_mask(base + "_unhealthy.vol", ph.unhealthy);
    g.info("wrote " + base + "_{t1n,brain,unhealthy}.vol");
  }
}

void run_gen_masks(const GlobalOpts& g, const std::string& brain_path,
                   const std::string& unhealthy_path, const std::string& out_dir,
                   std::string scan, int count, const MaskGenParams& params) {
  const LabelMask brain = read_mask(brain_path);
  const LabelMask unhealthy = read_mask(unhealthy_path);
  if (scan.empty()) {
    scan = fs::path(brain_path).filename().string();
    const std::string suffix = "_brain.vol";
    if (scan.size() > suffix.size() &&
        scan.compare(scan.size() - suffix.size(), suffix.size(), suffix) == 0)
      scan.resize(scan.size() - suffix.size());
    else
      scan = fs::path(scan).stem().string();
  }
  fs::create_directories(out_dir);
  RngStream stream(g.seed, "masks", 0);
  const auto set = build_augmented_set(brain, unhealthy, params, count, stream);
  for (int k = 0; k < count; ++k) {
    const std::string path =
        out_dir + "/" + scan + "_healthy_" + std::to_string(k) + ".vol";
    write_mask(path, set[static_cast<std::size_t>(k)].healthy);
    g.info("wrote " + path);
  }
}

void run_augment(const GlobalOpts& g, const std::string& in_path,
                 const std::string& out_path, bool sample, AugmentSpec spec,
                 const std::string& interp_name) {
  if (sample) {
    RngStream stream(g.seed, "augment", 0);
    spec = sample_augment(stream);
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "sampled: mirror=(%d,%d,%d) theta_xy=%.6g theta_yz=%.6g",
                  spec.mirror_x ? 1 : 0, spec.mirror_y ? 1 : 0,
                  spec.mirror_z ? 1 : 0, spec.theta_xy, spec.theta_yz);
    g.info(buf);
  }
  if (vol_file_dtype(in_path) == 2) {
    write_mask(out_path, apply_augment(read_mask(in_path), spec));
  } else {
    const Interp interp = interp_from_string(interp_name);
    write_vol(out_path, apply_augment(read_vol(in_path), spec, interp));
  }
  g.info("wrote " + out_path);
}

Dataset load_dataset(const std::string& data_dir) {
  std::vector<std::string> prefixes;
  const std::string t1n_suffix = "_t1n.vol";
  for (const auto& entry : fs::directory_iterator(data_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() > t1n_suffix.size() &&
        name.compare(name.size() - t1n_suffix.size(), t1n_suffix.size(),
                     t1n_suffix) == 0)
      prefixes.push_back(name.substr(0, name.size() - t1n_suffix.size()));
  }
  std::sort(prefixes.begin(), prefixes.end());
  if (prefixes.empty())
    throw ConfigError("no *_t1n.vol scans found in " + data_dir);

  Dataset data;
  for (const std::string& p : prefixes) {
    ScanRecord rec;
    rec.id = p;
    const std::string base = data_dir + "/" + p;
    rec.t1n = read_vol(base + "_t1n.vol");
    rec.unhealthy = read_mask(base + "_unhealthy.vol");
    for (int k = 0;; ++k) {
      const std::string mp = base + "_healthy_" + std::to_string(k) + ".vol";
      if (!fs::exists(mp)) break;
      rec.healthy_masks.push_back(read_mask(mp));
    }
    if (rec.healthy_masks.empty())
      throw ConfigError("scan " + p + " has no *_healthy_<k>.vol masks");
    data.push_back(std::move(rec));
  }
  return data;
}

void run_train(const GlobalOpts& g, const std::string& data_dir,
               const std::string& config_path, int fold,
               const std::string& out_dir, bool seed_flag_given) {
  TrainConfig cfg = parse_train_config(config_path);
  if (seed_flag_given || cfg.seed == 0) cfg.seed = g.seed;
  cfg.validate();

  const Dataset data = load_dataset(data_dir);
  std::vector<int> ids(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) ids[i] = static_cast<int>(i);
  const auto folds = kfold_split(ids, cfg.k_folds, cfg.seed);
  if (fold < 0 || fold >= cfg.k_folds)
    throw ConfigError("--fold must be in [0, " + std::to_string(cfg.k_folds) + ")");

  const TrainResult result = train_loop(data, folds[static_cast<std::size_t>(fold)], cfg);

  fs::create_directories(out_dir);
  std::ofstream hist(out_dir + "/history.txt");
  if (!hist) throw FormatError("cannot open " + out_dir + "/history.txt");
  for (std::size_t e = 0; e < result.history.size(); ++e) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "epoch %zu train %.17g val %.17g\n", e + 1,
                  result.history[e].train_loss, result.history[e].val_loss);
    hist << buf;
    g.info(trimmed(buf));
  }
  for (std::size_t r = 0; r < result.retained.size(); ++r) {
    const std::string path = out_dir + "/ckpt" + std::to_string(r) + ".unck";
    save_checkpoint(result.retained[r], path);
    char buf[160];
    std::snprintf(buf, sizeof buf, "retained rank %zu: epoch %d val %.17g -> %s",
                  r, result.retained[r].epoch, result.retained[r].val_loss,
                  path.c_str());
    g.info(buf);
  }
}

void run_infer(const GlobalOpts& g, const std::string& ckpt_path,
               const std::string& voided_path, const std::string& mask_path,
               const std::string& out_path, Dims3 patch_dims) {
  const Checkpoint ck = load_checkpoint(ckpt_path);
  const UNetConfig net = parse_config_echo(ck.config_echo);

  const Volume voided = read_vol(voided_path);
  const LabelMask mask = read_mask(mask_path);
  const PatchCrop crop = crop_to_patch(voided, mask, patch_dims);

  // Network space: normalize the voided patch and re-void at the signed
  // midpoint so masked voxels match the training-time fill.
  const Volume net_in = void_image(rescale_signed(normalize_unit(crop.vol)), crop.mask);
  const Tensor img = volume_to_tensor(net_in);
  const Tensor ind = label_indicator(crop.mask, true, true);
  std::vector<double> joint;
  joint.reserve(static_cast<std::size_t>(img.size() + ind.size()));
  joint.insert(joint.end(), img.values().begin(), img.values().end());
  joint.insert(joint.end(), ind.values().begin(), ind.values().end());
  Shape in_shape = img.shape();
  in_shape[0] = 2;
  const Tensor input(std::move(in_shape), std::move(joint));

  Tensor pred = unet_infer(ck.params, net, input);
  std::vector<double> clamped = pred.values();
  for (double& v : clamped) v = std::clamp(v, -1.0, 1.0);
  const Volume pred_vol = tensor_to_volume(Tensor(pred.shape(), std::move(clamped)),
                                           RangeTag::signed_range);

  write_vol(out_path, stitch(voided, pred_vol, crop.spec, mask));
  g.info("wrote " + out_path);
}

void run_eval(const GlobalOpts& g, const std::string& pred_path,
              const std::string& gt_path, const std::string& mask_path,
              std::string scan_id, const std::string& out_path, int window) {
  const LabelMask mask = read_mask(mask_path);
  const Volume pred = normalize_validation(read_vol(pred_path), mask);
  const Volume gt = normalize_validation(read_vol(gt_path), mask);
  if (scan_id.empty()) scan_id = fs::path(pred_path).stem().string();

  LossConfig cfg;
  cfg.window = window;
  cfg.dynamic_range = 1.0;  // unit evaluation space
  const ScanMetrics m = eval_metrics(pred, gt, mask, cfg, scan_id);

  std::printf("%-5s %.9g\n", "MSE", m.mse);
  std::printf("%-5s %.9g\n", "PSNR", m.psnr);
  std::printf("%-5s %.9g\n", "SSIM", m.ssim);

  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw FormatError("cannot open " + out_path);
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "scan_id = %s\nmse = %.17g\npsnr = %.17g\nssim = %.17g\n",
                  m.scan_id.c_str(), m.mse, m.psnr, m.ssim);
    out << buf;
    g.info("wrote " + out_path);
  }
}

ScanMetrics parse_metrics_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  ScanMetrics m;
  m.scan_id = fs::path(path).stem().string();
  std::string line;
  bool any = false;
  while (std::getline(in, line)) {
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = trimmed(line.substr(0, eq));
    const std::string val = trimmed(line.substr(eq + 1));
    try {
      if (key == "scan_id") m.scan_id = val;
      else if (key == "mse") m.mse = std::stod(val);
      else if (key == "psnr") m.psnr = std::stod(val);
      else if (key == "ssim") m.ssim = std::stod(val);
      else continue;
    } catch (const std::exception&) {
      throw FormatError(path + ": bad value for '" + key + "'");
    }
    any = true;
  }
  if (!any) throw FormatError(path + ": no metric lines found");
  return m;
}

void run_report(const GlobalOpts& g, const std::string& dir,
                const std::string& out_path) {
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".metrics")
      files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  std::vector<ScanMetrics> metrics;
  for (const std::string& f : files) metrics.push_back(parse_metrics_file(f));

  const EvalReport report = aggregate_report(metrics);
  const std::string text = report_table(report) + "\n" + report_kv(report);
  std::fputs(text.c_str(), stdout);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw FormatError("cannot open " + out_path);
    out << text;
    g.info("wrote " + out_path);
  }
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"voxelfill: masked 3D inpainting toolkit"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--seed", g.seed, "master RNG seed");
  app.add_option("--threads", g.threads, "worker thread count");
  app.add_flag("--quiet", g.quiet, "suppress progress output");

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "generate phantom scans");
  synth->fallthrough();
  std::string sd_out;
  int sd_count = 1, sd_shells = 3;
  std::vector<int> sd_dims{32, 32, 32};
  double sd_noise = 0.02;
  bool sd_no_tumor = false;
  synth->add_option("--out-dir", sd_out, "output directory")->required();
  synth->add_option("--count", sd_count, "number of scans");
  synth->add_option("--dims", sd_dims, "grid dims X,Y,Z")->delimiter(',');
  synth->add_option("--shells", sd_shells, "intensity shells");
  synth->add_option("--noise", sd_noise, "texture noise amplitude");
  synth->add_flag("--no-tumor", sd_no_tumor, "omit the unhealthy blob");
  synth->callback([&]() {
    run_synth(g, sd_out, sd_count, dims_from(sd_dims, "--dims"), sd_shells,
              sd_noise, !sd_no_tumor);
  });

  // gen-masks
  auto* gen = app.add_subcommand("gen-masks", "sample healthy masks");
  gen->fallthrough();
  std::string gm_brain, gm_unhealthy, gm_out, gm_scan;
  int gm_count = 5;
  MaskGenParams gm_params;
  gen->add_option("--brain", gm_brain, "brain support mask (VOL1)")->required();
  gen->add_option("--unhealthy", gm_unhealthy, "unhealthy mask (VOL1)")->required();
  gen->add_option("--out-dir", gm_out, "output directory")->required();
  gen->add_option("--scan", gm_scan, "scan name for output files");
  gen->add_option("--count", gm_count, "masks per scan");
  gen->add_option("--fmin", gm_params.fmin, "min volume fraction");
  gen->add_option("--fmax", gm_params.fmax, "max volume fraction");
  gen->add_option("--min-blobs", gm_params.min_blobs, "min ellipsoids");
  gen->add_option("--max-blobs", gm_params.max_blobs, "max ellipsoids");
  gen->add_option("--dilation-radius", gm_params.dilation_radius,
                  "unhealthy exclusion radius");
  gen->add_option("--max-attempts", gm_params.max_attempts, "rejection budget");
  gen->callback([&]() {
    run_gen_masks(g, gm_brain, gm_unhealthy, gm_out, gm_scan, gm_count, gm_params);
  });

  // augment
  auto* aug = app.add_subcommand("augment", "mirror/rotate a volume or mask");
  aug->fallthrough();
  std::string au_in, au_out, au_interp = "trilinear";
  bool au_sample = false;
  AugmentSpec au_spec;
  aug->add_option("--in", au_in, "input VOL1 file")->required();
  aug->add_option("--out", au_out, "output VOL1 file")->required();
  aug->add_flag("--sample", au_sample, "draw the spec from the seed");
  aug->add_flag("--mirror-x", au_spec.mirror_x, "mirror along x");
  aug->add_flag("--mirror-y", au_spec.mirror_y, "mirror along y");
  aug->add_flag("--mirror-z", au_spec.mirror_z, "mirror along z");
  aug->add_option("--theta-xy", au_spec.theta_xy, "x-y rotation, degrees");
  aug->add_option("--theta-yz", au_spec.theta_yz, "y-z rotation, degrees");
  aug->add_option("--interp", au_interp, "nearest|trilinear (volumes)");
  aug->callback([&]() { run_augment(g, au_in, au_out, au_sample, au_spec, au_interp); });

  // train
  auto* train = app.add_subcommand("train", "train on a data directory");
  train->fallthrough();
  std::string tr_data, tr_config, tr_out;
  int tr_fold = 0;
  train->add_option("--data-dir", tr_data, "scan directory")->required();
  train->add_option("--config", tr_config, "key = value config file")->required();
  train->add_option("--fold", tr_fold, "validation fold index");
  train->add_option("--out-dir", tr_out, "checkpoint directory")->required();
  train->callback([&]() {
    run_train(g, tr_data, tr_config, tr_fold, tr_out, app.count("--seed") > 0);
  });

  // infer
  auto* infer = app.add_subcommand("infer", "inpaint a voided scan");
  infer->fallthrough();
  std::string in_ckpt, in_voided, in_mask, in_out;
  std::vector<int> in_patch{128, 128, 96};
  infer->add_option("--checkpoint", in_ckpt, "UNCK checkpoint")->required();
  infer->add_option("--voided", in_voided, "voided scan (VOL1)")->required();
  infer->add_option("--mask", in_mask, "combined mask (VOL1)")->required();
  infer->add_option("--out", in_out, "output scan (VOL1)")->required();
  infer->add_option("--patch-dims", in_patch, "patch dims X,Y,Z")->delimiter(',');
  infer->callback([&]() {
    run_infer(g, in_ckpt, in_voided, in_mask, in_out,
              dims_from(in_patch, "--patch-dims"));
  });

  // eval
  auto* eval = app.add_subcommand("eval", "masked metrics for one scan");
  eval->fallthrough();
  std::string ev_pred, ev_gt, ev_mask, ev_scan, ev_out;
  int ev_window = 7;
  eval->add_option("--pred", ev_pred, "prediction (VOL1)")->required();
  eval->add_option("--gt", ev_gt, "ground truth (VOL1)")->required();
  eval->add_option("--mask", ev_mask, "healthy mask (VOL1)")->required();
  eval->add_option("--scan-id", ev_scan, "scan id for the metrics file");
  eval->add_option("--out", ev_out, "per-scan metrics file");
  eval->add_option("--window", ev_window, "SSIM window size");
  eval->callback([&]() {
    run_eval(g, ev_pred, ev_gt, ev_mask, ev_scan, ev_out, ev_window);
  });

  // report
  auto* report = app.add_subcommand("report", "aggregate per-scan metrics");
  report->fallthrough();
  std::string rp_dir, rp_out;
  report->add_option("--dir", rp_dir, "directory of .metrics files")->required();
  report->add_option("--out", rp_out, "write the report here too");
  report->callback([&]() { run_report(g, rp_dir, rp_out); });

  try {
    // Apply thread count before any subcommand callback runs.
    app.parse_complete_callback([&]() { set_num_threads(g.threads); });
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    std::fprintf(stderr, "%s", app.help().c_str());
    return 1;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}

int dispatch(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("voxelfill");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data());
}

}  // namespace vf
