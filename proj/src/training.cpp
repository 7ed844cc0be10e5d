#include "vf/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "vf/adam.hpp"
#include "vf/losses.hpp"
#include "vf/maskgen.hpp"
#include "vf/patch.hpp"

namespace vf {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (k_folds < 2) throw ConfigError("k_folds must be >= 2");
  if (n_best < 1) throw ConfigError("n_best must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (lr < 0.0) throw ConfigError("learning rate must be >= 0");
  if (lambda1 < 0.0 || lambda2 < 0.0)
    throw ConfigError("loss weights must be >= 0");
  if (patch.nx < 1 || patch.ny < 1 || patch.nz < 1)
    throw ConfigError("patch dims must be positive");
  net.validate();
}

std::vector<FoldSplit> kfold_split(const std::vector<int>& scan_ids, int k,
                                   std::uint64_t seed) {
  if (k < 2) throw SplitError("kfold_split: need k >= 2");
  const int n = static_cast<int>(scan_ids.size());
  if (n < k) throw SplitError("kfold_split: fewer scans than folds");

  std::vector<int> order = scan_ids;
  RngStream stream(seed, "kfold", 0);
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(
        stream.uniform_index(static_cast<std::uint64_t>(i) + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[j]);
  }

  std::vector<FoldSplit> folds(static_cast<std::size_t>(k));
  const int base = n / k, extra = n % k;
  int pos = 0;
  for (int f = 0; f < k; ++f) {
    const int len = base + (f < extra ? 1 : 0);
    for (int i = 0; i < n; ++i) {
      if (i >= pos && i < pos + len)
        folds[static_cast<std::size_t>(f)].val.push_back(order[static_cast<std::size_t>(i)]);
      else
        folds[static_cast<std::size_t>(f)].train.push_back(order[static_cast<std::size_t>(i)]);
    }
    pos += len;
  }
  return folds;
}

std::string config_echo_text(const UNetConfig& cfg) {
  std::ostringstream os;
  os << "base_channels = " << cfg.base_channels << "\n";
  os << "levels = " << cfg.levels << "\n";
  os << "in_channels = " << cfg.in_channels << "\n";
  os << "out_channels = " << cfg.out_channels << "\n";
  os << "dropout_rate = " << cfg.dropout_rate << "\n";
  os << "up_channel_rule = " << to_string(cfg.up_channel_rule) << "\n";
  os << "final_activation = " << to_string(cfg.final_activation) << "\n";
  return os.str();
}

UNetConfig parse_config_echo(const std::string& text) {
  UNetConfig cfg;
  std::istringstream is(text);
  std::string line;
  bool seen = false;
  while (std::getline(is, line)) {
    const std::size_t eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 3);
    try {
      if (key == "base_channels") cfg.base_channels = std::stoi(val);
      else if (key == "levels") cfg.levels = std::stoi(val);
      else if (key == "in_channels") cfg.in_channels = std::stoi(val);
      else if (key == "out_channels") cfg.out_channels = std::stoi(val);
      else if (key == "dropout_rate") cfg.dropout_rate = std::stod(val);
      else if (key == "up_channel_rule") cfg.up_channel_rule = up_rule_from_string(val);
      else if (key == "final_activation") cfg.final_activation = final_act_from_string(val);
      else continue;
    } catch (const Error&) {
      throw CorruptCheckpoint("config echo: bad value for " + key);
    } catch (const std::exception&) {
      throw CorruptCheckpoint("config echo: bad value for " + key);
    }
    seen = true;
  }
  if (!seen) throw CorruptCheckpoint("config echo: no recognizable keys");
  return cfg;
}

namespace {

// better = lower validation loss; ties keep the earlier epoch
bool checkpoint_before(double loss_a, int epoch_a, double loss_b, int epoch_b) {
  if (loss_a != loss_b) return loss_a < loss_b;
  return epoch_a < epoch_b;
}

struct SampleBatch {
  std::vector<std::vector<double>> grad_sum;  // per parameter
  int count = 0;
};

}  // namespace

std::vector<int> select_best_epochs(const std::vector<double>& val_losses,
                                    int n_best) {
  std::vector<int> epochs(val_losses.size());
  for (std::size_t i = 0; i < val_losses.size(); ++i)
    epochs[i] = static_cast<int>(i) + 1;
  std::sort(epochs.begin(), epochs.end(), [&](int a, int b) {
    return checkpoint_before(val_losses[static_cast<std::size_t>(a - 1)], a,
                             val_losses[static_cast<std::size_t>(b - 1)], b);
  });
  if (static_cast<int>(epochs.size()) > n_best)
    epochs.resize(static_cast<std::size_t>(n_best));
  return epochs;
}

TrainResult train_loop(const Dataset& data, const FoldSplit& fold,
                       const TrainConfig& cfg, const UNetParams* initial) {
  cfg.validate();
  if (fold.train.empty()) throw SplitError("train_loop: empty train fold");
  if (fold.val.empty()) throw SplitError("train_loop: empty validation fold");
  for (int id : fold.train)
    if (id < 0 || id >= static_cast<int>(data.size()))
      throw SplitError("train_loop: train id out of range");
  for (int id : fold.val)
    if (id < 0 || id >= static_cast<int>(data.size()))
      throw SplitError("train_loop: val id out of range");

  UNetParams params = initial ? *initial : build_unet(cfg.net, cfg.seed);
  {
    const std::vector<ParamSpec> plan = param_plan(cfg.net);
    if (params.size() != plan.size())
      throw ShapeError("train_loop: parameter count does not fit the config");
    for (std::size_t i = 0; i < plan.size(); ++i)
      if (params.values[i].shape() != plan[i].shape)
        throw ShapeError("train_loop: parameter shape mismatch at " + plan[i].name);
  }
  AdamState adam =
      AdamState::init(params.values, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);

  LossConfig lossc;
  lossc.lambda1 = cfg.lambda1;
  lossc.lambda2 = cfg.lambda2;
  lossc.ssim_variant = SsimVariant::global;
  lossc.dynamic_range = 2.0;  // signed training space

  const std::string echo = config_echo_text(cfg.net);
  TrainResult result;
  std::uint64_t step_counter = 0;

  SampleBatch batch;
  batch.grad_sum.resize(params.values.size());
  auto flush_batch = [&]() {
    if (batch.count == 0) return;
    std::vector<Tensor> grads;
    grads.reserve(params.values.size());
    const double inv = 1.0 / static_cast<double>(batch.count);
    for (std::size_t i = 0; i < params.values.size(); ++i) {
      std::vector<double>& gs = batch.grad_sum[i];
      for (double& v : gs) v *= inv;
      grads.emplace_back(params.values[i].shape(), std::move(gs));
      batch.grad_sum[i].clear();
    }
    params.values = adam_step(params.values, grads, adam);
    batch.count = 0;
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    RngStream aug_stream(cfg.seed, "augment", static_cast<std::uint64_t>(epoch));
    double train_sum = 0.0;
    int train_n = 0;
    for (int si : fold.train) {
      const ScanRecord& scan = data[static_cast<std::size_t>(si)];
      for (const LabelMask& healthy : scan.healthy_masks) {
        LabelMask hm = healthy;
        if (cfg.augment) hm = apply_augment(hm, sample_augment(aug_stream));
        TrainingPair pair =
            make_training_pair(scan.t1n, hm, scan.unhealthy, cfg.patch);

        Graph g;
        std::vector<Tensor> bound;
        bound.reserve(params.values.size());
        for (const Tensor& p : params.values) bound.push_back(g.variable(p));
        RngStream drop(cfg.seed, "dropout", ++step_counter);
        Tensor pred = unet_forward(g, bound, cfg.net, g.constant(pair.input),
                                   Mode::train, drop);
        Tensor loss = combined_loss(pred, g.constant(pair.target), pair.mask, lossc);
        const double lv = loss.value();
        if (!std::isfinite(lv))
          throw DivergenceError("train loss diverged at epoch " +
                                    std::to_string(epoch),
                                result.history);
        train_sum += lv;
        ++train_n;

        g.backward(loss);
        for (std::size_t i = 0; i < bound.size(); ++i) {
          const Tensor gt = g.grad(bound[i]);
          std::vector<double>& acc = batch.grad_sum[i];
          if (acc.empty()) acc.assign(static_cast<std::size_t>(gt.size()), 0.0);
          const double* gd = gt.data();
          for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += gd[j];
        }
        ++batch.count;
        if (batch.count == cfg.batch_size) flush_batch();
      }
    }
    flush_batch();

    double val_sum = 0.0;
    int val_n = 0;
    for (int si : fold.val) {
      const ScanRecord& scan = data[static_cast<std::size_t>(si)];
      for (const LabelMask& healthy : scan.healthy_masks) {
        TrainingPair pair =
            make_training_pair(scan.t1n, healthy, scan.unhealthy, cfg.patch);
        Graph g;
        std::vector<Tensor> bound;
        bound.reserve(params.values.size());
        for (const Tensor& p : params.values) bound.push_back(g.constant(p));
        RngStream drop(cfg.seed, "dropout-eval", 0);
        Tensor pred = unet_forward(g, bound, cfg.net, g.constant(pair.input),
                                   Mode::eval, drop);
        val_sum += combined_loss(pred, g.constant(pair.target), pair.mask, lossc)
                       .value();
        ++val_n;
      }
    }
    if (val_n == 0) throw SplitError("train_loop: validation fold has no masks");
    const double val_loss = val_sum / static_cast<double>(val_n);
    if (!std::isfinite(val_loss))
      throw DivergenceError("validation loss diverged at epoch " +
                                std::to_string(epoch),
                            result.history);
    const double train_loss =
        train_n ? train_sum / static_cast<double>(train_n) : 0.0;
    result.history.push_back({train_loss, val_loss});

    if (static_cast<int>(result.retained.size()) < cfg.n_best) {
      result.retained.push_back({echo, epoch, val_loss, params});
    } else {
      std::size_t worst = 0;
      for (std::size_t i = 1; i < result.retained.size(); ++i)
        if (checkpoint_before(result.retained[worst].val_loss,
                              result.retained[worst].epoch,
                              result.retained[i].val_loss,
                              result.retained[i].epoch))
          worst = i;
      if (checkpoint_before(val_loss, epoch, result.retained[worst].val_loss,
                            result.retained[worst].epoch))
        result.retained[worst] = {echo, epoch, val_loss, params};
    }
  }

  std::sort(result.retained.begin(), result.retained.end(),
            [](const Checkpoint& a, const Checkpoint& b) {
              return checkpoint_before(a.val_loss, a.epoch, b.val_loss, b.epoch);
            });
  return result;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

struct ByteReader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;
  std::string path;

  void need(std::size_t n) const {
    if (pos + n > bytes.size()) throw FormatError(path + ": truncated checkpoint");
  }
  std::uint32_t u32() {
    need(4);
    const std::uint32_t v = static_cast<std::uint32_t>(bytes[pos]) |
                            (static_cast<std::uint32_t>(bytes[pos + 1]) << 8) |
                            (static_cast<std::uint32_t>(bytes[pos + 2]) << 16) |
                            (static_cast<std::uint32_t>(bytes[pos + 3]) << 24);
    pos += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t u = 0;
    for (int i = 7; i >= 0; --i) u = (u << 8) | bytes[pos + static_cast<std::size_t>(i)];
    pos += 8;
    double d;
    std::memcpy(&d, &u, 8);
    return d;
  }
  float f32() {
    const std::uint32_t u = u32();
    float f;
    std::memcpy(&f, &u, 4);
    return f;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                  bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
    return s;
  }
};

constexpr char kCkMagic[4] = {'U', 'N', 'C', 'K'};
constexpr std::uint32_t kCkVersion = 1;

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::vector<std::uint8_t> bytes;
  bytes.insert(bytes.end(), kCkMagic, kCkMagic + 4);
  put_u32(bytes, kCkVersion);
  put_u32(bytes, static_cast<std::uint32_t>(ck.config_echo.size()));
  bytes.insert(bytes.end(), ck.config_echo.begin(), ck.config_echo.end());
  put_u32(bytes, static_cast<std::uint32_t>(ck.epoch));
  std::uint64_t lu;
  std::memcpy(&lu, &ck.val_loss, 8);
  for (int i = 0; i < 8; ++i)
    bytes.push_back(static_cast<std::uint8_t>((lu >> (8 * i)) & 0xff));
  put_u32(bytes, static_cast<std::uint32_t>(ck.params.size()));
  for (std::size_t t = 0; t < ck.params.size(); ++t) {
    const std::string& name = ck.params.names[t];
    const Tensor& tensor = ck.params.values[t];
    put_u32(bytes, static_cast<std::uint32_t>(name.size()));
    bytes.insert(bytes.end(), name.begin(), name.end());
    put_u32(bytes, static_cast<std::uint32_t>(tensor.rank()));
    for (int d : tensor.shape()) put_u32(bytes, static_cast<std::uint32_t>(d));
    const double* data = tensor.data();
    for (std::int64_t i = 0; i < tensor.size(); ++i) {
      const float f = static_cast<float>(data[i]);
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      put_u32(bytes, u);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failure on " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  ByteReader r{bytes, 0, path};

  r.need(4);
  if (std::memcmp(bytes.data(), kCkMagic, 4) != 0)
    throw FormatError(path + ": bad checkpoint magic");
  r.pos = 4;
  if (r.u32() != kCkVersion) throw FormatError(path + ": unsupported version");

  Checkpoint ck;
  ck.config_echo = r.str(r.u32());
  ck.epoch = static_cast<int>(r.u32());
  ck.val_loss = r.f64();
  if (!std::isfinite(ck.val_loss))
    throw CorruptCheckpoint(path + ": non-finite validation loss");

  const UNetConfig saved = parse_config_echo(ck.config_echo);
  const std::vector<ParamSpec> plan = param_plan(saved);

  const std::uint32_t count = r.u32();
  if (count != plan.size())
    throw CorruptCheckpoint(path + ": parameter count mismatch");
  ck.params.names.reserve(count);
  ck.params.values.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::string name = r.str(r.u32());
    if (name != plan[t].name)
      throw CorruptCheckpoint(path + ": unexpected tensor '" + name + "'");
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError(path + ": implausible tensor rank");
    Shape shape(rank);
    for (std::uint32_t i = 0; i < rank; ++i)
      shape[i] = static_cast<int>(r.u32());
    if (shape != plan[t].shape)
      throw CorruptCheckpoint(path + ": tensor shape mismatch for '" + name + "'");
    std::vector<double> data(static_cast<std::size_t>(shape_count(shape)));
    for (double& v : data) v = static_cast<double>(r.f32());
    ck.params.names.push_back(name);
    ck.params.values.emplace_back(std::move(shape), std::move(data));
  }
  if (r.pos != bytes.size())
    throw FormatError(path + ": trailing bytes after checkpoint payload");
  return ck;
}

Checkpoint load_checkpoint(const std::string& path, const UNetConfig& expect) {
  Checkpoint ck = load_checkpoint(path);
  const UNetConfig saved = parse_config_echo(ck.config_echo);
  if (saved.base_channels != expect.base_channels ||
      saved.levels != expect.levels ||
      saved.in_channels != expect.in_channels ||
      saved.out_channels != expect.out_channels ||
      saved.up_channel_rule != expect.up_channel_rule)
    throw CorruptCheckpoint(path +
                            ": checkpoint architecture does not match config");
  return ck;
}

}  // namespace vf
