#include "vf/unet.hpp"

#include <algorithm>
#include <cmath>

namespace vf {

std::string to_string(UpChannelRule r) {
  return r == UpChannelRule::halved ? "halved" : "matched";
}

std::string to_string(FinalActivation a) {
  return a == FinalActivation::none ? "none" : "tanh";
}

UpChannelRule up_rule_from_string(const std::string& s) {
  if (s == "halved") return UpChannelRule::halved;
  if (s == "matched") return UpChannelRule::matched;
  throw ConfigError("unknown up_channel_rule '" + s + "'");
}

FinalActivation final_act_from_string(const std::string& s) {
  if (s == "none") return FinalActivation::none;
  if (s == "tanh") return FinalActivation::tanh;
  throw ConfigError("unknown final_activation '" + s + "'");
}

void UNetConfig::validate() const {
  if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
  if (levels < 1) throw ConfigError("levels must be >= 1");
  if (in_channels < 1 || out_channels < 1)
    throw ConfigError("channel counts must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw ConfigError("dropout_rate must be in [0,1)");
}

namespace {

struct LayerSpec {
  std::string name;
  Shape shape;
  enum class Init { he_kernel, zero, one, quarter } init;
};

int down_channels(const UNetConfig& cfg, int level) {
  return cfg.base_channels << level;
}

int up_channels(const UNetConfig& cfg, int level) {
  const int down = down_channels(cfg, level);
  if (cfg.up_channel_rule == UpChannelRule::matched) return down;
  return std::max(1, down / 2);
}

void push_conv_block(std::vector<LayerSpec>& out, const std::string& prefix,
                     int idx, int cin, int cout, bool prelu_act) {
  const std::string n = prefix + ".conv" + std::to_string(idx);
  out.push_back({n + ".w", {cout, cin, 3, 3, 3}, LayerSpec::Init::he_kernel});
  out.push_back({n + ".b", {cout}, LayerSpec::Init::zero});
  const std::string in_n = prefix + ".in" + std::to_string(idx);
  out.push_back({in_n + ".gamma", {cout}, LayerSpec::Init::one});
  out.push_back({in_n + ".beta", {cout}, LayerSpec::Init::zero});
  if (prelu_act)
    out.push_back({prefix + ".prelu" + std::to_string(idx) + ".a",
                   {cout}, LayerSpec::Init::quarter});
}

// Declaration order mirrors execution order.
std::vector<LayerSpec> layer_plan(const UNetConfig& cfg) {
  cfg.validate();
  std::vector<LayerSpec> plan;
  int ch = cfg.in_channels;
  for (int i = 0; i < cfg.levels; ++i) {
    const std::string prefix = "down" + std::to_string(i);
    const int out = down_channels(cfg, i);
    push_conv_block(plan, prefix, 1, ch, out, true);
    push_conv_block(plan, prefix, 2, out, out, true);
    ch = out;
  }
  const int bridge = cfg.base_channels << cfg.levels;
  push_conv_block(plan, "bridge", 1, ch, bridge, false);
  push_conv_block(plan, "bridge", 2, bridge, bridge, false);
  ch = bridge;
  for (int i = cfg.levels - 1; i >= 0; --i) {
    const std::string prefix = "up" + std::to_string(i);
    const int skip = down_channels(cfg, i);
    const int out = up_channels(cfg, i);
    push_conv_block(plan, prefix, 1, ch + skip, out, true);
    push_conv_block(plan, prefix, 2, out, out, true);
    ch = out;
  }
  plan.push_back({"final.conv.w", {cfg.out_channels, ch, 1, 1, 1},
                  LayerSpec::Init::he_kernel});
  plan.push_back({"final.conv.b", {cfg.out_channels}, LayerSpec::Init::zero});
  return plan;
}

}  // namespace

UNetParams build_unet(const UNetConfig& cfg, std::uint64_t init_seed) {
  const std::vector<LayerSpec> plan = layer_plan(cfg);
  RngStream stream(init_seed, "init", 0);
  UNetParams p;
  p.names.reserve(plan.size());
  p.values.reserve(plan.size());
  for (const LayerSpec& spec : plan) {
    Tensor t(spec.shape);
    double* d = t.data();
    const std::int64_t n = t.size();
    switch (spec.init) {
      case LayerSpec::Init::he_kernel: {
        // fan-in = Cin * kx * ky * kz
        std::int64_t fan_in = 1;
        for (std::size_t i = 1; i < spec.shape.size(); ++i) fan_in *= spec.shape[i];
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (std::int64_t i = 0; i < n; ++i) d[i] = stream.normal() * stddev;
        break;
      }
      case LayerSpec::Init::zero:
        break;
      case LayerSpec::Init::one:
        std::fill(d, d + n, 1.0);
        break;
      case LayerSpec::Init::quarter:
        std::fill(d, d + n, 0.25);
        break;
    }
    p.names.push_back(spec.name);
    p.values.push_back(std::move(t));
  }
  return p;
}

std::int64_t count_params(const UNetConfig& cfg) {
  std::int64_t total = 0;
  for (const LayerSpec& spec : layer_plan(cfg)) total += shape_count(spec.shape);
  return total;
}

std::vector<ParamSpec> param_plan(const UNetConfig& cfg) {
  std::vector<ParamSpec> out;
  for (LayerSpec& spec : layer_plan(cfg))
    out.push_back({std::move(spec.name), std::move(spec.shape)});
  return out;
}

namespace {

// Sequential cursor over the bound parameter list; order must match
// layer_plan.
struct ParamCursor {
  const std::vector<Tensor>& params;
  std::size_t next = 0;
  const Tensor& take() {
    if (next >= params.size())
      throw ShapeError("unet_forward: parameter list too short");
    return params[next++];
  }
};

Tensor conv_in_act(Graph&, ParamCursor& cur, const Tensor& x, bool prelu_act) {
  const Tensor& w = cur.take();
  const Tensor& b = cur.take();
  Tensor y = conv3d(x, w, b, 1, 1);
  const Tensor& gamma = cur.take();
  const Tensor& beta = cur.take();
  y = instance_norm(y, gamma, beta);
  if (prelu_act) {
    const Tensor& a = cur.take();
    return prelu(y, a);
  }
  return relu(y);
}

}  // namespace

Tensor unet_forward(Graph& g, const std::vector<Tensor>& params_bound,
                    const UNetConfig& cfg, const Tensor& patch, Mode mode,
                    RngStream& dropout_stream) {
  cfg.validate();
  if (patch.rank() != 4 || patch.shape()[0] != cfg.in_channels)
    throw ShapeError("unet_forward: patch must be [" +
                     std::to_string(cfg.in_channels) + ",X,Y,Z], got " +
                     shape_str(patch.shape()));
  const int div = 1 << cfg.levels;
  for (int axis = 1; axis <= 3; ++axis)
    if (patch.shape()[axis] % div)
      throw ShapeError("unet_forward: spatial dims " + shape_str(patch.shape()) +
                       " not divisible by " + std::to_string(div));

  ParamCursor cur{params_bound};
  Tensor x = patch;
  std::vector<Tensor> skips;
  skips.reserve(static_cast<std::size_t>(cfg.levels));
  for (int i = 0; i < cfg.levels; ++i) {
    x = conv_in_act(g, cur, x, true);
    x = conv_in_act(g, cur, x, true);
    skips.push_back(x);
    x = maxpool3d(x);
  }
  x = conv_in_act(g, cur, x, false);
  x = dropout(x, cfg.dropout_rate, mode, dropout_stream);
  x = conv_in_act(g, cur, x, false);
  x = dropout(x, cfg.dropout_rate, mode, dropout_stream);
  for (int i = cfg.levels - 1; i >= 0; --i) {
    x = upsample_nn(x, 2);
    x = concat_channels(x, skips[static_cast<std::size_t>(i)]);
    x = conv_in_act(g, cur, x, true);
    x = dropout(x, cfg.dropout_rate, mode, dropout_stream);
    x = conv_in_act(g, cur, x, true);
    x = dropout(x, cfg.dropout_rate, mode, dropout_stream);
  }
  const Tensor& w = cur.take();
  const Tensor& b = cur.take();
  x = conv3d(x, w, b, 0, 1);
  if (cur.next != params_bound.size())
    throw ShapeError("unet_forward: parameter list too long");
  if (cfg.final_activation == FinalActivation::tanh) x = tanh(x);
  return x;
}

Tensor unet_infer(const UNetParams& params, const UNetConfig& cfg,
                  const Tensor& patch) {
  Graph g;
  std::vector<Tensor> bound;
  bound.reserve(params.values.size());
  for (const Tensor& t : params.values) bound.push_back(g.constant(t));
  RngStream unused(0, "infer-dropout", 0);
  Tensor out =
      unet_forward(g, bound, cfg, g.constant(patch), Mode::eval, unused);
  // detach: return plain values
  return Tensor(out.shape(), out.values());
}

}  // namespace vf
