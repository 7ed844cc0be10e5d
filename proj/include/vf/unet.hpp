#ifndef VF_UNET_HPP
#define VF_UNET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "vf/tensor.hpp"

namespace vf {

// Up-path channel width relative to the mirrored down block: halved takes
// half the down block's channels (floor, min 1), matched keeps them equal.
enum class UpChannelRule : std::uint8_t { halved, matched };
enum class FinalActivation : std::uint8_t { none, tanh };

std::string to_string(UpChannelRule r);
std::string to_string(FinalActivation a);
UpChannelRule up_rule_from_string(const std::string& s);
FinalActivation final_act_from_string(const std::string& s);

struct UNetConfig {
  int base_channels = 32;
  int levels = 3;
  int in_channels = 2;   // voided image + combined mask
  int out_channels = 1;
  double dropout_rate = 0.2;
  UpChannelRule up_channel_rule = UpChannelRule::halved;
  FinalActivation final_activation = FinalActivation::none;

  void validate() const;  // throws ConfigError
};

// Learnable tensors in a fixed declaration order: down blocks shallow to
// deep, bridge, up blocks deep to shallow, final conv. Serialization and
// optimizer state rely on this order.
struct UNetParams {
  std::vector<std::string> names;
  std::vector<Tensor> values;

  std::size_t size() const { return values.size(); }
};

// He fan-in initialization for conv kernels from the (seed, "init", 0)
// stream; biases and IN shifts zero, IN scales one, PReLU slopes 0.25.
UNetParams build_unet(const UNetConfig& cfg, std::uint64_t init_seed);

std::int64_t count_params(const UNetConfig& cfg);

// Name and shape of every learnable tensor, in declaration order.
struct ParamSpec {
  std::string name;
  Shape shape;
};
std::vector<ParamSpec> param_plan(const UNetConfig& cfg);

// Forward pass over tensors bound to g. params_bound follows UNetParams
// declaration order (variables for training, constants for inference);
// patch is [in_channels, X, Y, Z] with each spatial dim divisible by
// 2^levels. Dropout draws from the given stream in train mode only.
Tensor unet_forward(Graph& g, const std::vector<Tensor>& params_bound,
                    const UNetConfig& cfg, const Tensor& patch, Mode mode,
                    RngStream& dropout_stream);

// Eval-mode inference on an unbound patch; no gradient bookkeeping.
Tensor unet_infer(const UNetParams& params, const UNetConfig& cfg,
                  const Tensor& patch);

}  // namespace vf

#endif  // VF_UNET_HPP
