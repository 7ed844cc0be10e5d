#ifndef VF_TRAINING_HPP
#define VF_TRAINING_HPP

#include <string>
#include <utility>
#include <vector>

#include "vf/unet.hpp"
#include "vf/volume.hpp"

namespace vf {

struct TrainConfig {
  int epochs = 500;
  int k_folds = 5;
  int n_best = 5;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  int batch_size = 1;
  std::uint64_t seed = 0;
  bool augment = true;  // fresh mirror/rotation of each healthy mask per epoch
  Dims3 patch{128, 128, 96};
  UNetConfig net;  // dropout lives in net.dropout_rate

  void validate() const;  // throws ConfigError
};

// One scan with its generated healthy masks; each (scan, mask) pair is a
// training sample.
struct ScanRecord {
  std::string id;
  Volume t1n;  // raw
  LabelMask unhealthy;
  std::vector<LabelMask> healthy_masks;
};
using Dataset = std::vector<ScanRecord>;

struct FoldSplit {
  std::vector<int> train;
  std::vector<int> val;
};

// Deterministic shuffle, then contiguous validation chunks; the first
// (n mod k) folds get the extra element. Throws SplitError when n < k or
// k < 2.
std::vector<FoldSplit> kfold_split(const std::vector<int>& scan_ids, int k,
                                   std::uint64_t seed);

struct Checkpoint {
  std::string config_echo;  // key=value architecture block
  int epoch = 0;            // 1-based
  double val_loss = 0.0;
  UNetParams params;
};

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<Checkpoint> retained;  // ordered by (val_loss, epoch)
  std::vector<EpochStats> history;
};

// Raised when a training or validation loss goes non-finite; carries the
// per-epoch history recorded up to the failing epoch.
struct DivergenceError : Error {
  std::vector<EpochStats> history;
  DivergenceError(const std::string& msg, std::vector<EpochStats> h)
      : Error(msg), history(std::move(h)) {}
};

std::string config_echo_text(const UNetConfig& cfg);
UNetConfig parse_config_echo(const std::string& text);  // throws CorruptCheckpoint

// Epochs (1-based) of the n_best lowest losses, ordered by (loss, epoch).
std::vector<int> select_best_epochs(const std::vector<double>& val_losses,
                                    int n_best);

// Full loop: per epoch, train on every (scan, mask) pair of the train fold
// (optionally augmented), validate on the val fold without augmentation,
// and retain the n_best checkpoints with the lowest validation loss (ties
// keep the earlier epoch). `initial` warm-starts the parameters instead of
// seeded initialization.
TrainResult train_loop(const Dataset& data, const FoldSplit& fold,
                       const TrainConfig& cfg,
                       const UNetParams* initial = nullptr);

// Byte format: magic "UNCK", version u32, length-prefixed config text,
// epoch u32, validation loss f64, parameter count u32, then per tensor
// name/rank/dims and a 32-bit payload, little-endian, declaration order.
// Checkpoints are self-describing: the one-argument load validates the
// payload against the embedded config echo; the two-argument form
// additionally requires that architecture to match `expect`.
void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
Checkpoint load_checkpoint(const std::string& path, const UNetConfig& expect);

}  // namespace vf

#endif  // VF_TRAINING_HPP
