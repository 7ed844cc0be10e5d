#ifndef VF_ADAM_HPP
#define VF_ADAM_HPP

#include <vector>

#include "vf/tensor.hpp"

namespace vf {

// Adam with bias correction:
//   m <- b1*m + (1-b1)*g        mhat = m / (1 - b1^t)
//   v <- b2*v + (1-b2)*g^2      vhat = v / (1 - b2^t)
//   theta <- theta - lr * mhat / (sqrt(vhat) + eps)
struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int step_count = 0;
  std::vector<std::vector<double>> m;  // same shapes as parameters
  std::vector<std::vector<double>> v;

  static AdamState init(const std::vector<Tensor>& params, double lr = 1e-4,
                        double beta1 = 0.9, double beta2 = 0.999,
                        double eps = 1e-8);
};

// One update over a parameter list. Advances the state and returns the new
// parameter values; inputs are untouched. Throws ShapeError if the list or
// any gradient does not match the shapes the state was initialized with.
std::vector<Tensor> adam_step(const std::vector<Tensor>& params,
                              const std::vector<Tensor>& grads,
                              AdamState& state);

}  // namespace vf

#endif  // VF_ADAM_HPP
