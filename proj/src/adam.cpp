#include "vf/adam.hpp"

#include <cmath>

namespace vf {

AdamState AdamState::init(const std::vector<Tensor>& params, double lr,
                          double beta1, double beta2, double eps) {
  AdamState s;
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const Tensor& p : params) {
    s.m.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
    s.v.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
  }
  return s;
}

std::vector<Tensor> adam_step(const std::vector<Tensor>& params,
                              const std::vector<Tensor>& grads,
                              AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ShapeError("adam_step: parameter/gradient/state list lengths differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape())
      throw ShapeError("adam_step: gradient shape " + shape_str(grads[i].shape()) +
                       " does not match parameter " + shape_str(params[i].shape()));
    if (static_cast<std::size_t>(params[i].size()) != state.m[i].size())
      throw ShapeError("adam_step: state shape does not match parameter list");
  }

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double corr1 = 1.0 - std::pow(state.beta1, t);
  const double corr2 = 1.0 - std::pow(state.beta2, t);

  std::vector<Tensor> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double* p = params[i].data();
    const double* g = grads[i].data();
    std::vector<double>& m = state.m[i];
    std::vector<double>& v = state.v[i];
    std::vector<double> next(m.size());
    for (std::size_t j = 0; j < m.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / corr1;
      const double vhat = v[j] / corr2;
      next[j] = p[j] - state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
    out.emplace_back(params[i].shape(), std::move(next));
  }
  return out;
}

}  // namespace vf
