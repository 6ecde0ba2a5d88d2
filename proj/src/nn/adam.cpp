#include "flow/nn/adam.hpp"

#include <cmath>

namespace flow::nn {

void adam_step(std::vector<Tensor*> params, const std::vector<const Tensor*>& grads,
               AdamState& state) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: params/grads count mismatch");
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.push_back(Tensor::zeros(p->shape));
      state.v.push_back(Tensor::zeros(p->shape));
    }
  }
  if (state.m.size() != params.size())
    throw std::invalid_argument("adam_step: state was initialized for a different parameter set");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    check_same_shape(p, g, "adam_step");
    check_same_shape(p, state.m[i], "adam_step(state)");
    auto& m = state.m[i].v;
    auto& v = state.v[i].v;
    for (size_t j = 0; j < p.v.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g.v[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g.v[j] * g.v[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p.v[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace flow::nn
