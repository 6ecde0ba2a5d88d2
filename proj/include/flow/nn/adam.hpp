#pragma once

#include "flow/nn/tensor.hpp"

namespace flow::nn {

// Adam with bias correction. Moment buffers are allocated on first use and
// must shape-match their parameters afterwards.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

void adam_step(std::vector<Tensor*> params, const std::vector<const Tensor*>& grads,
               AdamState& state);

}  // namespace flow::nn
