#pragma once

#include <cstdint>
#include <vector>

#include "uprec/model.hpp"

namespace uprec {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  uint64_t step = 0;
  // Flat moment buffers, one per tensor in tensor_refs order.
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState init(ModelParams& params);
};

// Standard Adam with bias correction. Throws DivergenceError naming the first
// tensor containing a non-finite gradient.
void adam_step(ModelParams& params, ModelGrads& grads, AdamState& state, double lr);

// Scales all gradients so the global L2 norm is at most max_norm
// (no-op when the norm is already within bounds). Returns the pre-clip norm.
double clip_grad_norm(ModelGrads& grads, double max_norm);

}  // namespace uprec
