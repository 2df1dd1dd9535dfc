#include "uprec/adam.hpp"

#include <cmath>

#include "uprec/common.hpp"

namespace uprec {

AdamState AdamState::init(ModelParams& params) {
  AdamState st;
  for (const TensorRef& t : tensor_refs(params)) {
    st.m.emplace_back(t.size, 0.0);
    st.v.emplace_back(t.size, 0.0);
  }
  return st;
}

void adam_step(ModelParams& params, ModelGrads& grads, AdamState& state, double lr) {
  std::vector<TensorRef> p = tensor_refs(params);
  std::vector<TensorRef> g = tensor_refs(grads);
  if (p.size() != g.size() || p.size() != state.m.size())
    throw DataError("adam_step: tensor count mismatch");

  state.step += 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

  for (size_t t = 0; t < p.size(); ++t) {
    if (p[t].size != g[t].size || p[t].size != state.m[t].size())
      throw DataError("adam_step: shape mismatch for " + p[t].name);
    double* pd = p[t].data;
    const double* gd = g[t].data;
    double* md = state.m[t].data();
    double* vd = state.v[t].data();
    for (size_t i = 0; i < p[t].size; ++i) {
      double grad = gd[i];
      if (!std::isfinite(grad)) throw DivergenceError("non-finite gradient in " + p[t].name);
      md[i] = state.beta1 * md[i] + (1.0 - state.beta1) * grad;
      vd[i] = state.beta2 * vd[i] + (1.0 - state.beta2) * grad * grad;
      double m_hat = md[i] / bc1;
      double v_hat = vd[i] / bc2;
      pd[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

double clip_grad_norm(ModelGrads& grads, double max_norm) {
  std::vector<TensorRef> g = tensor_refs(grads);
  double sq = 0.0;
  for (const TensorRef& t : g)
    for (size_t i = 0; i < t.size; ++i) sq += t.data[i] * t.data[i];
  double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    double scale = max_norm / norm;
    for (const TensorRef& t : g)
      for (size_t i = 0; i < t.size; ++i) t.data[i] *= scale;
  }
  return norm;
}

}  // namespace uprec
