#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "sild/autograd.hpp"
#include "sild/errors.hpp"

namespace sild {

struct AdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-7;  // L2 term added to the gradient
};

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m, v;
  std::size_t step = 0;
};

// One bias-corrected Adam update. Entries with skip[i] set are left alone.
template <typename T>
void adam_step(std::vector<ad::Tensor<T>*> params, const std::vector<ad::Tensor<T>>& grads, AdamState<T>& st,
               const AdamConfig& cfg, const std::vector<bool>& skip = {}) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter and gradient counts differ");
  if (st.m.empty()) {
    for (auto* p : params) {
      st.m.emplace_back(p->size(), T(0));
      st.v.emplace_back(p->size(), T(0));
    }
  }
  ++st.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!skip.empty() && skip[k]) continue;
    auto& p = params[k]->data;
    const auto& g = grads[k].data;
    if (g.size() != p.size())
      throw ShapeError("adam_step: gradient shape " + ad::to_string(grads[k].shape) + " does not match parameter " +
                       ad::to_string(params[k]->shape));
    auto& m = st.m[k];
    auto& v = st.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g[i]) + cfg.weight_decay * static_cast<double>(p[i]);
      const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      p[i] = static_cast<T>(static_cast<double>(p[i]) - cfg.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps));
    }
  }
}

}  // namespace sild
