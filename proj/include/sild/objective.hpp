#pragma once

// Task losses, variant-pattern sampling, mixed loss and the invariance
// penalty, assembled into a single scalar whose gradient routing realizes the
// parameter partition {theta, f_I} / {f_V}.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sild/autograd.hpp"
#include "sild/errors.hpp"
#include "sild/fft.hpp"
#include "sild/model.hpp"
#include "sild/rng.hpp"

namespace sild {

struct ObjectiveConfig {
  double lambda = 1e-2;
  std::size_t samples = 100;  // S
  bool variant_backprop_theta = false;
};

template <typename T>
struct LossBundle {
  ad::Var<T> l_inv_task;  // L_I
  ad::Var<T> l_var_task;  // L_V
  ad::Var<T> l_invariance;  // L_INV
  ad::Var<T> total;
  std::vector<T> mixed;  // per-sample mixed losses
  ad::Var<T> logits;  // invariant-branch predictions (all nodes or all pairs)
};

// Mean softmax cross-entropy of rows of an n x C logit matrix.
template <typename T>
ad::Var<T> softmax_cross_entropy(const ad::Var<T>& logits, const std::vector<int>& labels) {
  auto& tape = logits.tape();
  const auto& s = logits.shape();
  if (s.size() != 2 || s[0] != labels.size())
    throw ShapeError("softmax_cross_entropy: logits " + ad::to_string(s) + " for " + std::to_string(labels.size()) +
                     " labels");
  if (labels.empty()) throw ValidationError("softmax_cross_entropy: empty sample");
  const std::size_t n = s[0], c = s[1];
  ad::Tensor<T> mx({n, 1}), onehot({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c)
      throw ValidationError("softmax_cross_entropy: label " + std::to_string(labels[i]) + " outside [0," +
                            std::to_string(c) + ")");
    T m = logits.value()[i * c];
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, logits.value()[i * c + j]);
    mx[i] = m;
    onehot[i * c + static_cast<std::size_t>(labels[i])] = T(1);
  }
  auto shifted = logits - tape.constant(std::move(mx));
  auto lse = ad::log(ad::sum(ad::exp(shifted), 1));
  auto picked = ad::sum(shifted * tape.constant(std::move(onehot)), 1);
  return ad::mean(lse - picked, 0);
}

// Mean binary cross-entropy on logits.
template <typename T>
ad::Var<T> binary_cross_entropy(const ad::Var<T>& logits, const std::vector<T>& targets) {
  if (logits.shape() != ad::Shape{targets.size()})
    throw ShapeError("binary_cross_entropy: logits " + ad::to_string(logits.shape()) + " for " +
                     std::to_string(targets.size()) + " targets");
  if (targets.empty()) throw ValidationError("binary_cross_entropy: empty sample");
  auto y = logits.tape().constant(ad::Tensor<T>({targets.size()}, targets));
  return ad::mean(ad::softplus(logits) - logits * y, 0);
}

// S row indices of a pool of n patterns: without replacement when S <= n.
inline std::vector<std::size_t> sample_variant_pool(std::size_t n, std::size_t s, std::uint64_t seed) {
  if (n == 0) throw ValidationError("sample_variant_pool: empty pool");
  if (s == 0) throw ConfigError("sample_variant_pool: S must be >= 1");
  Rng rng(derive_seed(seed, 0x9001));
  if (s <= n) return rng.sample_without_replacement(n, s);
  std::vector<std::size_t> idx(s);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
  return idx;
}

// Population variance of a list of scalar losses.
template <typename T>
ad::Var<T> invariance_loss(const std::vector<ad::Var<T>>& mixed) {
  if (mixed.empty()) throw ValidationError("invariance_loss: no mixed losses");
  std::vector<ad::Var<T>> cols;
  for (const auto& m : mixed) cols.push_back(ad::reshape(m, {1}));
  return ad::variance(ad::concat(cols), 0);
}

// l(logits * gate, Y) for a constant C-vector gate broadcast over rows.
template <typename T>
ad::Var<T> mixed_loss(const ad::Var<T>& logits, const std::vector<T>& gate, const std::vector<int>& labels) {
  auto g = logits.tape().constant(ad::Tensor<T>({1, gate.size()}, gate));
  return softmax_cross_entropy(logits * g, labels);
}

template <typename T>
ComplexVar<T> detach(const ComplexVar<T>& z) {
  return {ad::detach(z.re), ad::detach(z.im)};
}

// Copies of the bound parameters that enter as constants.
template <typename T>
BoundParams<T> frozen_copy(const BoundParams<T>& p) {
  BoundParams<T> out{p.params, {}};
  for (const auto& v : p.vars) out.vars.push_back(ad::detach(v));
  return out;
}

// Values that enter the objective through stop-gradients. Normally taken from
// the live forward pass; a gradient check supplies base-point copies instead
// so that finite differences see the same constants as the analytic gradient.
template <typename T>
struct StopGradSource {
  ComplexVar<T> z_var;
  BoundParams<T> params;
};

inline void check_lambda(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
}

// Node classification objective on the nodes in `rows` with labels `y`.
template <typename T>
LossBundle<T> node_objective(const ForwardState<T>& s, const BoundParams<T>& p, const std::vector<std::size_t>& rows,
                             const std::vector<int>& y, const ObjectiveConfig& cfg, std::uint64_t seed,
                             const StopGradSource<T>* sg = nullptr) {
  check_lambda(cfg.lambda);
  if (rows.empty()) throw ValidationError("node_objective: empty training subset");
  LossBundle<T> b;
  b.logits = classify_nodes(s.z_inv, p, "f_I");
  auto logits_i = ad::gather_rows(b.logits, rows);
  b.l_inv_task = softmax_cross_entropy(logits_i, y);

  const auto z_fixed = sg ? sg->z_var : detach(s.z_var);
  const auto z_var = cfg.variant_backprop_theta ? s.z_var : z_fixed;
  b.l_var_task = softmax_cross_entropy(ad::gather_rows(classify_nodes(z_var, p, "f_V"), rows), y);

  const std::size_t n = s.z.re.shape()[1];
  const auto pool = sample_variant_pool(n, cfg.samples, seed);
  const auto frozen = sg ? sg->params : frozen_copy(p);
  auto gates = ad::sigmoid(ad::gather_rows(classify_nodes(z_fixed, frozen, "f_V"), pool));
  const std::size_t c = gates.shape()[1];
  std::vector<ad::Var<T>> mixed;
  for (std::size_t j = 0; j < pool.size(); ++j) {
    std::vector<T> gate(gates.value().data.begin() + static_cast<std::ptrdiff_t>(j * c),
                        gates.value().data.begin() + static_cast<std::ptrdiff_t>((j + 1) * c));
    mixed.push_back(mixed_loss(logits_i, gate, y));
    b.mixed.push_back(mixed.back().item());
  }
  b.l_invariance = invariance_loss(mixed);
  b.total = b.l_inv_task + ad::scale(b.l_invariance, static_cast<T>(cfg.lambda)) + b.l_var_task;
  return b;
}

// Labeled node pairs to score at one time index.
template <typename T>
struct LinkBatch {
  EdgeList pairs;
  std::vector<T> targets;
};

// Link prediction objective at time index t of the (history-only) forward.
// A sampled node pair (a, b) stands for a variant pattern pair; its gate is
// sigmoid(<H_V[t,a], H_V[t,b]>) applied to every invariant logit.
template <typename T>
LossBundle<T> link_objective(const ForwardState<T>& s, const LinkBatch<T>& batch, std::size_t t,
                             const ObjectiveConfig& cfg, std::uint64_t seed, const StopGradSource<T>* sg = nullptr) {
  check_lambda(cfg.lambda);
  LossBundle<T> b;
  auto h_inv = spectral::idft_real(s.z_inv.re, s.z_inv.im);
  auto logits = decode_links(h_inv, batch.pairs, t);
  b.logits = logits;
  b.l_inv_task = binary_cross_entropy(logits, batch.targets);

  const auto z_fixed = sg ? sg->z_var : detach(s.z_var);
  const auto z_var = cfg.variant_backprop_theta ? s.z_var : z_fixed;
  auto h_var = spectral::idft_real(z_var.re, z_var.im);
  b.l_var_task = binary_cross_entropy(decode_links(h_var, batch.pairs, t), batch.targets);

  const std::size_t n = s.z.re.shape()[1];
  const auto a = sample_variant_pool(n, cfg.samples, seed);
  const auto c = sample_variant_pool(n, cfg.samples, derive_seed(seed, 1));
  EdgeList pattern_pairs;
  for (std::size_t j = 0; j < a.size(); ++j) pattern_pairs.edges.push_back({static_cast<NodeId>(a[j]), static_cast<NodeId>(c[j])});
  auto gates = ad::sigmoid(decode_links(spectral::idft_real(z_fixed.re, z_fixed.im), pattern_pairs, t));
  std::vector<ad::Var<T>> mixed;
  for (std::size_t j = 0; j < a.size(); ++j) {
    auto g = logits.tape().constant(ad::Tensor<T>::scalar(gates.value()[j]));
    mixed.push_back(binary_cross_entropy(logits * g, batch.targets));
    b.mixed.push_back(mixed.back().item());
  }
  b.l_invariance = invariance_loss(mixed);
  b.total = b.l_inv_task + ad::scale(b.l_invariance, static_cast<T>(cfg.lambda)) + b.l_var_task;
  return b;
}

}  // namespace sild
