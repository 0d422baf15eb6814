#pragma once

// SILD forward pipeline: per-snapshot message passing, spectral transform,
// disentangled spectrum masks, amplitude filtering, classifiers and the link
// decoder.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "sild/autograd.hpp"
#include "sild/errors.hpp"
#include "sild/fft.hpp"
#include "sild/graph.hpp"
#include "sild/rng.hpp"

namespace sild {

enum class Task { node, link };
enum class Aggregator { attention, sum, mean };
enum class Group { theta, f_I, f_V };

inline const char* to_string(Group g) {
  switch (g) {
    case Group::theta: return "theta";
    case Group::f_I: return "f_I";
    case Group::f_V: return "f_V";
  }
  return "?";
}

inline const char* to_string(Aggregator a) {
  switch (a) {
    case Aggregator::attention: return "attention";
    case Aggregator::sum: return "sum";
    case Aggregator::mean: return "mean";
  }
  return "?";
}

inline Aggregator parse_aggregator(const std::string& s) {
  if (s == "attention") return Aggregator::attention;
  if (s == "sum") return Aggregator::sum;
  if (s == "mean") return Aggregator::mean;
  throw ConfigError("unknown aggregator '" + s + "' (expected attention, sum or mean)");
}

struct ModelConfig {
  Task task = Task::node;
  std::size_t in_dim = 0;
  std::size_t hidden = 16;
  std::size_t layers = 2;
  std::size_t mask_hidden = 16;
  std::size_t num_classes = 0;  // node task only
  std::size_t time_length = 0;  // K = T; sizes the classifier input
  Aggregator aggregator = Aggregator::attention;
  double tau = 1.0;
  bool no_mask = false;  // masks frozen at 0.5
};

template <typename T>
struct Parameter {
  std::string name;
  Group group;
  ad::Tensor<T> value;
};

template <typename T>
struct ModelParams {
  std::vector<Parameter<T>> list;

  std::size_t index(const std::string& name) const {
    for (std::size_t i = 0; i < list.size(); ++i)
      if (list[i].name == name) return i;
    throw ValidationError("no parameter named '" + name + "'");
  }
  ad::Tensor<T>& operator[](const std::string& name) { return list[index(name)].value; }
  const ad::Tensor<T>& operator[](const std::string& name) const { return list[index(name)].value; }
  bool contains(const std::string& name) const {
    return std::any_of(list.begin(), list.end(), [&](const auto& p) { return p.name == name; });
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : list) n += p.value.size();
    return n;
  }
};

// Parameters placed on a tape for one forward/backward episode.
template <typename T>
struct BoundParams {
  const ModelParams<T>* params = nullptr;
  std::vector<ad::Var<T>> vars;

  ad::Var<T> operator[](const std::string& name) const { return vars[params->index(name)]; }
};

// Trainable leaves, except groups listed in `frozen`, which enter as constants.
template <typename T>
BoundParams<T> bind(ad::Tape<T>& tape, const ModelParams<T>& p, std::initializer_list<Group> frozen = {}) {
  BoundParams<T> b{&p, {}};
  for (const auto& q : p.list) {
    const bool freeze = std::find(frozen.begin(), frozen.end(), q.group) != frozen.end();
    b.vars.push_back(freeze ? tape.constant(q.value) : tape.variable(q.value));
  }
  return b;
}

namespace detail {

template <typename T>
void glorot(ModelParams<T>& p, Rng& rng, const std::string& name, Group g, std::size_t fan_in, std::size_t fan_out) {
  ad::Tensor<T> w({fan_in, fan_out});
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& x : w.data) x = static_cast<T>(rng.uniform(-a, a));
  p.list.push_back({name, g, std::move(w)});
}

template <typename T>
void zeros(ModelParams<T>& p, const std::string& name, Group g, ad::Shape shape) {
  p.list.push_back({name, g, ad::Tensor<T>(std::move(shape))});
}

template <typename T>
void mlp_params(ModelParams<T>& p, Rng& rng, const std::string& prefix, Group g, std::size_t in, std::size_t hid,
                std::size_t out) {
  glorot(p, rng, prefix + ".W1", g, in, hid);
  zeros(p, prefix + ".b1", g, {hid});
  glorot(p, rng, prefix + ".W2", g, hid, out);
  zeros(p, prefix + ".b2", g, {out});
}

}  // namespace detail

template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.in_dim == 0 || cfg.hidden == 0 || cfg.layers == 0 || cfg.mask_hidden == 0)
    throw ConfigError("model dimensions and layer count must be positive");
  if (cfg.task == Task::node && (cfg.num_classes < 2 || cfg.time_length == 0))
    throw ConfigError("node task needs num_classes >= 2 and time_length >= 1");
  Rng rng(derive_seed(seed, 0x5111d));
  ModelParams<T> p;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string pre = "gnn" + std::to_string(l);
    detail::glorot(p, rng, pre + ".W", Group::theta, l == 0 ? cfg.in_dim : cfg.hidden, cfg.hidden);
    detail::zeros(p, pre + ".b", Group::theta, {cfg.hidden});
    if (cfg.aggregator == Aggregator::attention) {
      detail::glorot(p, rng, pre + ".a_src", Group::theta, cfg.hidden, 1);
      detail::glorot(p, rng, pre + ".a_dst", Group::theta, cfg.hidden, 1);
    }
  }
  detail::mlp_params(p, rng, "mask", Group::theta, 2 * cfg.hidden, cfg.mask_hidden, 1);
  if (cfg.task == Task::node) {
    const std::size_t in = 2 * cfg.time_length * cfg.hidden;
    detail::mlp_params(p, rng, "f_I", Group::f_I, in, cfg.hidden, cfg.num_classes);
    detail::mlp_params(p, rng, "f_V", Group::f_V, in, cfg.hidden, cfg.num_classes);
  }
  return p;
}

// Snapshot graphs stacked into one block-diagonal graph over T*N nodes
// (index t*N + v), with self loops, ready for row gather/scatter.
template <typename T>
struct GraphInput {
  std::size_t time_length = 0;
  std::size_t num_nodes = 0;
  ad::Tensor<T> features;  // (T*N) x F
  std::vector<std::size_t> src, dst;
  ad::Tensor<T> inv_in_degree;  // (T*N) x 1
};

// Neighborhoods over timestamps [0, t_end). With `complement`, every t keeps
// its own edges plus those of the last timestamp (virtual past structure).
template <typename T>
GraphInput<T> build_graph_input(const DynamicGraph& g, std::size_t t_end, bool complement = false) {
  if (t_end == 0 || t_end > g.num_timestamps())
    throw ValidationError("graph input window [0," + std::to_string(t_end) + ") outside [0," +
                          std::to_string(g.num_timestamps()) + ")");
  const std::size_t n = g.num_nodes();
  const std::size_t f = g.feature_dim();
  GraphInput<T> in;
  in.time_length = t_end;
  in.num_nodes = n;
  in.features = ad::Tensor<T>({t_end * n, f});
  for (std::size_t t = 0; t < t_end; ++t) {
    const auto& x = g.features_at(t);
    for (std::size_t i = 0; i < n * f; ++i) in.features[t * n * f + i] = static_cast<T>(x[i]);
  }
  std::vector<std::size_t> deg(t_end * n, 0);
  auto add = [&](std::size_t t, std::size_t u, std::size_t v) {
    in.src.push_back(t * n + u);
    in.dst.push_back(t * n + v);
    ++deg[t * n + v];
  };
  const EdgeList* last = complement ? &g.snapshot(t_end - 1) : nullptr;
  for (std::size_t t = 0; t < t_end; ++t) {
    for (std::size_t v = 0; v < n; ++v) add(t, v, v);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    auto add_edge = [&](const Edge& e) {
      if (e.u == e.v) return;
      if (!seen.insert({e.u, e.v}).second) return;
      add(t, e.u, e.v);
      if (!g.directed()) add(t, e.v, e.u);
    };
    for (const auto& e : g.snapshot(t).edges) add_edge(e);
    if (last && t + 1 < t_end)
      for (const auto& e : last->edges) add_edge(e);
  }
  in.inv_in_degree = ad::Tensor<T>({t_end * n, 1});
  for (std::size_t i = 0; i < deg.size(); ++i) in.inv_in_degree[i] = T(1) / static_cast<T>(deg[i]);
  return in;
}

template <typename T>
ad::Var<T> linear(const ad::Var<T>& x, const ad::Var<T>& w, const ad::Var<T>& b) {
  return ad::matmul(x, w) + b;
}

// Two-layer perceptron with a rectifier between layers.
template <typename T>
ad::Var<T> mlp2(const ad::Var<T>& x, const BoundParams<T>& p, const std::string& prefix) {
  auto h = ad::relu(linear(x, p[prefix + ".W1"], p[prefix + ".b1"]));
  return linear(h, p[prefix + ".W2"], p[prefix + ".b2"]);
}

// One message-passing layer over the stacked graph.
template <typename T>
ad::Var<T> gnn_layer(const ad::Var<T>& x, const GraphInput<T>& gi, const BoundParams<T>& p, std::size_t layer,
                     Aggregator agg) {
  auto& tape = x.tape();
  const std::string pre = "gnn" + std::to_string(layer);
  const std::size_t rows = gi.time_length * gi.num_nodes;
  auto wh = ad::matmul(x, p[pre + ".W"]);
  auto msg = ad::gather_rows(wh, gi.src);
  if (agg == Aggregator::attention) {
    auto s_src = ad::gather_rows(ad::matmul(wh, p[pre + ".a_src"]), gi.src);
    auto s_dst = ad::gather_rows(ad::matmul(wh, p[pre + ".a_dst"]), gi.dst);
    auto e = ad::leaky_relu(s_src + s_dst, T(0.2));
    // Softmax over each destination's incoming edges, shifted by a constant max.
    ad::Tensor<T> mx({rows, 1}, -std::numeric_limits<T>::infinity());
    for (std::size_t i = 0; i < gi.dst.size(); ++i) mx[gi.dst[i]] = std::max(mx[gi.dst[i]], e.value()[i]);
    auto shift = ad::gather_rows(tape.constant(std::move(mx)), gi.dst);
    auto ex = ad::exp(e - shift);
    auto den = ad::gather_rows(ad::scatter_add_rows(ex, gi.dst, rows), gi.dst);
    msg = msg * (ex / den);
  }
  auto out = ad::scatter_add_rows(msg, gi.dst, rows);
  if (agg == Aggregator::mean) out = out * tape.constant(gi.inv_in_degree);
  return out + p[pre + ".b"];
}

// H: T x N x d trajectory embeddings.
template <typename T>
ad::Var<T> message_passing(ad::Tape<T>& tape, const GraphInput<T>& gi, const BoundParams<T>& p,
                           const ModelConfig& cfg) {
  if (gi.features.shape[1] != cfg.in_dim)
    throw ShapeError("message_passing: feature dim " + std::to_string(gi.features.shape[1]) +
                     " but model expects " + std::to_string(cfg.in_dim));
  auto h = tape.constant(gi.features);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    h = gnn_layer(h, gi, p, l, cfg.aggregator);
    if (l + 1 < cfg.layers) h = ad::relu(h);
  }
  return ad::reshape(h, {gi.time_length, gi.num_nodes, cfg.hidden});
}

template <typename T>
struct ComplexVar {
  ad::Var<T> re, im;
};

template <typename T>
struct Masks {
  ad::Var<T> logit;  // K x N x 1, conjugate-symmetrized
  ad::Var<T> inv, var;
};

// Frequency index paired with k under conjugation: (K - k) mod K.
inline std::vector<std::size_t> conjugate_index(std::size_t k) {
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = (k - i) % k;
  return idx;
}

template <typename T>
Masks<T> compute_masks(const ComplexVar<T>& z, const BoundParams<T>& p, const ModelConfig& cfg) {
  auto& tape = z.re.tape();
  const std::size_t k = z.re.shape()[0], n = z.re.shape()[1], d = z.re.shape()[2];
  if (cfg.no_mask) {
    auto half = tape.constant(ad::Tensor<T>({k, n, 1}, T(0.5)));
    return {tape.constant(ad::Tensor<T>({k, n, 1})), half, half};
  }
  auto x = ad::reshape(ad::concat(std::vector<ad::Var<T>>{z.re, z.im}), {k * n, 2 * d});
  auto m = ad::reshape(mlp2(x, p, "mask"), {k, n});
  m = ad::scale(ad::gather_rows(m, conjugate_index(k)) + m, T(0.5));
  m = ad::reshape(m, {k, n, 1});
  const T inv_tau = T(1) / static_cast<T>(cfg.tau);
  return {m, ad::sigmoid(ad::scale(m, inv_tau)), ad::sigmoid(ad::scale(m, -inv_tau))};
}

// Rescales amplitudes by `mask`, keeping phases.
template <typename T>
ComplexVar<T> filter_spectrum(const ComplexVar<T>& z, const ad::Var<T>& mask) {
  auto amp = ad::sqrt(ad::square(z.re) + ad::square(z.im));
  auto phase = ad::atan2(z.im, z.re);
  auto scaled = mask * amp;
  return {scaled * ad::cos(phase), scaled * ad::sin(phase)};
}

// K x N x d spectrum -> N x 2Kd rows (per frequency: real dims then imaginary dims).
template <typename T>
ad::Var<T> flatten_spectrum(const ComplexVar<T>& z) {
  const std::size_t k = z.re.shape()[0], n = z.re.shape()[1], d = z.re.shape()[2];
  auto both = ad::swap_axes01(ad::concat(std::vector<ad::Var<T>>{z.re, z.im}));
  return ad::reshape(both, {n, 2 * k * d});
}

template <typename T>
ad::Var<T> classify_nodes(const ComplexVar<T>& z, const BoundParams<T>& p, const std::string& clf) {
  auto x = flatten_spectrum(z);
  const auto& w1 = p[clf + ".W1"];
  if (x.shape()[1] != w1.shape()[0])
    throw ShapeError("classify_nodes: input dim " + std::to_string(x.shape()[1]) + " but " + clf + " expects " +
                     std::to_string(w1.shape()[0]));
  return mlp2(x, p, clf);
}

// Inner-product logits of node pairs at time t of a T x N x d trajectory.
template <typename T>
ad::Var<T> decode_links(const ad::Var<T>& h, const EdgeList& pairs, std::size_t t) {
  const std::size_t tl = h.shape()[0], n = h.shape()[1], d = h.shape()[2];
  if (t >= tl) throw ValidationError("decode_links: t=" + std::to_string(t) + " outside trajectory");
  std::vector<std::size_t> us, vs;
  for (const auto& e : pairs.edges) {
    if (e.u >= n || e.v >= n)
      throw ValidationError("decode_links: pair (" + std::to_string(e.u) + "," + std::to_string(e.v) +
                            ") out of range");
    us.push_back(e.u);
    vs.push_back(e.v);
  }
  auto ht = ad::reshape(ad::slice(h, 0, t, t + 1), {n, d});
  return ad::sum(ad::gather_rows(ht, us) * ad::gather_rows(ht, vs), 1);
}

// Everything one forward pass produces up to the branch spectrums.
template <typename T>
struct ForwardState {
  ad::Var<T> h;
  ComplexVar<T> z;
  Masks<T> masks;
  ComplexVar<T> z_inv, z_var;
};

template <typename T>
ForwardState<T> forward(ad::Tape<T>& tape, const GraphInput<T>& gi, const BoundParams<T>& p, const ModelConfig& cfg) {
  ForwardState<T> s;
  s.h = message_passing(tape, gi, p, cfg);
  auto [re, im] = spectral::dft(s.h);
  s.z = {re, im};
  s.masks = compute_masks(s.z, p, cfg);
  s.z_inv = filter_spectrum(s.z, s.masks.inv);
  s.z_var = filter_spectrum(s.z, s.masks.var);
  return s;
}

}  // namespace sild
