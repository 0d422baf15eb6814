#pragma once

// Synthetic distribution-shift benchmarks.
//
// Node-Synthetic: each snapshot is the union of an Erdos-Renyi noise graph and
// two stochastic block models whose intra-class link probabilities oscillate
// in time. The high-frequency SBM follows the class exactly; the
// low-frequency one follows it with probability q (q = 0 on test nodes).
//
// Link-Synthetic: an evolving SBM base graph whose node features are extended
// with embeddings X2^t fitted to a corrupted copy of the next snapshot.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sild/errors.hpp"
#include "sild/graph.hpp"
#include "sild/metrics.hpp"
#include "sild/rng.hpp"

namespace sild::synth {

// S * (2 + cos(2 pi f t)).
inline double link_prob_schedule(double t, double f, double s) {
  if (s < 0.0 || 3.0 * s > 1.0) throw ConfigError("link_prob_schedule: amplitude S must satisfy 0 <= 3S <= 1");
  return s * (2.0 + std::cos(2.0 * std::numbers::pi * f * t));
}

namespace detail {

inline void check_prob(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(what) + " must lie in [0,1]");
}

// Visits j in (i, n) with P(accept j) = prob(j), via geometric skips at rate
// p_max and thinning.
template <class Prob, class Emit>
void sample_row(Rng& rng, std::size_t i, std::size_t n, double p_max, Prob prob, Emit emit) {
  if (p_max <= 0.0) return;
  std::size_t j = i;
  while (true) {
    const std::uint64_t skip = rng.geometric(p_max);
    if (skip >= n - j - 1) return;
    j += skip + 1;
    const double p = prob(j);
    if (p >= p_max || rng.uniform() * p_max < p) emit(j);
  }
}

inline void emit_sorted(EdgeList& out) {
  std::sort(out.edges.begin(), out.edges.end());
  out.edges.erase(std::unique(out.edges.begin(), out.edges.end()), out.edges.end());
}

}  // namespace detail

// Undirected G(n, p).
inline EdgeList erdos_renyi(std::size_t n, double p, std::uint64_t seed) {
  detail::check_prob(p, "erdos_renyi: p");
  Rng rng(seed);
  EdgeList out;
  for (std::size_t i = 0; i + 1 < n; ++i)
    detail::sample_row(rng, i, n, p, [p](std::size_t) { return p; },
                       [&](std::size_t j) { out.edges.push_back({static_cast<NodeId>(i), static_cast<NodeId>(j)}); });
  return out;
}

// Undirected SBM with per-node intra-class propensities: a same-class pair
// (u, v) links with (p_u + p_v) / 2, any other pair with p_out.
inline EdgeList sbm_snapshot_nodes(const std::vector<int>& labels, const std::vector<double>& node_p, double p_out,
                                   std::uint64_t seed) {
  if (labels.size() != node_p.size()) throw ValidationError("sbm_snapshot: one propensity per node required");
  detail::check_prob(p_out, "sbm_snapshot: p_out");
  for (double p : node_p) detail::check_prob(p, "sbm_snapshot: p_in");
  const std::size_t n = labels.size();
  int classes = 0;
  for (int c : labels) classes = std::max(classes, c + 1);
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(classes));
  for (std::size_t v = 0; v < n; ++v) members[static_cast<std::size_t>(labels[v])].push_back(v);

  Rng rng(seed);
  EdgeList out;
  auto push = [&](std::size_t a, std::size_t b) {
    out.edges.push_back({static_cast<NodeId>(std::min(a, b)), static_cast<NodeId>(std::max(a, b))});
  };
  for (const auto& m : members) {
    double p_max = 0.0;
    for (auto v : m) p_max = std::max(p_max, node_p[v]);
    for (std::size_t i = 0; i + 1 < m.size(); ++i)
      detail::sample_row(
          rng, i, m.size(), p_max, [&](std::size_t j) { return 0.5 * (node_p[m[i]] + node_p[m[j]]); },
          [&](std::size_t j) { push(m[i], m[j]); });
  }
  // Cross-class pairs: sample every pair at p_out and keep the cross-class ones.
  for (std::size_t i = 0; i + 1 < n; ++i)
    detail::sample_row(rng, i, n, p_out, [&](std::size_t) { return p_out; },
                       [&](std::size_t j) {
                         if (labels[i] != labels[j]) push(i, j);
                       });
  detail::emit_sorted(out);
  return out;
}

inline EdgeList sbm_snapshot(const std::vector<int>& labels, const std::vector<double>& p_in, double p_out,
                             std::uint64_t seed) {
  std::vector<double> node_p(labels.size());
  for (std::size_t v = 0; v < labels.size(); ++v) {
    if (labels[v] < 0 || static_cast<std::size_t>(labels[v]) >= p_in.size())
      throw ValidationError("sbm_snapshot: label outside p_in table");
    node_p[v] = p_in[static_cast<std::size_t>(labels[v])];
  }
  return sbm_snapshot_nodes(labels, node_p, p_out, seed);
}

struct NodeSynthConfig {
  std::size_t num_nodes = 500;
  std::size_t num_timestamps = 50;
  std::size_t num_classes = 5;
  std::vector<double> f_low{0.02, 0.04, 0.08, 0.10, 0.12};
  std::vector<double> f_high{0.22, 0.24, 0.28, 0.30, 0.32};
  double shift = 0.8;  // q on train/val nodes
  double p_out = 1e-3;
  double s1 = 1e-2;  // low-frequency (variant) amplitude
  double s2 = 5e-3;  // high-frequency (invariant) amplitude
  double p_noise = 1e-3;
  std::size_t feature_dim = 4;
  std::array<double, 3> node_fractions{0.6, 0.2, 0.2};
  std::uint64_t seed = 0;
};

// Per-node latent assignment, exposed for generator tests.
struct NodeSynthLatents {
  std::vector<int> classes;
  std::vector<int> split;  // 0 train, 1 val, 2 test
  std::vector<std::size_t> inv_freq, var_freq;  // indices into f_high / f_low
};

inline void validate(const NodeSynthConfig& c) {
  // The node split is stored as label timestamps 0/1/2.
  if (c.num_nodes < 3 || c.num_timestamps < 3) throw ConfigError("node synthetic: need N >= 3 and T >= 3");
  if (c.num_classes < 2 || c.f_low.size() != c.num_classes || c.f_high.size() != c.num_classes)
    throw ConfigError("node synthetic: f_low and f_high need one frequency per class");
  for (double f : c.f_low)
    if (!(f >= 0.0 && f < 0.5)) throw ConfigError("node synthetic: frequencies must lie in [0, 0.5)");
  for (double f : c.f_high)
    if (!(f >= 0.0 && f < 0.5)) throw ConfigError("node synthetic: frequencies must lie in [0, 0.5)");
  detail::check_prob(c.shift, "node synthetic: shift");
  detail::check_prob(c.p_out, "node synthetic: p_out");
  detail::check_prob(c.p_noise, "node synthetic: p_noise");
  if (3.0 * c.s1 > 1.0 || 3.0 * c.s2 > 1.0 || c.s1 < 0.0 || c.s2 < 0.0)
    throw ConfigError("node synthetic: amplitudes must satisfy 0 <= 3S <= 1");
  if (c.feature_dim == 0) throw ConfigError("node synthetic: feature_dim must be positive");
  double sum = 0.0;
  for (double x : c.node_fractions) {
    if (!(x > 0.0)) throw ConfigError("node synthetic: split fractions must be positive");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("node synthetic: split fractions must sum to 1");
}

inline NodeSynthLatents node_synth_latents(const NodeSynthConfig& c) {
  validate(c);
  const std::size_t n = c.num_nodes;
  Rng rng(derive_seed(c.seed, 0x1a7e));
  NodeSynthLatents z;
  z.classes.resize(n);
  z.split.resize(n);
  z.inv_freq.resize(n);
  z.var_freq.resize(n);
  for (std::size_t v = 0; v < n; ++v) z.classes[v] = static_cast<int>(rng.below(c.num_classes));
  // Random node order decides the split.
  const auto perm = rng.sample_without_replacement(n, n);
  const auto n_train = static_cast<std::size_t>(std::llround(c.node_fractions[0] * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(c.node_fractions[1] * static_cast<double>(n)));
  for (std::size_t i = 0; i < n; ++i) z.split[perm[i]] = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
  for (std::size_t v = 0; v < n; ++v) {
    const auto cls = static_cast<std::size_t>(z.classes[v]);
    z.inv_freq[v] = cls;
    const double q = z.split[v] == 2 ? 0.0 : c.shift;
    // Two draws per node whatever the branch, so q does not shift the stream.
    const bool aligned = rng.uniform() < q;
    const auto other = static_cast<std::size_t>(rng.below(c.num_classes));
    z.var_freq[v] = aligned ? cls : other;
  }
  return z;
}

inline DynamicGraph gen_node_synthetic(const NodeSynthConfig& c, NodeSynthLatents* latents_out = nullptr) {
  const auto z = node_synth_latents(c);
  const std::size_t n = c.num_nodes;
  std::vector<EdgeList> snaps;
  std::vector<double> p_inv(n), p_var(n);
  for (std::size_t t = 0; t < c.num_timestamps; ++t) {
    for (std::size_t v = 0; v < n; ++v) {
      p_inv[v] = link_prob_schedule(static_cast<double>(t), c.f_high[z.inv_freq[v]], c.s2);
      p_var[v] = link_prob_schedule(static_cast<double>(t), c.f_low[z.var_freq[v]], c.s1);
    }
    EdgeList e = erdos_renyi(n, c.p_noise, derive_seed(c.seed, t, 1));
    const auto gi = sbm_snapshot_nodes(z.classes, p_inv, c.p_out, derive_seed(c.seed, t, 2));
    const auto gv = sbm_snapshot_nodes(z.classes, p_var, c.p_out, derive_seed(c.seed, t, 3));
    e.edges.insert(e.edges.end(), gi.edges.begin(), gi.edges.end());
    e.edges.insert(e.edges.end(), gv.edges.begin(), gv.edges.end());
    detail::emit_sorted(e);
    snaps.push_back(std::move(e));
  }
  Rng frng(derive_seed(c.seed, 0xfea7));
  std::vector<double> x(n * c.feature_dim);
  for (auto& v : x) v = frng.normal();

  NodeLabels labels;
  labels.num_classes = c.num_classes;
  labels.classes = z.classes;
  labels.timestamps = z.split;  // split index doubles as label timestamp
  if (latents_out) *latents_out = z;
  return DynamicGraph(n, c.num_timestamps, false, std::move(snaps), c.feature_dim, false, {std::move(x)},
                      std::move(labels), std::array<std::size_t, 3>{1, 1, 1});
}

inline nlohmann::ordered_json to_json(const NodeSynthConfig& c) {
  return {{"generator", "node-synthetic"},
          {"num_nodes", c.num_nodes},
          {"num_timestamps", c.num_timestamps},
          {"num_classes", c.num_classes},
          {"f_low", c.f_low},
          {"f_high", c.f_high},
          {"shift", c.shift},
          {"p_out", c.p_out},
          {"s1", c.s1},
          {"s2", c.s2},
          {"p_noise", c.p_noise},
          {"feature_dim", c.feature_dim},
          {"node_fractions", c.node_fractions},
          {"seed", c.seed}};
}

struct LinkSynthConfig {
  // Synthetic base graph (used when no base dataset is supplied).
  std::size_t num_nodes = 300;
  std::size_t num_timestamps = 16;
  std::size_t communities = 4;
  double p_in = 0.05;
  double p_out = 0.005;
  double persistence = 0.5;  // P(an edge of E^t reappears at t+1)
  std::size_t base_feature_dim = 8;
  double base_feature_noise = 1.0;
  // Shift mechanism.
  double shift = 0.8;       // p-bar on train/val targets
  double test_shift = 0.0;  // p-bar on test targets
  double sigma = 0.1;
  std::array<std::size_t, 3> split{10, 1, 5};
  std::size_t spurious_dim = 8;
  std::size_t inner_steps = 300;
  double inner_lr = 0.05;
  std::uint64_t seed = 0;
};

inline void validate(const LinkSynthConfig& c) {
  if (c.num_nodes < 3 || c.num_timestamps < 2 || c.communities == 0)
    throw ConfigError("link synthetic: need N >= 3, T >= 2 and at least one community");
  detail::check_prob(c.p_in, "link synthetic: p_in");
  detail::check_prob(c.p_out, "link synthetic: p_out");
  detail::check_prob(c.persistence, "link synthetic: persistence");
  detail::check_prob(c.shift, "link synthetic: shift");
  detail::check_prob(c.test_shift, "link synthetic: test_shift");
  if (!(c.sigma >= 0.0)) throw ConfigError("link synthetic: sigma must be non-negative");
  if (c.spurious_dim == 0 || c.inner_steps == 0 || !(c.inner_lr > 0.0))
    throw ConfigError("link synthetic: spurious_dim, inner_steps and inner_lr must be positive");
}

// p(t) = clip(p_bar + sigma cos t, 0, 1).
inline double link_shift_schedule(double t, double p_bar, double sigma) {
  return std::clamp(p_bar + sigma * std::cos(t), 0.0, 1.0);
}

// Evolving SBM: fixed communities, edges persist with some probability and
// fresh SBM edges are added each step. Features: noisy community indicators.
inline DynamicGraph synthetic_link_base(const LinkSynthConfig& c) {
  validate(c);
  const std::size_t n = c.num_nodes;
  Rng rng(derive_seed(c.seed, 0xba5e));
  std::vector<int> comm(n);
  for (auto& x : comm) x = static_cast<int>(rng.below(c.communities));
  std::vector<EdgeList> snaps;
  for (std::size_t t = 0; t < c.num_timestamps; ++t) {
    EdgeList e = sbm_snapshot(comm, std::vector<double>(c.communities, c.p_in), c.p_out, derive_seed(c.seed, t, 11));
    if (t > 0) {
      Rng keep(derive_seed(c.seed, t, 12));
      for (const auto& old : snaps.back().edges)
        if (keep.bernoulli(c.persistence)) e.edges.push_back(old);
    }
    detail::emit_sorted(e);
    snaps.push_back(std::move(e));
  }
  const std::size_t f = c.base_feature_dim;
  std::vector<double> x(n * f);
  Rng frng(derive_seed(c.seed, 0xfea8));
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t j = 0; j < f; ++j)
      x[v * f + j] = (j % c.communities == static_cast<std::size_t>(comm[v]) ? 1.0 : 0.0) +
                     c.base_feature_noise * frng.normal();
  return DynamicGraph(n, c.num_timestamps, false, std::move(snaps), f, false, {std::move(x)});
}

struct Reconstruction {
  std::vector<double> x;  // N x d
  double auc = 0.0;       // on the fitted pairs
};

// Fits X (N x d) by gradient descent on mean BCE of <x_u, x_v> logits.
inline Reconstruction fit_embeddings(std::size_t n, std::size_t d, const std::vector<Edge>& pairs,
                                     const std::vector<int>& targets, std::size_t steps, double lr,
                                     std::uint64_t seed) {
  Rng rng(seed);
  Reconstruction r;
  r.x.resize(n * d);
  for (auto& v : r.x) v = 0.1 * rng.normal();
  if (pairs.empty()) return r;
  std::vector<double> grad(n * d);
  const double inv = 1.0 / static_cast<double>(pairs.size());
  auto logit = [&](const Edge& e) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += r.x[e.u * d + k] * r.x[e.v * d + k];
    return s;
  };
  for (std::size_t it = 0; it < steps; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto& e = pairs[i];
      const double s = logit(e);
      const double gl = (1.0 / (1.0 + std::exp(-s)) - targets[i]) * inv;
      for (std::size_t k = 0; k < d; ++k) {
        grad[e.u * d + k] += gl * r.x[e.v * d + k];
        grad[e.v * d + k] += gl * r.x[e.u * d + k];
      }
    }
    for (std::size_t i = 0; i < r.x.size(); ++i) r.x[i] -= lr * static_cast<double>(n) * grad[i];
    for (double v : r.x)
      if (!std::isfinite(v)) throw NumericError("link synthetic: embedding fit diverged");
  }
  std::vector<double> scores;
  for (const auto& e : pairs) scores.push_back(logit(e));
  bool both = std::find(targets.begin(), targets.end(), 0) != targets.end() &&
              std::find(targets.begin(), targets.end(), 1) != targets.end();
  r.auc = both ? auc(scores, targets) : 1.0;
  return r;
}

struct LinkSynthResult {
  DynamicGraph graph;
  std::vector<double> schedule;   // p(t) per t (t = 0..T-2)
  std::vector<double> inner_auc;  // reconstruction AUC per t
};

// Extends the base features with X2^t fitted to the sampled links of t+1.
inline LinkSynthResult gen_link_synthetic(const DynamicGraph& base, const LinkSynthConfig& c) {
  validate(c);
  const std::size_t n = base.num_nodes(), tl = base.num_timestamps(), d2 = c.spurious_dim;
  if (tl < 2) throw ValidationError("link synthetic: base graph needs at least 2 snapshots");
  const std::size_t test_begin = c.split[0] + c.split[1];
  const std::size_t f1 = base.feature_dim(), f = f1 + d2;
  LinkSynthResult out;
  std::vector<std::vector<double>> feats;
  for (std::size_t t = 0; t < tl; ++t) {
    std::vector<double> x2(n * d2, 0.0);
    if (t + 1 < tl) {
      const double p_bar = t + 1 >= test_begin ? c.test_shift : c.shift;
      const double p = link_shift_schedule(static_cast<double>(t), p_bar, c.sigma);
      out.schedule.push_back(p);
      const auto& next = base.snapshot(t + 1).edges;
      const std::size_t m = next.size();
      const auto n_pos = static_cast<std::size_t>(std::llround(p * static_cast<double>(m)));
      Rng rng(derive_seed(c.seed, t, 21));
      std::vector<Edge> pairs;
      std::vector<int> y;
      for (auto i : rng.sample_without_replacement(m, n_pos)) pairs.push_back(next[i]);
      // Corrupted targets: uniform non-edges labeled as links, plus an equal
      // number of true zeros so the fit is not one-sided.
      const auto fake = negative_sample(base, t + 1, (m - n_pos) + m, derive_seed(c.seed, t, 22));
      for (std::size_t i = 0; i < m - n_pos; ++i) pairs.push_back(fake.edges[i]);
      y.assign(pairs.size(), 1);
      for (std::size_t i = m - n_pos; i < fake.size(); ++i) {
        pairs.push_back(fake.edges[i]);
        y.push_back(0);
      }
      auto rec = fit_embeddings(n, d2, pairs, y, c.inner_steps, c.inner_lr, derive_seed(c.seed, t, 23));
      out.inner_auc.push_back(rec.auc);
      x2 = std::move(rec.x);
    }
    const auto& x1 = base.features_at(t);
    std::vector<double> x(n * f);
    for (std::size_t v = 0; v < n; ++v) {
      std::copy_n(x1.begin() + static_cast<std::ptrdiff_t>(v * f1), f1, x.begin() + static_cast<std::ptrdiff_t>(v * f));
      std::copy_n(x2.begin() + static_cast<std::ptrdiff_t>(v * d2), d2,
                  x.begin() + static_cast<std::ptrdiff_t>(v * f + f1));
    }
    feats.push_back(std::move(x));
  }
  out.graph = DynamicGraph(n, tl, base.directed(), base.snapshots(), f, true, std::move(feats), base.labels(),
                           base.split_counts());
  return out;
}

inline nlohmann::ordered_json to_json(const LinkSynthConfig& c) {
  return {{"generator", "link-synthetic"},
          {"num_nodes", c.num_nodes},
          {"num_timestamps", c.num_timestamps},
          {"communities", c.communities},
          {"p_in", c.p_in},
          {"p_out", c.p_out},
          {"persistence", c.persistence},
          {"base_feature_dim", c.base_feature_dim},
          {"base_feature_noise", c.base_feature_noise},
          {"shift", c.shift},
          {"test_shift", c.test_shift},
          {"sigma", c.sigma},
          {"split", c.split},
          {"spurious_dim", c.spurious_dim},
          {"inner_steps", c.inner_steps},
          {"inner_lr", c.inner_lr},
          {"seed", c.seed}};
}

}  // namespace sild::synth
