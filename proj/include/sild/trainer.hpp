#pragma once

// Full-batch training loop with best-validation checkpoint selection.
//
// Node task: one forward over all T snapshots per epoch; nodes are split by
// label timestamp. Link task: the snapshot at time s is predicted from a
// forward over the history [0, s), decoding at its last timestamp. Training
// targets are the snapshots 1..train_end-1; validation and test targets are
// the snapshots in their ranges, scored against fixed negatives.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "sild/autograd.hpp"
#include "sild/errors.hpp"
#include "sild/graph.hpp"
#include "sild/metrics.hpp"
#include "sild/model.hpp"
#include "sild/objective.hpp"
#include "sild/optim.hpp"

namespace sild {

struct TrainConfig {
  Task task = Task::node;
  std::size_t hidden = 16;
  std::size_t layers = 2;
  std::size_t mask_hidden = 0;  // 0 means "same as hidden"
  Aggregator aggregator = Aggregator::attention;
  double learning_rate = 1e-2;
  double weight_decay = 5e-7;
  std::size_t epochs = 50;
  double lambda = 1e-2;
  double tau = 1.0;
  std::size_t samples = 100;
  std::uint64_t seed = 0;
  std::array<std::size_t, 3> split{10, 1, 5};
  // Seed for validation/test negatives; shared by every run on a dataset.
  std::uint64_t eval_negative_seed = 20240101;
  bool no_invariance = false;
  bool no_mask = false;
  bool complement_trajectories = false;
  bool variant_backprop_theta = false;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double loss_inv_task = 0.0;
  double loss_var_task = 0.0;
  double loss_invariance = 0.0;
  double train_metric = 0.0;
  double val_metric = 0.0;
  double test_metric = 0.0;
};

struct MetricsReport {
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  double val_metric = 0.0;
  double test_metric = 0.0;
  double wallclock_s = 0.0;
};

template <typename T>
struct TrainResult {
  ModelParams<T> params;
  MetricsReport report;
};

inline ModelConfig model_config(const TrainConfig& cfg, const DynamicGraph& g) {
  if (cfg.complement_trajectories && cfg.task == Task::link)
    throw ConfigError("complement_trajectories is only defined for node classification");
  ModelConfig m;
  m.task = cfg.task;
  m.in_dim = g.feature_dim();
  m.hidden = cfg.hidden;
  m.layers = cfg.layers;
  m.mask_hidden = cfg.mask_hidden == 0 ? cfg.hidden : cfg.mask_hidden;
  m.num_classes = cfg.task == Task::node ? g.num_classes() : 0;
  m.time_length = g.num_timestamps();
  m.aggregator = cfg.aggregator;
  m.tau = cfg.tau;
  m.no_mask = cfg.no_mask;
  return m;
}

inline ObjectiveConfig objective_config(const TrainConfig& cfg) {
  return {cfg.no_invariance ? 0.0 : cfg.lambda, cfg.samples, cfg.variant_backprop_theta};
}

inline void validate(const TrainConfig& cfg) {
  if (cfg.hidden == 0 || cfg.layers == 0 || cfg.epochs == 0 || cfg.samples == 0)
    throw ConfigError("hidden, layers, epochs and samples must be positive");
  if (!(cfg.learning_rate > 0.0) || !(cfg.weight_decay >= 0.0) || !(cfg.tau > 0.0))
    throw ConfigError("learning_rate and tau must be positive, weight_decay non-negative");
  check_lambda(cfg.lambda);
}

namespace detail {

inline bool is_mask_param(const std::string& name) { return name.rfind("mask.", 0) == 0; }

template <typename T>
bool finite(T x) {
  return std::isfinite(static_cast<double>(x));
}

struct NodeSplit {
  std::vector<std::size_t> nodes;
  std::vector<int> labels;
};

inline NodeSplit node_split(const DynamicGraph& g, const std::vector<std::size_t>& nodes) {
  NodeSplit s{nodes, {}};
  for (auto v : nodes) s.labels.push_back(g.labels()->classes[v]);
  return s;
}

inline std::array<std::size_t, 3> node_split_counts(const DynamicGraph& g, const TrainConfig& cfg) {
  return g.split_counts() ? *g.split_counts() : cfg.split;
}

template <typename T>
std::vector<T> gather_scores(const ad::Tensor<T>& logits, const std::vector<std::size_t>& rows) {
  const std::size_t c = logits.shape[1];
  std::vector<T> out;
  out.reserve(rows.size() * c);
  for (auto r : rows)
    out.insert(out.end(), logits.data.begin() + static_cast<std::ptrdiff_t>(r * c),
               logits.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * c));
  return out;
}

template <typename T>
LinkBatch<T> link_batch(const DynamicGraph& g, std::size_t s, std::uint64_t neg_seed) {
  LinkBatch<T> b;
  const auto& pos = g.snapshot(s);
  b.pairs.directed = g.directed();
  b.pairs.edges = pos.edges;
  b.targets.assign(pos.size(), T(1));
  const auto neg = negative_sample(g, s, pos.size(), neg_seed);
  b.pairs.edges.insert(b.pairs.edges.end(), neg.edges.begin(), neg.edges.end());
  b.targets.resize(b.pairs.size(), T(0));
  return b;
}

// Adam over every parameter; mask weights are held fixed when masks are ablated.
template <typename T>
void update(ModelParams<T>& params, const ad::Tape<T>& tape, const BoundParams<T>& bound, AdamState<T>& st,
            const TrainConfig& cfg) {
  std::vector<ad::Tensor<T>*> ptrs;
  std::vector<ad::Tensor<T>> grads;
  std::vector<bool> skip;
  for (std::size_t i = 0; i < params.list.size(); ++i) {
    ptrs.push_back(&params.list[i].value);
    grads.push_back(tape.grad(bound.vars[i]));
    skip.push_back(cfg.no_mask && is_mask_param(params.list[i].name));
  }
  adam_step(ptrs, grads, st, AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay}, skip);
}

}  // namespace detail

// Node-task accuracy of the invariant branch on `nodes`. `label_of(v)` is the
// only route to labels, so callers can audit which labels are read.
template <typename T, class LabelFn>
double evaluate_nodes(const ModelParams<T>& params, const ModelConfig& mcfg, const GraphInput<T>& gi,
                      const std::vector<std::size_t>& nodes, LabelFn&& label_of) {
  if (nodes.empty()) throw ValidationError("evaluate: empty split");
  ad::Tape<T> tape;
  auto bound = bind(tape, params, {Group::theta, Group::f_I, Group::f_V});
  auto st = forward(tape, gi, bound, mcfg);
  auto logits = classify_nodes(st.z_inv, bound, "f_I");
  std::vector<int> labels;
  for (auto v : nodes) labels.push_back(label_of(v));
  return accuracy(detail::gather_scores(logits.value(), nodes), mcfg.num_classes, labels);
}

// Mean per-snapshot AUC of the invariant branch over targets in `range`.
template <typename T>
double evaluate_links(const ModelParams<T>& params, const ModelConfig& mcfg, const DynamicGraph& g, TimeRange range,
                      std::uint64_t neg_seed) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t s = std::max<std::size_t>(range.begin, 1); s < range.end; ++s) {
    if (g.snapshot(s).empty()) continue;
    const auto batch = detail::link_batch<T>(g, s, neg_seed);
    ad::Tape<T> tape;
    auto bound = bind(tape, params, {Group::theta, Group::f_I, Group::f_V});
    const auto gi = build_graph_input<T>(g, s);
    auto st = forward(tape, gi, bound, mcfg);
    auto h = spectral::idft_real(st.z_inv.re, st.z_inv.im);
    auto logits = decode_links(h, batch.pairs, s - 1);
    std::vector<int> y(batch.targets.begin(), batch.targets.end());
    total += auc(logits.value().data, y);
    ++count;
  }
  if (count == 0) throw ValidationError("evaluate: no target snapshots with edges in range");
  return total / static_cast<double>(count);
}

template <typename T>
TrainResult<T> train_node(const DynamicGraph& g, const TrainConfig& cfg) {
  if (!g.labels()) throw ValidationError("node task needs labels");
  const auto t0 = std::chrono::steady_clock::now();
  const auto split = chronological_split(g, detail::node_split_counts(g, cfg));
  const auto tr = detail::node_split(g, split.train_nodes);
  const auto va = detail::node_split(g, split.val_nodes);
  const auto te = detail::node_split(g, split.test_nodes);
  if (tr.nodes.empty() || va.nodes.empty() || te.nodes.empty())
    throw ValidationError("node task: train, val and test splits must all be non-empty");

  const auto mcfg = model_config(cfg, g);
  const auto ocfg = objective_config(cfg);
  const auto gi = build_graph_input<T>(g, g.num_timestamps(), cfg.complement_trajectories);
  TrainResult<T> res{init_params<T>(mcfg, cfg.seed), {}};
  ModelParams<T> params = res.params;
  AdamState<T> adam;
  bool have_best = false;

  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    ad::Tape<T> tape;
    auto bound = bind(tape, params);
    auto st = forward(tape, gi, bound, mcfg);
    auto b = node_objective(st, bound, tr.nodes, tr.labels, ocfg, derive_seed(cfg.seed, 0x7e57, e));
    const T loss = b.total.item();
    if (!detail::finite(loss)) throw DivergenceError(e, "non-finite training loss");

    const auto& logits = b.logits.value();
    EpochLog log{e,
                 static_cast<double>(loss),
                 static_cast<double>(b.l_inv_task.item()),
                 static_cast<double>(b.l_var_task.item()),
                 static_cast<double>(b.l_invariance.item()),
                 accuracy(detail::gather_scores(logits, tr.nodes), mcfg.num_classes, tr.labels),
                 accuracy(detail::gather_scores(logits, va.nodes), mcfg.num_classes, va.labels),
                 accuracy(detail::gather_scores(logits, te.nodes), mcfg.num_classes, te.labels)};
    res.report.epochs.push_back(log);
    if (!have_best || log.val_metric > res.report.val_metric) {
      have_best = true;
      res.params = params;
      res.report.best_epoch = e;
      res.report.val_metric = log.val_metric;
      res.report.test_metric = log.test_metric;
    }
    tape.backward(b.total);
    detail::update(params, tape, bound, adam, cfg);
  }
  res.report.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

template <typename T>
TrainResult<T> train_link(const DynamicGraph& g, const TrainConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto split = chronological_split(g, cfg.split);
  if (split.train.size() < 2 || split.val.size() == 0 || split.test.size() == 0)
    throw ValidationError("link task needs at least 2 train snapshots and non-empty val/test ranges");

  const auto mcfg = model_config(cfg, g);
  const auto ocfg = objective_config(cfg);
  std::vector<std::size_t> targets;
  std::vector<GraphInput<T>> inputs;
  for (std::size_t s = 1; s < split.train.end; ++s) {
    if (g.snapshot(s).empty()) continue;
    targets.push_back(s);
    inputs.push_back(build_graph_input<T>(g, s));
  }
  if (targets.empty()) throw ValidationError("link task: no training snapshot has edges");

  TrainResult<T> res{init_params<T>(mcfg, cfg.seed), {}};
  ModelParams<T> params = res.params;
  AdamState<T> adam;
  bool have_best = false;

  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    ad::Tape<T> tape;
    auto bound = bind(tape, params);
    std::vector<ad::Var<T>> totals;
    double l_i = 0, l_v = 0, l_inv = 0, train_auc = 0;
    for (std::size_t j = 0; j < targets.size(); ++j) {
      const std::size_t s = targets[j];
      const auto batch = detail::link_batch<T>(g, s, derive_seed(cfg.seed, 0x11e9, e));
      auto st = forward(tape, inputs[j], bound, mcfg);
      auto b = link_objective(st, batch, s - 1, ocfg, derive_seed(cfg.seed, 0x7e57, e * 4096 + s));
      totals.push_back(ad::reshape(b.total, {1}));
      l_i += b.l_inv_task.item();
      l_v += b.l_var_task.item();
      l_inv += b.l_invariance.item();
      train_auc += auc(b.logits.value().data, std::vector<int>(batch.targets.begin(), batch.targets.end()));
    }
    auto loss = ad::mean(ad::concat(totals), 0);
    const double k = static_cast<double>(targets.size());
    if (!detail::finite(loss.item())) throw DivergenceError(e, "non-finite training loss");

    EpochLog log{e,
                 static_cast<double>(loss.item()),
                 l_i / k,
                 l_v / k,
                 l_inv / k,
                 train_auc / k,
                 evaluate_links(params, mcfg, g, split.val, cfg.eval_negative_seed),
                 evaluate_links(params, mcfg, g, split.test, cfg.eval_negative_seed)};
    res.report.epochs.push_back(log);
    if (!have_best || log.val_metric > res.report.val_metric) {
      have_best = true;
      res.params = params;
      res.report.best_epoch = e;
      res.report.val_metric = log.val_metric;
      res.report.test_metric = log.test_metric;
    }
    tape.backward(loss);
    detail::update(params, tape, bound, adam, cfg);
  }
  res.report.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

template <typename T>
TrainResult<T> train(const DynamicGraph& g, const TrainConfig& cfg) {
  validate(cfg);
  return cfg.task == Task::node ? train_node<T>(g, cfg) : train_link<T>(g, cfg);
}

// Metric of a stored model on one split ("val" or "test"; "train" for nodes).
template <typename T>
double evaluate(const ModelParams<T>& params, const DynamicGraph& g, const TrainConfig& cfg, const std::string& which) {
  const auto mcfg = model_config(cfg, g);
  if (cfg.task == Task::link) {
    const auto split = chronological_split(g, cfg.split);
    if (which == "val") return evaluate_links(params, mcfg, g, split.val, cfg.eval_negative_seed);
    if (which == "test") return evaluate_links(params, mcfg, g, split.test, cfg.eval_negative_seed);
    throw ConfigError("unknown split '" + which + "' for link evaluation");
  }
  if (!g.labels()) throw ValidationError("node task needs labels");
  const auto split = chronological_split(g, detail::node_split_counts(g, cfg));
  const auto gi = build_graph_input<T>(g, g.num_timestamps(), cfg.complement_trajectories);
  const auto& classes = g.labels()->classes;
  auto label_of = [&](std::size_t v) { return classes[v]; };
  if (which == "train") return evaluate_nodes(params, mcfg, gi, split.train_nodes, label_of);
  if (which == "val") return evaluate_nodes(params, mcfg, gi, split.val_nodes, label_of);
  if (which == "test") return evaluate_nodes(params, mcfg, gi, split.test_nodes, label_of);
  throw ConfigError("unknown split '" + which + "'");
}

struct SweepRow {
  double lambda = 0.0;
  std::uint64_t seed = 0;
  MetricsReport report;
};

// One training run per (lambda, seed), fanned out over `jobs` threads. Rows
// come back in (lambda, seed) order regardless of scheduling.
template <typename T>
std::vector<SweepRow> lambda_sweep(const DynamicGraph& g, const TrainConfig& base, const std::vector<double>& lambdas,
                                   const std::vector<std::uint64_t>& seeds, std::size_t jobs = 1) {
  for (double l : lambdas) check_lambda(l);
  std::vector<SweepRow> rows;
  for (double l : lambdas)
    for (auto s : seeds) rows.push_back({l, s, {}});
  std::size_t next = 0;
  std::mutex mu;
  std::exception_ptr failure;
  auto worker = [&] {
    while (true) {
      std::size_t i;
      {
        std::lock_guard lock(mu);
        if (next >= rows.size() || failure) return;
        i = next++;
      }
      try {
        TrainConfig cfg = base;
        cfg.lambda = rows[i].lambda;
        cfg.seed = rows[i].seed;
        rows[i].report = train<T>(g, cfg).report;
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, rows.size()));
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return rows;
}

}  // namespace sild
