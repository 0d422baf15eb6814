#pragma once

// Dynamic graph data model, on-disk dataset format, chronological splits and
// negative-link sampling.
//
// Dataset directory layout:
//   meta.json          num_nodes, num_timestamps, feature_dim, num_classes,
//                      directed, evolving_features [, split_counts]
//   edges.csv          t,u,v
//   features.csv       node,f0,...           (static features)
//   features_t{t}.csv  node,f0,...           (one per t when evolving)
//   labels.csv         node,class,t          (optional)

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sild/errors.hpp"
#include "sild/rng.hpp"

namespace sild {

using NodeId = std::uint32_t;

struct Edge {
  NodeId u = 0;
  NodeId v = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Edges of one snapshot. Undirected lists store each pair once with u < v.
struct EdgeList {
  std::vector<Edge> edges;
  bool directed = false;
  bool allow_self_loops = false;

  std::size_t size() const noexcept { return edges.size(); }
  bool empty() const noexcept { return edges.empty(); }

  // Sort and orient (u < v when undirected); throws on duplicates/self-loops.
  void canonicalize() {
    if (!directed) {
      for (auto& e : edges)
        if (e.u > e.v) std::swap(e.u, e.v);
    }
    std::sort(edges.begin(), edges.end());
    validate_structure();
  }

  void validate_structure() const {
    for (std::size_t i = 0; i < edges.size(); ++i) {
      if (!allow_self_loops && edges[i].u == edges[i].v)
        throw ValidationError("self-loop on node " + std::to_string(edges[i].u));
      if (i > 0 && edges[i] == edges[i - 1])
        throw ValidationError("duplicate edge (" + std::to_string(edges[i].u) + "," +
                              std::to_string(edges[i].v) + ")");
    }
  }

  friend bool operator==(const EdgeList&, const EdgeList&) = default;
};

struct NodeLabels {
  std::size_t num_classes = 0;
  std::vector<int> classes;     // -1 for unlabeled nodes
  std::vector<int> timestamps;  // label (publication / prediction) time, -1 if unlabeled

  bool labeled(std::size_t v) const { return classes[v] >= 0; }
  friend bool operator==(const NodeLabels&, const NodeLabels&) = default;
};

// Immutable once constructed; the constructor validates every invariant.
class DynamicGraph {
 public:
  DynamicGraph() = default;

  // `features` holds one N x F row-major matrix, or T of them when evolving.
  DynamicGraph(std::size_t num_nodes, std::size_t num_timestamps, bool directed,
               std::vector<EdgeList> snapshots, std::size_t feature_dim, bool evolving_features,
               std::vector<std::vector<double>> features, std::optional<NodeLabels> labels = {},
               std::optional<std::array<std::size_t, 3>> split_counts = {})
      : num_nodes_(num_nodes),
        num_timestamps_(num_timestamps),
        directed_(directed),
        snapshots_(std::move(snapshots)),
        feature_dim_(feature_dim),
        evolving_(evolving_features),
        features_(std::move(features)),
        labels_(std::move(labels)),
        split_counts_(split_counts) {
    for (auto& s : snapshots_) {
      s.directed = directed_;
      s.canonicalize();
    }
    validate();
  }

  std::size_t num_nodes() const noexcept { return num_nodes_; }
  std::size_t num_timestamps() const noexcept { return num_timestamps_; }
  bool directed() const noexcept { return directed_; }
  std::size_t feature_dim() const noexcept { return feature_dim_; }
  bool evolving_features() const noexcept { return evolving_; }
  const std::vector<EdgeList>& snapshots() const noexcept { return snapshots_; }
  const EdgeList& snapshot(std::size_t t) const { return snapshots_.at(t); }
  const std::optional<NodeLabels>& labels() const noexcept { return labels_; }
  const std::optional<std::array<std::size_t, 3>>& split_counts() const noexcept { return split_counts_; }
  std::size_t num_classes() const noexcept { return labels_ ? labels_->num_classes : 0; }

  // Row-major N x F feature matrix in effect at time t.
  const std::vector<double>& features_at(std::size_t t) const {
    return evolving_ ? features_.at(t) : features_.at(0);
  }
  const std::vector<std::vector<double>>& feature_blocks() const noexcept { return features_; }

  std::size_t total_edges() const {
    std::size_t n = 0;
    for (const auto& s : snapshots_) n += s.size();
    return n;
  }

  // Copy restricted to timestamps [0, t_end).
  DynamicGraph prefix(std::size_t t_end) const {
    if (t_end == 0 || t_end > num_timestamps_) throw ValidationError("prefix length out of range");
    std::vector<EdgeList> snaps(snapshots_.begin(), snapshots_.begin() + static_cast<std::ptrdiff_t>(t_end));
    auto feats = features_;
    if (evolving_) feats.resize(t_end);
    return DynamicGraph(num_nodes_, t_end, directed_, std::move(snaps), feature_dim_, evolving_,
                        std::move(feats), labels_, std::nullopt);
  }

  friend bool operator==(const DynamicGraph&, const DynamicGraph&) = default;

 private:
  void validate() const {
    if (snapshots_.size() != num_timestamps_)
      throw ValidationError("expected " + std::to_string(num_timestamps_) + " snapshots, got " +
                            std::to_string(snapshots_.size()));
    for (std::size_t t = 0; t < snapshots_.size(); ++t) {
      for (const auto& e : snapshots_[t].edges) {
        if (e.u >= num_nodes_ || e.v >= num_nodes_)
          throw ValidationError("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) + ") at t=" +
                                std::to_string(t) + " out of range [0," + std::to_string(num_nodes_) + ")");
      }
    }
    const std::size_t blocks = evolving_ ? num_timestamps_ : 1;
    if (features_.size() != blocks)
      throw ValidationError("expected " + std::to_string(blocks) + " feature blocks, got " +
                            std::to_string(features_.size()));
    for (const auto& f : features_) {
      if (f.size() != num_nodes_ * feature_dim_)
        throw ValidationError("feature block has " + std::to_string(f.size()) + " values, expected " +
                              std::to_string(num_nodes_ * feature_dim_));
    }
    if (labels_) {
      if (labels_->classes.size() != num_nodes_ || labels_->timestamps.size() != num_nodes_)
        throw ValidationError("label arrays must have one entry per node");
      for (std::size_t v = 0; v < num_nodes_; ++v) {
        const int c = labels_->classes[v];
        if (c >= static_cast<int>(labels_->num_classes) || c < -1)
          throw ValidationError("node " + std::to_string(v) + " has class " + std::to_string(c) +
                                " outside [0," + std::to_string(labels_->num_classes) + ")");
      }
    }
    if (split_counts_) {
      const auto& c = *split_counts_;
      if (c[0] + c[1] + c[2] > num_timestamps_) throw ValidationError("split_counts exceed num_timestamps");
    }
  }

  std::size_t num_nodes_ = 0;
  std::size_t num_timestamps_ = 0;
  bool directed_ = false;
  std::vector<EdgeList> snapshots_;
  std::size_t feature_dim_ = 0;
  bool evolving_ = false;
  std::vector<std::vector<double>> features_;
  std::optional<NodeLabels> labels_;
  std::optional<std::array<std::size_t, 3>> split_counts_;
};

// Half-open timestamp range.
struct TimeRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
  bool contains(std::size_t t) const noexcept { return t >= begin && t < end; }
  friend bool operator==(const TimeRange&, const TimeRange&) = default;
};

struct Split {
  TimeRange train, val, test;
  // Node-task membership, derived from label timestamps.
  std::vector<std::size_t> train_nodes, val_nodes, test_nodes;
};

inline Split chronological_split(const DynamicGraph& g, std::array<std::size_t, 3> counts) {
  const std::size_t total = counts[0] + counts[1] + counts[2];
  if (total > g.num_timestamps())
    throw ValidationError("split counts sum to " + std::to_string(total) + " but the graph has only " +
                          std::to_string(g.num_timestamps()) + " timestamps");
  Split s;
  s.train = {0, counts[0]};
  s.val = {counts[0], counts[0] + counts[1]};
  s.test = {counts[0] + counts[1], total};
  if (const auto& labels = g.labels()) {
    for (std::size_t v = 0; v < g.num_nodes(); ++v) {
      if (!labels->labeled(v)) continue;
      const auto t = static_cast<std::size_t>(labels->timestamps[v]);
      if (s.train.contains(t))
        s.train_nodes.push_back(v);
      else if (s.val.contains(t))
        s.val_nodes.push_back(v);
      else if (s.test.contains(t))
        s.test_nodes.push_back(v);
    }
  }
  return s;
}

namespace detail {

inline std::uint64_t pair_key(NodeId u, NodeId v, bool directed) {
  if (!directed && u > v) std::swap(u, v);
  return (static_cast<std::uint64_t>(u) << 32) | v;
}

}  // namespace detail

// n node pairs absent from E^t, uniform without replacement, deterministic in seed.
inline EdgeList negative_sample(const DynamicGraph& g, std::size_t t, std::size_t count, std::uint64_t seed) {
  if (t >= g.num_timestamps()) throw ValidationError("negative_sample: timestamp out of range");
  const std::uint64_t n = g.num_nodes();
  const bool directed = g.directed();
  const std::uint64_t possible = directed ? n * (n - 1) : n * (n - 1) / 2;
  const auto& pos = g.snapshot(t).edges;
  const std::uint64_t free_pairs = possible - pos.size();
  if (count > free_pairs)
    throw ValidationError("negative_sample: requested " + std::to_string(count) + " pairs but only " +
                          std::to_string(free_pairs) + " non-edges exist at t=" + std::to_string(t));

  std::unordered_set<std::uint64_t> positives;
  positives.reserve(pos.size() * 2);
  for (const auto& e : pos) positives.insert(detail::pair_key(e.u, e.v, directed));

  Rng rng(derive_seed(seed, 0x4e45474154495645ULL, t));
  EdgeList out;
  out.directed = directed;
  out.edges.reserve(count);

  if (possible > 0 && 2 * pos.size() > possible) {
    // Dense: enumerate every non-edge, then draw without replacement.
    std::vector<Edge> candidates;
    candidates.reserve(free_pairs);
    for (NodeId u = 0; u < n; ++u) {
      for (NodeId v = directed ? 0 : u + 1; v < n; ++v) {
        if (u == v) continue;
        if (!positives.count(detail::pair_key(u, v, directed))) candidates.push_back({u, v});
      }
    }
    for (auto idx : rng.sample_without_replacement(candidates.size(), count)) out.edges.push_back(candidates[idx]);
    return out;
  }

  std::unordered_set<std::uint64_t> chosen;
  chosen.reserve(count * 2);
  while (out.edges.size() < count) {
    auto u = static_cast<NodeId>(rng.below(n));
    auto v = static_cast<NodeId>(rng.below(n));
    if (u == v) continue;
    if (!directed && u > v) std::swap(u, v);
    const auto key = detail::pair_key(u, v, directed);
    if (positives.count(key) || chosen.count(key)) continue;
    chosen.insert(key);
    out.edges.push_back({u, v});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset directory I/O

namespace io {

inline std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

template <typename Num>
Num parse_number(std::string_view field, const std::string& where) {
  while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.remove_suffix(1);
  while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
  Num value{};
  auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size())
    throw ValidationError(where + ": cannot parse '" + std::string(field) + "'");
  return value;
}

inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw LoadError("cannot open " + p.string());
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw LoadError("cannot write " + p.string());
  return out;
}

inline std::vector<double> read_features(const std::filesystem::path& p, std::size_t n, std::size_t f) {
  auto in = open_in(p);
  const std::string name = p.filename().string();
  std::string line;
  if (!std::getline(in, line)) throw LoadError(name + " is empty");
  if (split_csv(line).size() != f + 1)
    throw ValidationError(name + " header has " + std::to_string(split_csv(line).size()) + " columns, expected " +
                          std::to_string(f + 1));
  std::vector<double> data(n * f, 0.0);
  std::vector<bool> seen(n, false);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const std::string where = name + " row " + std::to_string(row);
    auto fields = split_csv(line);
    if (fields.size() != f + 1) throw ValidationError(where + ": wrong column count");
    const auto node = parse_number<std::uint64_t>(fields[0], where);
    if (node >= n)
      throw ValidationError(where + ": node " + std::to_string(node) + " out of range [0," + std::to_string(n) + ")");
    if (seen[node]) throw ValidationError(where + ": node " + std::to_string(node) + " listed twice");
    seen[node] = true;
    for (std::size_t j = 0; j < f; ++j) data[node * f + j] = parse_number<double>(fields[j + 1], where);
  }
  for (std::size_t v = 0; v < n; ++v)
    if (!seen[v]) throw ValidationError(name + ": missing row for node " + std::to_string(v));
  return data;
}

inline void write_features(const std::filesystem::path& p, const std::vector<double>& data, std::size_t n,
                           std::size_t f) {
  auto out = open_out(p);
  out << "node";
  for (std::size_t j = 0; j < f; ++j) out << ",f" << j;
  out << '\n';
  for (std::size_t v = 0; v < n; ++v) {
    out << v;
    for (std::size_t j = 0; j < f; ++j) out << ',' << format_double(data[v * f + j]);
    out << '\n';
  }
}

}  // namespace io

inline DynamicGraph load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw LoadError("dataset directory not found: " + dir.string());

  nlohmann::json meta;
  try {
    auto in = io::open_in(dir / "meta.json");
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("meta.json: ") + e.what());
  }
  std::size_t n = 0, t_count = 0, f = 0, classes = 0;
  bool directed = false, evolving = false;
  std::optional<std::array<std::size_t, 3>> split_counts;
  try {
    n = meta.at("num_nodes").get<std::size_t>();
    t_count = meta.at("num_timestamps").get<std::size_t>();
    f = meta.at("feature_dim").get<std::size_t>();
    classes = meta.value("num_classes", std::size_t{0});
    directed = meta.value("directed", false);
    evolving = meta.value("evolving_features", false);
    if (meta.contains("split_counts")) split_counts = meta.at("split_counts").get<std::array<std::size_t, 3>>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("meta.json: ") + e.what());
  }
  if (n > std::numeric_limits<NodeId>::max()) throw ValidationError("meta.json: num_nodes too large");

  std::vector<EdgeList> snaps(t_count);
  {
    auto in = io::open_in(dir / "edges.csv");
    std::string line;
    if (!std::getline(in, line)) throw LoadError("edges.csv is empty");
    std::size_t row = 0;
    while (std::getline(in, line)) {
      ++row;
      if (line.empty() || line == "\r") continue;
      const std::string where = "edges.csv row " + std::to_string(row);
      auto fields = io::split_csv(line);
      if (fields.size() != 3) throw ValidationError(where + ": expected 3 columns");
      const auto t = io::parse_number<std::uint64_t>(fields[0], where);
      const auto u = io::parse_number<std::uint64_t>(fields[1], where);
      const auto v = io::parse_number<std::uint64_t>(fields[2], where);
      if (t >= t_count)
        throw ValidationError(where + ": timestamp " + std::to_string(t) + " out of range [0," +
                              std::to_string(t_count) + ")");
      if (u >= n || v >= n)
        throw ValidationError(where + ": node " + std::to_string(u >= n ? u : v) + " out of range [0," +
                              std::to_string(n) + ")");
      snaps[t].edges.push_back({static_cast<NodeId>(u), static_cast<NodeId>(v)});
    }
  }

  std::vector<std::vector<double>> features;
  if (evolving) {
    for (std::size_t t = 0; t < t_count; ++t)
      features.push_back(io::read_features(dir / ("features_t" + std::to_string(t) + ".csv"), n, f));
  } else {
    features.push_back(io::read_features(dir / "features.csv", n, f));
  }

  std::optional<NodeLabels> labels;
  if (fs::exists(dir / "labels.csv")) {
    NodeLabels lab;
    lab.num_classes = classes;
    lab.classes.assign(n, -1);
    lab.timestamps.assign(n, -1);
    auto in = io::open_in(dir / "labels.csv");
    std::string line;
    std::getline(in, line);
    std::size_t row = 0;
    while (std::getline(in, line)) {
      ++row;
      if (line.empty() || line == "\r") continue;
      const std::string where = "labels.csv row " + std::to_string(row);
      auto fields = io::split_csv(line);
      if (fields.size() != 3) throw ValidationError(where + ": expected 3 columns");
      const auto node = io::parse_number<std::uint64_t>(fields[0], where);
      const auto cls = io::parse_number<std::int64_t>(fields[1], where);
      const auto t = io::parse_number<std::int64_t>(fields[2], where);
      if (node >= n)
        throw ValidationError(where + ": node " + std::to_string(node) + " out of range [0," + std::to_string(n) + ")");
      if (cls < 0 || static_cast<std::size_t>(cls) >= classes)
        throw ValidationError(where + ": class " + std::to_string(cls) + " out of range [0," +
                              std::to_string(classes) + ")");
      if (t < 0 || static_cast<std::size_t>(t) >= t_count)
        throw ValidationError(where + ": timestamp " + std::to_string(t) + " out of range");
      lab.classes[node] = static_cast<int>(cls);
      lab.timestamps[node] = static_cast<int>(t);
    }
    labels = std::move(lab);
  }

  for (std::size_t t = 0; t < t_count; ++t) {
    snaps[t].directed = directed;
    try {
      snaps[t].canonicalize();
    } catch (const ValidationError& e) {
      throw ValidationError("edges.csv t=" + std::to_string(t) + ": " + e.what());
    }
  }
  return DynamicGraph(n, t_count, directed, std::move(snaps), f, evolving, std::move(features), std::move(labels),
                      split_counts);
}

inline void save_dataset(const DynamicGraph& g, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::ordered_json meta;
  meta["num_nodes"] = g.num_nodes();
  meta["num_timestamps"] = g.num_timestamps();
  meta["feature_dim"] = g.feature_dim();
  meta["num_classes"] = g.num_classes();
  meta["directed"] = g.directed();
  meta["evolving_features"] = g.evolving_features();
  if (g.split_counts()) meta["split_counts"] = *g.split_counts();
  {
    auto out = io::open_out(dir / "meta.json");
    out << meta.dump(2) << '\n';
  }
  {
    auto out = io::open_out(dir / "edges.csv");
    out << "t,u,v\n";
    for (std::size_t t = 0; t < g.num_timestamps(); ++t)
      for (const auto& e : g.snapshot(t).edges) out << t << ',' << e.u << ',' << e.v << '\n';
  }
  if (g.evolving_features()) {
    for (std::size_t t = 0; t < g.num_timestamps(); ++t)
      io::write_features(dir / ("features_t" + std::to_string(t) + ".csv"), g.features_at(t), g.num_nodes(),
                         g.feature_dim());
  } else {
    io::write_features(dir / "features.csv", g.features_at(0), g.num_nodes(), g.feature_dim());
  }
  if (const auto& labels = g.labels()) {
    auto out = io::open_out(dir / "labels.csv");
    out << "node,class,t\n";
    for (std::size_t v = 0; v < g.num_nodes(); ++v)
      if (labels->labeled(v)) out << v << ',' << labels->classes[v] << ',' << labels->timestamps[v] << '\n';
  }
}

}  // namespace sild
