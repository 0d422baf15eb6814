#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sild/synth.hpp"

using namespace sild;
using namespace sild::synth;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

NodeSynthConfig small_node_config(double shift, std::uint64_t seed) {
  NodeSynthConfig c;
  c.num_nodes = 400;
  c.num_timestamps = 10;
  c.shift = shift;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Schedule, LinkProbabilityValues) {
  EXPECT_DOUBLE_EQ(link_prob_schedule(0, 0.1, 0.2), 0.6000000000000001);
  EXPECT_NEAR(link_prob_schedule(1, 0.25, 0.1), 0.2, 1e-15);
  EXPECT_NEAR(link_prob_schedule(2, 0.25, 0.1), 0.1, 1e-15);
  EXPECT_THROW(link_prob_schedule(0, 0.1, 0.34), ConfigError);
  EXPECT_THROW(link_prob_schedule(0, 0.1, -0.1), ConfigError);
}

TEST(Schedule, LinkShiftStaysInUnitInterval) {
  for (double p : {0.0, 0.3, 0.95, 1.0})
    for (double s : {0.0, 0.1, 0.5, 2.0})
      for (int t = 0; t < 40; ++t) {
        const double v = link_shift_schedule(t, p, s);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
  EXPECT_DOUBLE_EQ(link_shift_schedule(3, 0.4, 0.0), 0.4);
}

TEST(Sbm, FullIntraNoInterGivesCliques) {
  std::vector<int> labels{0, 1, 0, 2, 1, 0};
  const auto e = sbm_snapshot(labels, {1.0, 1.0, 1.0}, 0.0, 3);
  // Class sizes 3, 2, 1: 3 + 1 + 0 edges, all intra-class.
  EXPECT_EQ(e.size(), 4u);
  for (const auto& x : e.edges) EXPECT_EQ(labels[x.u], labels[x.v]);
}

TEST(Sbm, ZeroProbabilitiesGiveEmptyGraph) {
  EXPECT_EQ(sbm_snapshot({0, 1, 0, 1}, {0.0, 0.0}, 0.0, 1).size(), 0u);
  EXPECT_EQ(erdos_renyi(50, 0.0, 1).size(), 0u);
  EXPECT_EQ(erdos_renyi(6, 1.0, 1).size(), 15u);
}

TEST(Sbm, BlockDensitiesWithinFourSigma) {
  const std::size_t n = 200;
  std::vector<int> labels(n);
  for (std::size_t v = 0; v < n; ++v) labels[v] = static_cast<int>(v % 2);
  const double p_in = 0.1, p_out = 0.01;
  const double intra_pairs = 2.0 * (100.0 * 99.0 / 2.0), inter_pairs = 100.0 * 100.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto e = sbm_snapshot(labels, {p_in, p_in}, p_out, seed);
    double intra = 0, inter = 0;
    for (const auto& x : e.edges) (labels[x.u] == labels[x.v] ? intra : inter) += 1;
    EXPECT_LT(std::abs(intra - intra_pairs * p_in), 4 * std::sqrt(intra_pairs * p_in * (1 - p_in)));
    EXPECT_LT(std::abs(inter - inter_pairs * p_out), 4 * std::sqrt(inter_pairs * p_out * (1 - p_out)));
  }
}

TEST(Sbm, ErdosRenyiDensity) {
  const double pairs = 300.0 * 299.0 / 2.0, p = 0.05;
  const double m = static_cast<double>(erdos_renyi(300, p, 9).size());
  EXPECT_LT(std::abs(m - pairs * p), 4 * std::sqrt(pairs * p * (1 - p)));
}

TEST(NodeSynthetic, FullShiftAlignsVariantFrequency) {
  NodeSynthLatents z;
  gen_node_synthetic(small_node_config(1.0, 2), &z);
  for (std::size_t v = 0; v < z.classes.size(); ++v) {
    EXPECT_EQ(z.inv_freq[v], static_cast<std::size_t>(z.classes[v]));
    if (z.split[v] != 2) EXPECT_EQ(z.var_freq[v], static_cast<std::size_t>(z.classes[v]));
  }
}

TEST(NodeSynthetic, ZeroShiftVariantFrequencyIsUniform) {
  auto c = small_node_config(0.0, 3);
  c.num_nodes = 5000;
  const auto z = node_synth_latents(c);
  std::vector<double> counts(c.num_classes, 0.0);
  for (auto f : z.var_freq) counts[f] += 1;
  const double expected = double(c.num_nodes) / double(c.num_classes);
  double chi2 = 0;
  for (double o : counts) chi2 += (o - expected) * (o - expected) / expected;
  const boost::math::chi_squared dist(static_cast<double>(c.num_classes - 1));
  EXPECT_LT(chi2, boost::math::quantile(dist, 0.99));
}

TEST(NodeSynthetic, InvariantFrequencyIgnoresShift) {
  const auto a = node_synth_latents(small_node_config(0.0, 4));
  const auto b = node_synth_latents(small_node_config(0.8, 4));
  EXPECT_EQ(a.inv_freq, b.inv_freq);
  EXPECT_EQ(a.classes, b.classes);
  EXPECT_EQ(a.split, b.split);
}

TEST(NodeSynthetic, SplitFractionsAndLabels) {
  NodeSynthLatents z;
  const auto g = gen_node_synthetic(small_node_config(0.4, 5), &z);
  std::array<std::size_t, 3> sizes{};
  for (int s : z.split) ++sizes[static_cast<std::size_t>(s)];
  EXPECT_EQ(sizes, (std::array<std::size_t, 3>{240, 80, 80}));
  EXPECT_EQ(g.labels()->timestamps, z.split);
  const auto split = chronological_split(g, *g.split_counts());
  EXPECT_EQ(split.test_nodes.size(), 80u);
}

TEST(NodeSynthetic, RejectsBadConfig) {
  auto c = small_node_config(1.5, 0);
  EXPECT_THROW(gen_node_synthetic(c), ConfigError);
  c = small_node_config(0.5, 0);
  c.f_low.pop_back();
  EXPECT_THROW(gen_node_synthetic(c), ConfigError);
  c = small_node_config(0.5, 0);
  c.s1 = 0.5;
  EXPECT_THROW(gen_node_synthetic(c), ConfigError);
}

TEST(NodeSynthetic, ByteDeterministic) {
  const auto base = std::filesystem::temp_directory_path() / "sild_test_det";
  std::filesystem::remove_all(base);
  save_dataset(gen_node_synthetic(small_node_config(0.8, 6)), base / "a");
  save_dataset(gen_node_synthetic(small_node_config(0.8, 6)), base / "b");
  save_dataset(gen_node_synthetic(small_node_config(0.8, 7)), base / "c");
  for (const auto& f : std::filesystem::directory_iterator(base / "a")) {
    const auto name = f.path().filename();
    EXPECT_EQ(slurp(base / "a" / name), slurp(base / "b" / name)) << name;
  }
  EXPECT_NE(slurp(base / "a" / "edges.csv"), slurp(base / "c" / "edges.csv"));
}

TEST(LinkSynthetic, CleanTargetsAreReconstructed) {
  LinkSynthConfig c;
  c.num_nodes = 80;
  c.num_timestamps = 4;
  c.p_in = 0.2;
  c.p_out = 0.02;
  c.shift = 1.0;
  c.test_shift = 1.0;
  c.sigma = 0.0;
  c.split = {2, 1, 1};
  const auto base = synthetic_link_base(c);
  const auto r = gen_link_synthetic(base, c);
  ASSERT_EQ(r.inner_auc.size(), 3u);
  for (double a : r.inner_auc) EXPECT_GT(a, 0.9);
  for (double p : r.schedule) EXPECT_EQ(p, 1.0);
  EXPECT_EQ(r.graph.feature_dim(), c.base_feature_dim + c.spurious_dim);
  EXPECT_EQ(r.graph.snapshots(), base.snapshots());
}

TEST(LinkSynthetic, RejectsBadConfig) {
  LinkSynthConfig c;
  c.sigma = -1;
  EXPECT_THROW(synthetic_link_base(c), ConfigError);
  c = LinkSynthConfig{};
  c.shift = 2;
  EXPECT_THROW(synthetic_link_base(c), ConfigError);
}
