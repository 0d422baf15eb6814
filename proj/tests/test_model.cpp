#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "sild/fft.hpp"
#include "sild/model.hpp"
#include "sild/selftest.hpp"

using namespace sild;
using ad::Tape;
using ad::Tensor;

namespace {

ModelConfig small_config(std::size_t in, std::size_t hidden, std::size_t t, Aggregator agg = Aggregator::attention) {
  ModelConfig mc;
  mc.in_dim = in;
  mc.hidden = hidden;
  mc.mask_hidden = hidden;
  mc.num_classes = 3;
  mc.time_length = t;
  mc.aggregator = agg;
  return mc;
}

// One-layer sum aggregator with identity weights: h_v = x_v + sum of neighbor features.
ModelParams<double> identity_params(const ModelConfig& mc) {
  auto p = init_params<double>(mc, 0);
  auto& w = p["gnn0.W"];
  std::fill(w.data.begin(), w.data.end(), 0.0);
  for (std::size_t i = 0; i < mc.in_dim; ++i) w[i * mc.hidden + i] = 1.0;
  return p;
}

DynamicGraph star(std::size_t leaves) {
  std::vector<EdgeList> snaps(1);
  for (NodeId v = 1; v <= leaves; ++v) snaps[0].edges.push_back({0, v});
  std::vector<double> x((leaves + 1) * 2);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = double(i) + 1.0;
  return DynamicGraph(leaves + 1, 1, false, snaps, 2, false, {x});
}

ForwardState<double> run(Tape<double>& tape, const DynamicGraph& g, const ModelParams<double>& p,
                         const ModelConfig& mc) {
  static thread_local std::vector<GraphInput<double>> keep;
  keep.push_back(build_graph_input<double>(g, g.num_timestamps()));
  auto b = bind(tape, p);
  return forward(tape, keep.back(), b, mc);
}

}  // namespace

TEST(MessagePassing, StarGraphSumIsSelfPlusLeaves) {
  auto mc = small_config(2, 2, 1, Aggregator::sum);
  mc.layers = 1;
  const auto g = star(3);
  const auto p = identity_params(mc);
  Tape<double> tape;
  const auto h = run(tape, g, p, mc).h.value();
  // Node features are (1,2), (3,4), (5,6), (7,8).
  EXPECT_DOUBLE_EQ(h[0], 1 + 3 + 5 + 7);
  EXPECT_DOUBLE_EQ(h[1], 2 + 4 + 6 + 8);
  EXPECT_DOUBLE_EQ(h[2], 3 + 1);
  EXPECT_DOUBLE_EQ(h[3], 4 + 2);
}

TEST(MessagePassing, IsolatedNodeKeepsOwnFeature) {
  auto mc = small_config(2, 2, 1, Aggregator::sum);
  mc.layers = 1;
  std::vector<EdgeList> snaps(1);
  DynamicGraph g(2, 1, false, snaps, 2, false, {std::vector<double>{1.5, -2, 3, 4}});
  Tape<double> tape;
  const auto h = run(tape, g, identity_params(mc), mc).h.value();
  EXPECT_EQ(h.data, (std::vector<double>{1.5, -2, 3, 4}));
}

TEST(MessagePassing, MeanAggregatorAverages) {
  auto mc = small_config(2, 2, 1, Aggregator::mean);
  mc.layers = 1;
  Tape<double> tape;
  const auto h = run(tape, star(3), identity_params(mc), mc).h.value();
  EXPECT_DOUBLE_EQ(h[0], (1 + 3 + 5 + 7) / 4.0);
  EXPECT_DOUBLE_EQ(h[2], (3 + 1) / 2.0);
}

TEST(MessagePassing, AttentionWeightsAreConvex) {
  // With a_src = a_dst = 0 every neighbor gets equal weight, so attention equals mean.
  auto mc = small_config(2, 2, 1, Aggregator::attention);
  mc.layers = 1;
  auto p = identity_params(mc);
  std::fill(p["gnn0.a_src"].data.begin(), p["gnn0.a_src"].data.end(), 0.0);
  std::fill(p["gnn0.a_dst"].data.begin(), p["gnn0.a_dst"].data.end(), 0.0);
  Tape<double> tape;
  const auto h = run(tape, star(3), p, mc).h.value();
  EXPECT_NEAR(h[0], (1 + 3 + 5 + 7) / 4.0, 1e-12);
  EXPECT_NEAR(h[3], (4 + 2) / 2.0, 1e-12);
}

TEST(MessagePassing, PermutationEquivariance) {
  const auto g = selftest::tiny_node_graph(7, 4, 3, 2, 5);
  const std::vector<NodeId> perm{3, 0, 6, 1, 5, 2, 4};
  std::vector<EdgeList> snaps;
  for (const auto& s : g.snapshots()) {
    EdgeList e;
    for (const auto& x : s.edges) e.edges.push_back({perm[x.u], perm[x.v]});
    snaps.push_back(e);
  }
  std::vector<double> x(7 * 3);
  for (std::size_t v = 0; v < 7; ++v)
    for (std::size_t j = 0; j < 3; ++j) x[perm[v] * 3 + j] = g.features_at(0)[v * 3 + j];
  DynamicGraph pg(7, 4, false, snaps, 3, false, {x});
  const auto mc = small_config(3, 4, 4);
  const auto p = init_params<double>(mc, 1);
  Tape<double> tape;
  const auto h = run(tape, g, p, mc).h.value();
  const auto hp = run(tape, pg, p, mc).h.value();
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t v = 0; v < 7; ++v)
      for (std::size_t j = 0; j < 4; ++j)
        EXPECT_NEAR(hp[(t * 7 + perm[v]) * 4 + j], h[(t * 7 + v) * 4 + j], 1e-12);
}

TEST(MessagePassing, FeatureDimMismatchThrows) {
  const auto mc = small_config(5, 4, 4);
  const auto g = selftest::tiny_node_graph(4, 4, 3, 2, 0);
  Tape<double> tape;
  EXPECT_THROW(run(tape, g, init_params<double>(mc, 0), mc), ShapeError);
}

TEST(MessagePassing, ComplementAddsLastStructureToHistory) {
  std::vector<EdgeList> snaps(3);
  snaps[2].edges = {{0, 1}};
  DynamicGraph g(3, 3, false, snaps, 1, false, {std::vector<double>{1, 10, 100}});
  const auto plain = build_graph_input<double>(g, 3, false);
  const auto comp = build_graph_input<double>(g, 3, true);
  auto has = [](const GraphInput<double>& gi, std::size_t s, std::size_t d) {
    for (std::size_t i = 0; i < gi.src.size(); ++i)
      if (gi.src[i] == s && gi.dst[i] == d) return true;
    return false;
  };
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_TRUE(has(comp, t * 3 + 1, t * 3 + 0)) << "t=" << t;
    EXPECT_EQ(has(plain, t * 3 + 1, t * 3 + 0), t == 2);
  }
  EXPECT_GE(comp.src.size(), plain.src.size());
}

TEST(Masks, ComplementaryAndConjugateSymmetric) {
  const auto g = selftest::tiny_node_graph(6, 7, 3, 2, 2);
  const auto mc = small_config(3, 4, 7);
  Tape<double> tape;
  const auto st = run(tape, g, init_params<double>(mc, 3), mc);
  const auto& mi = st.masks.inv.value();
  const auto& mv = st.masks.var.value();
  for (std::size_t i = 0; i < mi.size(); ++i) {
    EXPECT_NEAR(mi[i] + mv[i], 1.0, 1e-12);
    EXPECT_GT(mi[i], 0.0);
    EXPECT_LT(mi[i], 1.0);
  }
  for (std::size_t k = 1; k < 7; ++k)
    for (std::size_t n = 0; n < 6; ++n) EXPECT_DOUBLE_EQ(mi[k * 6 + n], mi[(7 - k) * 6 + n]);
}

TEST(Masks, LogitValuesAndTemperature) {
  const auto g = selftest::tiny_node_graph(4, 5, 3, 2, 2);
  auto mc = small_config(3, 4, 5);
  auto p = init_params<double>(mc, 3);
  std::fill(p["mask.W2"].data.begin(), p["mask.W2"].data.end(), 0.0);
  Tape<double> tape;
  for (double v : run(tape, g, p, mc).masks.inv.value().data) EXPECT_DOUBLE_EQ(v, 0.5);
  p["mask.b2"][0] = 1.0;
  mc.tau = 0.5;
  for (double v : run(tape, g, p, mc).masks.inv.value().data) EXPECT_NEAR(v, 0.8807970779778823, 1e-12);
  p["mask.b2"][0] = 100.0;
  mc.tau = 1.0;
  for (double v : run(tape, g, p, mc).masks.var.value().data) EXPECT_LT(v, 1e-12);
}

TEST(Masks, AblationFreezesAtHalf) {
  const auto g = selftest::tiny_node_graph(4, 5, 3, 2, 2);
  auto mc = small_config(3, 4, 5);
  mc.no_mask = true;
  Tape<double> tape;
  const auto st = run(tape, g, init_params<double>(mc, 3), mc);
  for (double v : st.masks.inv.value().data) EXPECT_EQ(v, 0.5);
  for (std::size_t i = 0; i < st.z.re.size(); ++i) EXPECT_NEAR(st.z_inv.re.value()[i], 0.5 * st.z.re.value()[i], 1e-12);
}

TEST(Filter, DecomposesAndPreservesPhase) {
  const auto g = selftest::tiny_node_graph(6, 8, 3, 2, 4);
  const auto mc = small_config(3, 4, 8);
  Tape<double> tape;
  const auto st = run(tape, g, init_params<double>(mc, 4), mc);
  const auto& zr = st.z.re.value();
  const auto& zi = st.z.im.value();
  for (std::size_t i = 0; i < zr.size(); ++i) {
    EXPECT_NEAR(st.z_inv.re.value()[i] + st.z_var.re.value()[i], zr[i], 1e-9);
    EXPECT_NEAR(st.z_inv.im.value()[i] + st.z_var.im.value()[i], zi[i], 1e-9);
    if (std::hypot(zr[i], zi[i]) > 1e-12 && std::hypot(st.z_inv.re.value()[i], st.z_inv.im.value()[i]) > 1e-12)
      EXPECT_NEAR(std::arg(std::complex<double>(st.z_inv.re.value()[i], st.z_inv.im.value()[i])),
                  std::arg(std::complex<double>(zr[i], zi[i])), 1e-9);
  }
  // Symmetric masks keep the filtered trajectories real.
  const auto back = spectral::ifft_time(spectral::Spectrum<double>{st.z_inv.re.value(), st.z_inv.im.value()});
  EXPECT_LT(back.max_imag, 1e-6);
}

TEST(Filter, UnitMaskIsIdentity) {
  Tape<double> tape;
  Tensor<double> re({2, 1, 2}, std::vector<double>{1, -2, 0.5, 3}), im({2, 1, 2}, std::vector<double>{0, 1, -1, 2});
  ComplexVar<double> z{tape.constant(re), tape.constant(im)};
  const auto one = filter_spectrum(z, tape.constant(Tensor<double>({2, 1, 1}, 1.0)));
  const auto zero = filter_spectrum(z, tape.constant(Tensor<double>({2, 1, 1}, 0.0)));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(one.re.value()[i], re[i], 1e-15);
    EXPECT_NEAR(one.im.value()[i], im[i], 1e-15);
    EXPECT_EQ(zero.re.value()[i], 0.0);
  }
}

TEST(Classifier, DuplicatedNodesGetIdenticalLogits) {
  const auto mc = small_config(3, 4, 5);
  const auto p = init_params<double>(mc, 6);
  Tape<double> tape;
  auto b = bind(tape, p);
  std::mt19937_64 gen(1);
  std::normal_distribution<double> d(0.0, 300.0);
  Tensor<double> re({5, 3, 4}), im({5, 3, 4});
  for (std::size_t k = 0; k < 5; ++k)
    for (std::size_t j = 0; j < 4; ++j) {
      re[(k * 3 + 0) * 4 + j] = re[(k * 3 + 2) * 4 + j] = d(gen);
      im[(k * 3 + 0) * 4 + j] = im[(k * 3 + 2) * 4 + j] = d(gen);
      re[(k * 3 + 1) * 4 + j] = d(gen);
    }
  const auto logits = classify_nodes(ComplexVar<double>{tape.constant(re), tape.constant(im)}, b, "f_I").value();
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(logits[0 * 3 + c], logits[2 * 3 + c]);
    EXPECT_TRUE(std::isfinite(logits[1 * 3 + c]));
  }
}

TEST(Classifier, ZeroSpectrumZeroWeightsGivesZeroLogits) {
  const auto mc = small_config(3, 4, 5);
  auto p = init_params<double>(mc, 6);
  for (auto& q : p.list) std::fill(q.value.data.begin(), q.value.data.end(), 0.0);
  Tape<double> tape;
  auto b = bind(tape, p);
  Tensor<double> z({5, 2, 4});
  const auto logits = classify_nodes(ComplexVar<double>{tape.constant(z), tape.constant(z)}, b, "f_V").value();
  for (double v : logits.data) EXPECT_EQ(v, 0.0);
  Tensor<double> wrong({4, 2, 4});
  EXPECT_THROW(classify_nodes(ComplexVar<double>{tape.constant(wrong), tape.constant(wrong)}, b, "f_I"), ShapeError);
}

TEST(Decoder, InnerProductLogits) {
  Tape<double> tape;
  Tensor<double> h({2, 3, 2}, std::vector<double>{0, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 1});
  EdgeList pairs;
  pairs.edges = {{0, 1}, {1, 0}, {0, 2}};
  const auto logits = decode_links(tape.constant(h), pairs, 1).value();
  EXPECT_EQ(logits.data, (std::vector<double>{1, 1, 0}));
  pairs.edges = {{0, 3}};
  EXPECT_THROW(decode_links(tape.constant(h), pairs, 1), ValidationError);
}

TEST(Params, InitializationShapesAndGroups) {
  const auto mc = small_config(3, 4, 5);
  const auto p = init_params<double>(mc, 0);
  EXPECT_EQ(p["gnn0.W"].shape, (ad::Shape{3, 4}));
  EXPECT_EQ(p["gnn1.W"].shape, (ad::Shape{4, 4}));
  EXPECT_EQ(p["mask.W1"].shape, (ad::Shape{8, 4}));
  EXPECT_EQ(p["f_I.W1"].shape, (ad::Shape{2 * 5 * 4, 4}));
  EXPECT_EQ(p.list[p.index("f_V.W2")].group, Group::f_V);
  const double bound = std::sqrt(6.0 / (3 + 4));
  for (double v : p["gnn0.W"].data) EXPECT_LE(std::abs(v), bound);
  for (double v : p["mask.b2"].data) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(init_params<double>(mc, 0)["f_I.W1"], p["f_I.W1"]);
}
