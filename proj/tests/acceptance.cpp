// Acceptance suite: one PASS/FAIL line per criterion.
//
// Exit status is nonzero when an exactness criterion (1-4, 9, 10) fails. The
// training-trend criteria (5-8) are reported the same way but only affect the
// exit status under --strict.

#include <boost/math/distributions/chi_squared.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "sild/sild.hpp"

using namespace sild;
using Clock = std::chrono::steady_clock;

namespace {

struct Line {
  int id;
  bool passed;
  std::string detail;
};

std::vector<Line> lines;

void report(int id, bool passed, const std::string& detail) {
  lines.push_back({id, passed, detail});
  std::printf("criterion %2d: %s  %s\n", id, passed ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void gradient_criterion() {
  double worst = 0, slowest = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto t0 = Clock::now();
    worst = std::max(worst, selftest::node_loss_gradcheck(seed).max_rel_err);
    slowest = std::max(slowest, seconds_since(t0));
  }
  report(1, worst < 1e-4 && slowest < 30.0, fmt("max rel err %.3g (< 1e-4), slowest check %.2f s (< 30 s)", worst, slowest));
}

void spectral_criterion() {
  double dft = 0, trip = 0, parseval = 0, comp = 0, decomp = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    const std::size_t t = 2 + gen() % 40, cols = 1 + gen() % 5;
    ad::Tensor<double> x({t, cols});
    for (auto& v : x.data) v = nd(gen);
    const auto z = spectral::fft_time(x);
    double et = 0, ef = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      const auto ref = oracle_ref::naive_dft(x.data, t, cols, c);
      for (std::size_t k = 0; k < t; ++k)
        dft = std::max(dft, std::abs(std::complex<double>(z.re[k * cols + c], z.im[k * cols + c]) - ref[k]));
    }
    const auto back = spectral::ifft_time(z, t);
    for (std::size_t i = 0; i < x.size(); ++i) {
      trip = std::max(trip, std::abs(back.real[i] - x[i]));
      et += x[i] * x[i];
      ef += z.re[i] * z.re[i] + z.im[i] * z.im[i];
    }
    parseval = std::max(parseval, std::abs(ef - et) / et);

    const std::size_t n = 4 + gen() % 6, steps = 3 + gen() % 6;
    const auto g = selftest::tiny_node_graph(n, steps, 3, 2, seed);
    ModelConfig mc;
    mc.in_dim = 3;
    mc.hidden = 4;
    mc.mask_hidden = 4;
    mc.num_classes = 2;
    mc.time_length = steps;
    const auto p = init_params<double>(mc, seed);
    const auto gi = build_graph_input<double>(g, steps);
    ad::Tape<double> tape;
    auto b = bind(tape, p);
    const auto st = forward(tape, gi, b, mc);
    const auto& mi = st.masks.inv.value();
    const auto& mv = st.masks.var.value();
    for (std::size_t i = 0; i < mi.size(); ++i) comp = std::max(comp, std::abs(mi[i] + mv[i] - 1.0));
    for (std::size_t i = 0; i < st.z.re.size(); ++i) {
      decomp = std::max(decomp, std::abs(st.z_inv.re.value()[i] + st.z_var.re.value()[i] - st.z.re.value()[i]));
      decomp = std::max(decomp, std::abs(st.z_inv.im.value()[i] + st.z_var.im.value()[i] - st.z.im.value()[i]));
    }
  }
  const bool ok = dft < 1e-9 && trip < 1e-9 && parseval < 1e-9 && comp < 1e-12 && decomp < 1e-9;
  report(2, ok,
         fmt("dft %.2g, round trip %.2g, parseval %.2g, ", dft, trip, parseval) +
             fmt("mask sum %.2g, decomposition %.2g over 100 seeds", comp, decomp));
}

void prop1_criterion() {
  double lo = 1e300, hi = 0;
  int used = 0;
  for (std::uint64_t seed = 0; used < 10 && seed < 100; ++seed) {
    const auto d = oracle::build_toy_dataset(8, 16, {1, 2}, {5, 6}, 1.0, seed);
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(0.2, 1.0);
    Eigen::VectorXd m(16);
    for (auto& v : m) v = u(gen);
    const auto fit = oracle::optimal_time_classifier(d, m);
    if (m.cwiseProduct(fit.w).norm() <= 1e-3) continue;
    const auto curve = oracle::ood_error_curve(d, fit, m, seed % 8, {1e2, 1e3});
    const double r = curve.error[1] / curve.error[0];
    lo = std::min(lo, r);
    hi = std::max(hi, r);
    ++used;
  }
  report(3, used == 10 && lo >= 99 && hi <= 101, fmt("error(1e3)/error(1e2) in [%.4f, %.4f] over %.0f instances", lo, hi, used));
}

void prop2_criterion() {
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto d = oracle::build_toy_dataset(8, 16, {1, 2}, {5, 6}, 1.0, seed);
    const auto m = oracle::disjoint_band_mask(d);
    const auto fit = oracle::optimal_spectral_classifier(d, m);
    for (double e : oracle::spectral_classifier_error(d, fit, m, seed % 8, {1, 1e2, 1e4, 1e6})) worst = std::max(worst, e);
  }
  // Negative control: same sizes, bands share bin 4, and the invariant band is
  // wide enough that the masked training fit is exact, as in the disjoint case.
  double min_ratio = 1e300, min_far = 1e300;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto d = oracle::build_toy_dataset(8, 16, {1, 2, 3, 4}, {4, 6}, 1.0, seed, false);
    const auto m = oracle::band_indicator(d.band1, 16);
    const auto err = oracle::spectral_classifier_error(d, oracle::optimal_spectral_classifier(d, m), m, seed % 8, {1, 1e3});
    min_ratio = std::min(min_ratio, err[1] / err[0]);
    min_far = std::min(min_far, err[1]);
  }
  report(4, worst < 1e-6 && min_ratio > 1e3 && min_far > 1.0,
         fmt("disjoint worst %.2g (< 1e-6); overlap min error(1e3)/error(1) %.3g (> 1e3), min error(1e3) %.3g",
             worst, min_ratio, min_far));
}

void metric_criterion() {
  std::mt19937_64 gen(99);
  std::normal_distribution<double> nd;
  double auc_err = 0, acc_err = 0, ce_err = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t n = 2 + gen() % 80, c = 2 + gen() % 4;
    std::vector<double> s(n), logits(n * c);
    std::vector<int> y(n), cls(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = inst % 2 ? nd(gen) : static_cast<double>(gen() % 5);
      y[i] = static_cast<int>(gen() % 2);
      cls[i] = static_cast<int>(gen() % c);
    }
    y[0] = 1;
    y[1] = 0;
    for (auto& v : logits) v = 3 * nd(gen);
    auc_err = std::max(auc_err, std::abs(auc(s, y) - oracle_ref::pairwise_auc(s, y)));
    acc_err = std::max(acc_err, std::abs(accuracy(logits, c, cls) - oracle_ref::naive_accuracy(logits, c, cls)));
    ad::Tape<double> tape;
    const double ce = softmax_cross_entropy(tape.constant(ad::Tensor<double>({n, c}, logits)), cls).item();
    ce_err = std::max(ce_err, std::abs(ce - oracle_ref::naive_cross_entropy(logits, c, cls)));
  }
  report(9, auc_err < 1e-12 && acc_err < 1e-9 && ce_err < 1e-9,
         fmt("auc %.2g (< 1e-12), acc %.2g, ce %.2g (< 1e-9) over 1000 instances", auc_err, acc_err, ce_err));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void generator_criterion() {
  bool sbm_ok = true;
  const std::size_t n = 200;
  std::vector<int> labels(n);
  for (std::size_t v = 0; v < n; ++v) labels[v] = static_cast<int>(v % 2);
  const double intra_pairs = 2 * (100.0 * 99 / 2), inter_pairs = 100.0 * 100;
  double worst_z = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto e = synth::sbm_snapshot(labels, {0.1, 0.1}, 0.01, seed);
    double intra = 0, inter = 0;
    for (const auto& x : e.edges) (labels[x.u] == labels[x.v] ? intra : inter) += 1;
    const double z1 = std::abs(intra - intra_pairs * 0.1) / std::sqrt(intra_pairs * 0.1 * 0.9);
    const double z2 = std::abs(inter - inter_pairs * 0.01) / std::sqrt(inter_pairs * 0.01 * 0.99);
    worst_z = std::max({worst_z, z1, z2});
  }
  sbm_ok = worst_z < 4;

  synth::NodeSynthConfig c;
  c.num_nodes = 5000;
  c.num_timestamps = 3;
  c.shift = 0.0;
  const auto z0 = synth::node_synth_latents(c);
  // Contingency table of class against variant frequency.
  const std::size_t k = c.num_classes;
  std::vector<double> tab(k * k, 0), row(k, 0), col(k, 0);
  for (std::size_t v = 0; v < c.num_nodes; ++v) {
    tab[static_cast<std::size_t>(z0.classes[v]) * k + z0.var_freq[v]] += 1;
    row[static_cast<std::size_t>(z0.classes[v])] += 1;
    col[z0.var_freq[v]] += 1;
  }
  double chi2 = 0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double e = row[i] * col[j] / double(c.num_nodes);
      chi2 += (tab[i * k + j] - e) * (tab[i * k + j] - e) / e;
    }
  const double crit = boost::math::quantile(boost::math::chi_squared(double((k - 1) * (k - 1))), 0.99);

  c.shift = 1.0;
  c.num_nodes = 500;
  const auto z1 = synth::node_synth_latents(c);
  bool aligned = true;
  for (std::size_t v = 0; v < c.num_nodes; ++v)
    if (z1.split[v] != 2 && z1.var_freq[v] != static_cast<std::size_t>(z1.classes[v])) aligned = false;

  synth::NodeSynthConfig d;
  d.num_nodes = 300;
  d.num_timestamps = 12;
  d.seed = 5;
  const auto dir = std::filesystem::temp_directory_path() / "sild_acceptance_det";
  std::filesystem::remove_all(dir);
  save_dataset(synth::gen_node_synthetic(d), dir / "a");
  save_dataset(synth::gen_node_synthetic(d), dir / "b");
  bool same = true;
  for (const auto& f : std::filesystem::directory_iterator(dir / "a"))
    same = same && slurp(f.path()) == slurp(dir / "b" / f.path().filename());
  std::filesystem::remove_all(dir);

  report(10, sbm_ok && chi2 < crit && aligned && same,
         fmt("sbm worst |z| %.2f (< 4); q=0 chi2 %.2f (< %.2f); ", worst_z, chi2, crit) +
             std::string("q=1 alignment ") + (aligned ? "exact" : "broken") + "; bytes " + (same ? "identical" : "differ"));
}

// Mean test accuracy per named variant and shift, over seeds.
struct TrendRuns {
  std::map<std::string, std::vector<double>> test;
  std::vector<double> seconds_per_seed;
};

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}

TrendRuns run_trends() {
  TrendRuns out;
  struct Variant {
    std::string name;
    double shift, lambda;
    bool no_inv, no_mask;
  };
  const std::vector<Variant> variants = {
      {"sild@0.8", 0.8, 1e-2, false, false}, {"erm@0.8", 0.8, 1e-2, true, true},
      {"nomask@0.8", 0.8, 1e-2, false, true}, {"lambda0@0.8", 0.8, 0.0, false, false},
      {"lambda1e-4@0.8", 0.8, 1e-4, false, false}, {"lambda1@0.8", 0.8, 1.0, false, false},
      {"sild@0.4", 0.4, 1e-2, false, false}, {"erm@0.4", 0.4, 1e-2, true, true}};
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    std::map<double, DynamicGraph> graphs;
    double seed_seconds = 0;
    for (const auto& v : variants) {
      const auto t0 = Clock::now();
      if (!graphs.count(v.shift)) {
        synth::NodeSynthConfig nc;
        nc.shift = v.shift;
        nc.seed = seed;
        graphs.emplace(v.shift, synth::gen_node_synthetic(nc));
      }
      TrainConfig tc;
      tc.aggregator = Aggregator::sum;
      tc.epochs = 100;
      tc.samples = 100;
      tc.seed = seed;
      tc.lambda = v.lambda;
      tc.no_invariance = v.no_inv;
      tc.no_mask = v.no_mask;
      const auto r = train<double>(graphs.at(v.shift), tc);
      const double secs = seconds_since(t0);
      // The per-seed budget covers the shift-0.8 SILD and ERM runs it compares.
      if (v.name == "sild@0.8" || v.name == "erm@0.8") seed_seconds += secs;
      out.test[v.name].push_back(r.report.test_metric);
      std::printf("  run %-15s seed %llu  val %.3f  test %.3f  best epoch %zu  %.1f s\n", v.name.c_str(),
                  static_cast<unsigned long long>(seed), r.report.val_metric, r.report.test_metric, r.report.best_epoch,
                  secs);
      std::fflush(stdout);
    }
    out.seconds_per_seed.push_back(seed_seconds);
  }
  // no_invariance is lambda = 0 by construction.
  out.test["noinv@0.8"] = out.test["lambda0@0.8"];
  return out;
}

void trend_criteria(const TrendRuns& r) {
  const double sild = mean(r.test.at("sild@0.8")), erm = mean(r.test.at("erm@0.8"));
  const double slowest = *std::max_element(r.seconds_per_seed.begin(), r.seconds_per_seed.end());
  report(5, sild - erm >= 0.03 && slowest < 900,
         fmt("SILD %.4f vs ERM %.4f: gap %.2f points (>= 3); slowest seed %.0f s (< 900)", sild, erm,
             100 * (sild - erm), slowest));

  const double sild_drop = mean(r.test.at("sild@0.4")) - sild, erm_drop = mean(r.test.at("erm@0.4")) - erm;
  report(6, sild_drop < erm_drop, fmt("drop 0.4 -> 0.8: SILD %.4f vs ERM %.4f", sild_drop, erm_drop));

  const double noinv = mean(r.test.at("noinv@0.8")), nomask = mean(r.test.at("nomask@0.8"));
  report(7, sild >= noinv && sild >= nomask,
         fmt("SILD %.4f vs no-invariance %.4f, no-mask %.4f", sild, noinv, nomask));

  const std::vector<std::pair<std::string, double>> sweep = {{"lambda0@0.8", 0.0},
                                                             {"lambda1e-4@0.8", 1e-4},
                                                             {"sild@0.8", 1e-2},
                                                             {"lambda1@0.8", 1.0}};
  std::size_t best = 0;
  std::string detail = "mean test by lambda:";
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    const double m = mean(r.test.at(sweep[i].first));
    detail += fmt(" %g=%.4f", sweep[i].second, m);
    if (m > mean(r.test.at(sweep[best].first))) best = i;
  }
  report(8, best == 1 || best == 2, detail + fmt("; best at %g", sweep[best].second));
}

}  // namespace

int main(int argc, char** argv) {
  bool strict = false, quick = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--strict") strict = true;
    else if (a == "--quick") quick = true;
    else {
      std::fprintf(stderr, "usage: acceptance [--strict] [--quick]\n");
      return 1;
    }
  }
  try {
    gradient_criterion();
    spectral_criterion();
    prop1_criterion();
    prop2_criterion();
    if (quick) {
      for (int id = 5; id <= 8; ++id) std::printf("criterion %2d: SKIP  --quick\n", id);
    } else {
      trend_criteria(run_trends());
    }
    metric_criterion();
    generator_criterion();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance: %s\n", e.what());
    return 1;
  }

  int hard = 0, trend = 0;
  for (const auto& l : lines) {
    if (l.passed) continue;
    (l.id >= 5 && l.id <= 8 ? trend : hard) += 1;
  }
  std::printf("summary: %zu passed, %d exactness failures, %d trend failures\n",
              lines.size() - static_cast<std::size_t>(hard + trend), hard, trend);
  if (trend > 0 && !strict) std::printf("note: trend failures do not affect the exit status without --strict\n");
  return hard > 0 || (strict && trend > 0) ? 1 : 0;
}
