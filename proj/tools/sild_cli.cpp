#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sild/sild.hpp"

namespace fs = std::filesystem;
using namespace sild;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kDiverged = 2;
constexpr int kSelftestFailed = 3;

std::string num(double x) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, r.ptr);
}

void write_json(const fs::path& p, const nlohmann::ordered_json& j) {
  std::ofstream out(p);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << j.dump(2) << "\n";
}

// Options shared by train, eval and sweep-lambda. Anything given on the
// command line wins over the config file.
struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, shift, dataset;
  std::vector<std::string> ablate;
  std::optional<int> precision;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "RunConfig JSON file");
    app->add_option("--seed", seed, "Random seed");
    app->add_option("--out", out, "Output directory");
    app->add_option("--shift", shift, "Shift label recorded in results.csv")
        ->check(CLI::IsMember({"0", "0.4", "0.6", "0.8"}));
    app->add_option("--dataset", dataset, "Dataset directory");
    app->add_option("--ablate", ablate, "Ablation (repeatable)")
        ->check(CLI::IsMember({"no-invariance", "no-mask"}));
    app->add_option("--precision", precision, "Floating point width")->check(CLI::IsMember({32, 64}));
  }

  RunConfig resolve() const {
    RunConfig r = config.empty() ? RunConfig{} : load_run_config(config);
    if (seed) r.train.seed = *seed;
    if (out) r.out = *out;
    if (shift) r.shift = *shift;
    if (dataset) r.dataset = *dataset;
    if (precision) r.precision = *precision;
    for (const auto& a : ablate) {
      if (a == "no-invariance") r.train.no_invariance = true;
      if (a == "no-mask") r.train.no_mask = true;
    }
    if (r.train.no_invariance) r.train.lambda = 0.0;
    if (r.precision != 32 && r.precision != 64) throw ConfigError("precision must be 32 or 64");
    if (r.dataset.empty()) throw ConfigError("no dataset given (--dataset or \"dataset\" in the config)");
    if (r.dataset_name.empty()) r.dataset_name = fs::path(r.dataset).lexically_normal().filename().string();
    if (r.dataset_name.empty()) r.dataset_name = fs::path(r.dataset).lexically_normal().parent_path().filename().string();
    validate(r.train);
    return r;
  }
};

const char* kResultsHeader = "dataset,task,shift,lambda,seed,split,metric,epochs,wallclock_s\n";

void append_results(std::ostream& out, const RunConfig& r, double lambda, std::uint64_t seed,
                    const MetricsReport& rep) {
  for (const auto& [split, metric] : {std::pair{"val", rep.val_metric}, std::pair{"test", rep.test_metric}})
    out << r.dataset_name << ',' << to_string(r.train.task) << ',' << r.shift << ',' << num(lambda) << ',' << seed
        << ',' << split << ',' << num(metric) << ',' << rep.epochs.size() << ',' << num(rep.wallclock_s) << '\n';
}

void write_log(const fs::path& p, const MetricsReport& rep) {
  std::ofstream out(p);
  for (const auto& e : rep.epochs) {
    nlohmann::ordered_json j{{"epoch", e.epoch},
                             {"loss", e.loss},
                             {"loss_inv_task", e.loss_inv_task},
                             {"loss_var_task", e.loss_var_task},
                             {"loss_invariance", e.loss_invariance},
                             {"train_metric", e.train_metric},
                             {"val_metric", e.val_metric},
                             {"test_metric", e.test_metric}};
    out << j.dump() << '\n';
  }
}

template <typename T>
int run_train(const RunConfig& r) {
  const auto g = load_dataset(r.dataset);
  fs::create_directories(r.out);
  const fs::path dir(r.out);
  write_json(dir / "resolved_config.json", to_json(r));
  const auto res = train<T>(g, r.train);
  write_log(dir / "train_log.jsonl", res.report);
  std::ofstream csv(dir / "results.csv");
  csv << kResultsHeader;
  append_results(csv, r, r.train.lambda, r.train.seed, res.report);
  save_checkpoint(dir / "model.ckpt", res.params, {r.precision, std::to_string(config_hash(r)), to_json(r)});
  std::cout << "best epoch " << res.report.best_epoch << ": val " << num(res.report.val_metric) << ", test "
            << num(res.report.test_metric) << "\n";
  return kOk;
}

template <typename T>
int run_eval(const fs::path& ckpt, const RunConfig& r, const std::string& split) {
  const auto params = load_checkpoint<T>(ckpt);
  const auto g = load_dataset(r.dataset);
  std::cout << "split,metric\n" << split << ',' << num(evaluate(params, g, r.train, split)) << '\n';
  return kOk;
}

template <typename T>
int run_sweep(const RunConfig& r, const std::vector<double>& lambdas, const std::vector<std::uint64_t>& seeds,
              std::size_t jobs) {
  const auto g = load_dataset(r.dataset);
  fs::create_directories(r.out);
  const fs::path dir(r.out);
  write_json(dir / "resolved_config.json", to_json(r));
  const auto rows = lambda_sweep<T>(g, r.train, lambdas, seeds, jobs);
  std::ofstream csv(dir / "results.csv");
  csv << kResultsHeader;
  for (const auto& row : rows) append_results(csv, r, row.lambda, row.seed, row.report);
  std::ofstream sum(dir / "sweep_summary.csv");
  sum << "lambda,seeds,val_mean,val_std,test_mean,test_std\n";
  for (double l : lambdas) {
    std::vector<double> val, test;
    for (const auto& row : rows)
      if (row.lambda == l) {
        val.push_back(row.report.val_metric);
        test.push_back(row.report.test_metric);
      }
    auto stats = [](const std::vector<double>& v) {
      const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      double s = 0.0;
      for (double x : v) s += (x - m) * (x - m);
      return std::pair{m, std::sqrt(s / static_cast<double>(v.size()))};
    };
    const auto [vm, vs] = stats(val);
    const auto [tm, ts] = stats(test);
    sum << num(l) << ',' << val.size() << ',' << num(vm) << ',' << num(vs) << ',' << num(tm) << ',' << num(ts) << '\n';
    std::cout << "lambda " << num(l) << ": val " << num(vm) << " +- " << num(vs) << ", test " << num(tm) << " +- "
              << num(ts) << "\n";
  }
  return kOk;
}

void write_curve(const fs::path& p, const std::vector<double>& alpha, const std::vector<double>& err) {
  std::ofstream out(p);
  out << "alpha,error\n";
  for (std::size_t i = 0; i < alpha.size(); ++i) out << num(alpha[i]) << ',' << num(err[i]) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral invariant learning for dynamic graphs"};
  app.require_subcommand(1);

  auto* gen_node = app.add_subcommand("gen-node-synthetic", "Generate the node classification benchmark");
  synth::NodeSynthConfig nc;
  std::string gen_out = "node_synthetic";
  gen_node->add_option("--out", gen_out, "Output dataset directory");
  gen_node->add_option("--seed", nc.seed);
  gen_node->add_option("--shift", nc.shift, "Shift level q on train/val nodes")->check(CLI::Range(0.0, 1.0));
  gen_node->add_option("--nodes", nc.num_nodes);
  gen_node->add_option("--timestamps", nc.num_timestamps);
  gen_node->add_option("--noise", nc.p_noise, "Noise edge density");

  auto* gen_link = app.add_subcommand("gen-link-synthetic", "Generate the link prediction benchmark");
  synth::LinkSynthConfig lc;
  std::string link_base;
  gen_link->add_option("--out", gen_out, "Output dataset directory");
  gen_link->add_option("--base", link_base, "Base dataset directory (default: synthetic community graph)");
  gen_link->add_option("--seed", lc.seed);
  gen_link->add_option("--shift", lc.shift, "Shift level on train/val targets")->check(CLI::Range(0.0, 1.0));
  gen_link->add_option("--test-shift", lc.test_shift)->check(CLI::Range(0.0, 1.0));
  gen_link->add_option("--nodes", lc.num_nodes);
  gen_link->add_option("--timestamps", lc.num_timestamps);

  auto* train_cmd = app.add_subcommand("train", "Train one model and write metrics and a checkpoint");
  Common train_opts;
  train_opts.attach(train_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  std::string ckpt, split = "test";
  std::optional<std::string> eval_dataset;
  eval_cmd->add_option("--checkpoint", ckpt)->required();
  eval_cmd->add_option("--dataset", eval_dataset, "Dataset directory (default: the one trained on)");
  eval_cmd->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}));

  auto* sweep_cmd = app.add_subcommand("sweep-lambda", "Train over a grid of lambda values and seeds");
  Common sweep_opts;
  sweep_opts.attach(sweep_cmd);
  std::vector<double> lambdas{0.0, 1e-4, 1e-2, 1.0};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t jobs = 1;
  sweep_cmd->add_option("--lambdas", lambdas)->delimiter(',');
  sweep_cmd->add_option("--seeds", seeds)->delimiter(',');
  sweep_cmd->add_option("--jobs", jobs)->check(CLI::PositiveNumber);

  auto* probe = app.add_subcommand("probe-motivation", "Write OOD error curves of the two closed-form classifiers");
  std::string probe_out = "probe";
  std::uint64_t probe_seed = 0;
  probe->add_option("--out", probe_out);
  probe->add_option("--seed", probe_seed);

  auto* self = app.add_subcommand("selftest", "Run the built-in property checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_node) {
      fs::create_directories(gen_out);
      const auto g = synth::gen_node_synthetic(nc);
      save_dataset(g, gen_out);
      write_json(fs::path(gen_out) / "gen_config.json", synth::to_json(nc));
      std::cout << "wrote " << g.num_nodes() << " nodes, " << g.total_edges() << " edges to " << gen_out << "\n";
    } else if (*gen_link) {
      const auto base = link_base.empty() ? synth::synthetic_link_base(lc) : load_dataset(link_base);
      const auto res = synth::gen_link_synthetic(base, lc);
      fs::create_directories(gen_out);
      save_dataset(res.graph, gen_out);
      auto meta = synth::to_json(lc);
      meta["base"] = link_base;
      meta["inner_auc"] = res.inner_auc;
      write_json(fs::path(gen_out) / "gen_config.json", meta);
      std::cout << "wrote " << res.graph.num_nodes() << " nodes, " << res.graph.total_edges() << " edges to "
                << gen_out << "\n";
    } else if (*train_cmd) {
      const auto r = train_opts.resolve();
      return r.precision == 32 ? run_train<float>(r) : run_train<double>(r);
    } else if (*eval_cmd) {
      const auto header = read_checkpoint_header(ckpt);
      auto r = run_config_from_json(header.config);
      if (eval_dataset) r.dataset = *eval_dataset;
      return header.precision == 32 ? run_eval<float>(ckpt, r, split) : run_eval<double>(ckpt, r, split);
    } else if (*sweep_cmd) {
      const auto r = sweep_opts.resolve();
      return r.precision == 32 ? run_sweep<float>(r, lambdas, seeds, jobs) : run_sweep<double>(r, lambdas, seeds, jobs);
    } else if (*probe) {
      fs::create_directories(probe_out);
      const std::vector<double> alphas{1, 10, 1e2, 1e3, 1e4, 1e5, 1e6};
      const auto d = oracle::build_toy_dataset(16, 16, {1, 2}, {5, 6}, 1.0, probe_seed);
      const Eigen::VectorXd ones = Eigen::VectorXd::Ones(16);
      const auto curve = oracle::ood_error_curve(d, oracle::optimal_time_classifier(d, ones), ones, 0, alphas);
      write_curve(fs::path(probe_out) / "prop1_curve.csv", curve.alpha, curve.error);
      const auto m = oracle::disjoint_band_mask(d);
      const auto errs =
          oracle::spectral_classifier_error(d, oracle::optimal_spectral_classifier(d, m), m, 0, alphas);
      write_curve(fs::path(probe_out) / "prop2_curve.csv", alphas, errs);
      std::cout << "time-domain error at alpha=1e6: " << num(curve.error.back())
                << "; masked spectral error: " << num(errs.back()) << "\n";
    } else if (*self) {
      bool ok = true;
      for (const auto& c : selftest::run_all()) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " (worst " << num(c.worst) << ", tolerance "
                  << num(c.tolerance) << ")\n";
        ok = ok && c.passed;
      }
      return ok ? kOk : kSelftestFailed;
    }
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDiverged;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
  return kOk;
}
