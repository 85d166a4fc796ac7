// Command-line surface over the attribution library. Every subcommand is
// deterministic given its flags and seed, and echoes its configuration into
// the JSON it writes so a report is self-describing.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wtrak/wtrak.hpp"

namespace fs = std::filesystem;
using wtrak::Index;
using wtrak::Json;
using wtrak::Matrix;
using wtrak::Metric;
using wtrak::Vector;

namespace {

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  wtrak::require(!ec && fs::is_directory(dir), wtrak::Errc::io_error,
                 "output directory not writable: " + dir);
}

std::vector<double> parse_grid_list(const std::string& csv) {
  std::vector<double> grid;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const std::size_t comma = csv.find(',', start);
    const std::string field =
        csv.substr(start, comma == std::string::npos ? csv.npos : comma - start);
    wtrak::require(!field.empty(), wtrak::Errc::bad_spec,
                   "empty entry in epsilon grid");
    grid.push_back(wtrak::detail::parse_double(field));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return grid;
}

std::vector<double> geometric_grid(double lo, double hi, std::size_t count) {
  wtrak::require(lo > 0.0 && hi > lo && count >= 2, wtrak::Errc::bad_spec,
                 "geometric grid needs 0 < min < max and count >= 2");
  std::vector<double> grid(count);
  const double step = std::log(hi / lo) / double(count - 1);
  for (std::size_t k = 0; k < count; ++k)
    grid[k] = lo * std::exp(step * double(k));
  grid.back() = hi;
  return grid;
}

std::vector<std::pair<Metric, Matrix>> lipschitz_series(
    const wtrak::TrakEngine& engine, const wtrak::FeatureMatrix& test,
    const std::string& metric_flag) {
  std::vector<std::pair<Metric, Matrix>> out;
  if (metric_flag == "natural" || metric_flag == "both")
    out.emplace_back(Metric::natural,
                     engine.batch(test, 0.0, Metric::natural).lipschitz);
  if (metric_flag == "euclidean" || metric_flag == "both")
    out.emplace_back(Metric::euclidean,
                     engine.batch(test, 0.0, Metric::euclidean).lipschitz);
  wtrak::require(!out.empty(), wtrak::Errc::bad_spec,
                 "metric must be natural, euclidean or both");
  return out;
}

struct SynthArgs {
  std::string kind = "spectrum";
  std::uint64_t n = 0, d = 2, seed = 0;
  double kappa = 1.0, separation = 0.0, rate = 0.0;
  std::string out;
};

int run_synth(const SynthArgs& a) {
  wtrak::SynthSpec spec;
  if (a.kind == "spectrum") {
    spec.kind = wtrak::SynthKind::spectrum_controlled;
  } else if (a.kind == "twocluster") {
    spec.kind = wtrak::SynthKind::two_cluster_labels;
  } else {
    wtrak::raise(wtrak::Errc::bad_spec,
                 "kind must be 'spectrum' or 'twocluster'");
  }
  spec.n = a.n;
  spec.d = a.d;
  spec.kappa = a.kappa;
  spec.separation = a.separation;
  spec.corruption_rate = a.rate;
  spec.seed = a.seed;

  Json meta;
  meta["kind"] = a.kind;
  meta["n"] = spec.n;
  meta["d"] = spec.d;
  meta["seed"] = spec.seed;
  if (spec.kind == wtrak::SynthKind::spectrum_controlled) {
    meta["kappa"] = spec.kappa;
    meta["base_eigenvalue"] = wtrak::kSpectrumBaseEigenvalue;
    wtrak::save_features(a.out, wtrak::generate_spectrum_features(spec));
  } else {
    meta["separation"] = spec.separation;
    meta["corruption_rate"] = spec.corruption_rate;
    const wtrak::SynthDataset data = wtrak::generate_label_noise_dataset(spec);
    wtrak::save_features(a.out, data.features);
    meta["flip_count"] = data.flipped.size();
    meta["flipped"] = data.flipped;
  }
  wtrak::write_json_file(a.out + ".meta.json", meta);
  std::cout << meta.dump(2) << "\n";
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

struct SpectrumArgs {
  std::string features;
  double lambda = 1e-4;
  std::string out_dir = ".";
};

int run_spectrum(const SpectrumArgs& a) {
  ensure_out_dir(a.out_dir);
  const auto fm = wtrak::load_features(a.features);
  const auto model = wtrak::build_covariance(fm, a.lambda);
  const auto report = wtrak::spectrum_report(model);
  Json config{{"command", "spectrum"},
              {"features", a.features},
              {"lambda", a.lambda}};
  wtrak::write_json_file(join_path(a.out_dir, "spectrum.json"),
                         wtrak::spectrum_to_json(report, config));
  wtrak::write_spectrum_csv(join_path(a.out_dir, "spectrum.csv"), report);
  std::cout << "condition number " << report.condition_number
            << ", predicted reduction " << report.reduction_prediction << "\n";
  return 0;
}

struct TrakArgs {
  std::string features, test;
  double lambda = 1e-4;
  double epsilon = -1.0;  // <0: nominal scores only
  std::string metric = "both";
  std::string out_dir = ".";
};

int run_trak(const TrakArgs& a) {
  ensure_out_dir(a.out_dir);
  const auto train = wtrak::load_features(a.features);
  const auto test = wtrak::load_features(a.test);
  const wtrak::TrakEngine engine(train, a.lambda);
  const Matrix scores = engine.nominal_scores(test);
  const bool with_intervals = a.epsilon >= 0.0;

  Json config{{"command", "trak"},    {"features", a.features},
              {"test", a.test},       {"lambda", a.lambda},
              {"metric", a.metric}};
  if (with_intervals) config["epsilon"] = a.epsilon;

  Json j;
  j["config"] = config;
  j["n_train"] = static_cast<std::uint64_t>(train.n());
  j["n_test"] = static_cast<std::uint64_t>(test.n());
  j["si_train_max"] = engine.si_train_max();
  j["r_whit"] = engine.r_whit();
  j["r_euc"] = engine.r_euc();
  j["score_min"] = scores.minCoeff();
  j["score_max"] = scores.maxCoeff();
  j["score_mean"] = scores.mean();
  Json si = Json::array();
  for (const auto& rec : engine.test_self_influence(test))
    si.push_back(Json{{"id", rec.id}, {"raw", rec.raw}, {"capped", rec.capped}});
  j["test_self_influence"] = std::move(si);
  wtrak::write_json_file(join_path(a.out_dir, "trak.json"), j);

  std::optional<wtrak::BatchIntervals> nat, euc;
  if (with_intervals) {
    if (a.metric == "natural" || a.metric == "both")
      nat = engine.batch(test, a.epsilon, Metric::natural);
    if (a.metric == "euclidean" || a.metric == "both")
      euc = engine.batch(test, a.epsilon, Metric::euclidean);
    wtrak::require(nat || euc, wtrak::Errc::bad_spec,
                   "metric must be natural, euclidean or both");
  }
  std::string csv = "test_id,train_id,score";
  if (nat) csv += ",natural_lo,natural_hi";
  if (euc) csv += ",euclidean_lo,euclidean_hi";
  csv += '\n';
  for (Index t = 0; t < test.n(); ++t)
    for (Index i = 0; i < train.n(); ++i) {
      csv += test.ids[std::size_t(t)] + "," + train.ids[std::size_t(i)] + "," +
             wtrak::detail::format_double(scores(t, i));
      if (nat) {
        const auto iv = nat->at(t, i);
        csv += "," + wtrak::detail::format_double(iv.lo) + "," +
               wtrak::detail::format_double(iv.hi);
      }
      if (euc) {
        const auto iv = euc->at(t, i);
        csv += "," + wtrak::detail::format_double(iv.lo) + "," +
               wtrak::detail::format_double(iv.hi);
      }
      csv += '\n';
    }
  wtrak::write_text_file(join_path(a.out_dir, "trak.csv"), csv);
  std::cout << "scored " << test.n() << " x " << train.n() << " pairs\n";
  return 0;
}

struct CertifyArgs {
  std::string features, test;
  double lambda = 1e-4;
  std::string grid_list;
  std::vector<double> grid_geom;  // min, max, count
  std::string metric = "both";
  std::uint64_t pair_budget = 2'000'000;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string out_dir = ".";
};

int run_certify(const CertifyArgs& a) {
  ensure_out_dir(a.out_dir);
  wtrak::require(a.grid_list.empty() != a.grid_geom.empty(),
                 wtrak::Errc::bad_spec,
                 "give exactly one of --grid or --grid-geom");
  std::vector<double> grid;
  if (!a.grid_list.empty()) {
    grid = parse_grid_list(a.grid_list);
  } else {
    wtrak::require(a.grid_geom.size() == 3, wtrak::Errc::bad_spec,
                   "--grid-geom takes min,max,count");
    grid = geometric_grid(a.grid_geom[0], a.grid_geom[1],
                          static_cast<std::size_t>(a.grid_geom[2]));
  }

  const auto train = wtrak::load_features(a.features);
  const auto test = wtrak::load_features(a.test);
  const wtrak::TrakEngine engine(train, a.lambda);
  const Matrix nominal = engine.nominal_scores(test);
  const auto lips = lipschitz_series(engine, test, a.metric);
  const auto report = wtrak::certification_frontier(
      nominal, lips, grid, a.pair_budget, a.seed, a.threads);

  Json config{{"command", "certify"},  {"features", a.features},
              {"test", a.test},        {"lambda", a.lambda},
              {"metric", a.metric},    {"pair_budget", a.pair_budget},
              {"seed", a.seed}};
  wtrak::write_json_file(join_path(a.out_dir, "frontier.json"),
                         wtrak::frontier_to_json(report, config));
  wtrak::write_frontier_csv(join_path(a.out_dir, "frontier.csv"), report);

  if (a.metric == "both") {
    const auto spectrum = wtrak::spectrum_report(engine.model());
    const auto table =
        wtrak::compare_metrics(report, spectrum.reduction_prediction);
    wtrak::write_json_file(join_path(a.out_dir, "comparison.json"),
                           wtrak::comparison_to_json(table));
    std::cout << table.to_text();
  } else {
    std::cout << "frontier over " << grid.size() << " radii written\n";
  }
  return 0;
}

struct WrifArgs {
  std::string data, test;
  std::string loss = "logistic";
  double reg = 1e-2;
  double epsilon = -1.0;  // <0: use the transport bound diam/n
  double y_weight = 1.0;
  bool loo_check = false;
  std::uint64_t pairs_sample = 0;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string out_dir = ".";
};

int run_wrif(const WrifArgs& a) {
  ensure_out_dir(a.out_dir);
  const auto data = wtrak::load_features(a.data);
  const auto test = wtrak::load_features(a.test);
  wtrak::require(test.has_labels(), wtrak::Errc::bad_labels,
                 "test file must carry labels (loss evaluation needs y)");

  wtrak::ConvexLossSpec spec;
  spec.kind = a.loss == "ridge" ? wtrak::LossKind::ridge_regression
                                : wtrak::LossKind::l2_logistic_regression;
  wtrak::require(a.loss == "ridge" || a.loss == "logistic",
                 wtrak::Errc::bad_spec, "loss must be ridge or logistic");
  spec.reg_strength = a.reg;
  spec.feature_dim = data.d();

  const auto fit = wtrak::fit_convex(data, spec, a.y_weight, a.data);
  const double bound = fit.diameter / double(fit.n());
  const double epsilon = a.epsilon >= 0.0 ? a.epsilon : bound;

  const Index n = fit.n();
  const Index m = test.n();
  Matrix nominal(m, n), lipschitz(m, n);
  std::vector<wtrak::DataPoint> test_points(static_cast<std::size_t>(m));
  for (Index t = 0; t < m; ++t)
    test_points[std::size_t(t)] =
        wtrak::DataPoint{test.values.row(t).transpose(), (*test.labels)[t]};
  wtrak::parallel_for(std::size_t(m), a.threads, [&](std::size_t t) {
    for (Index i = 0; i < n; ++i) {
      const auto iv = wtrak::wrif_interval(fit, i, test_points[t], epsilon,
                                           a.pairs_sample, a.seed);
      nominal(Index(t), i) = iv.nominal;
      lipschitz(Index(t), i) = iv.lipschitz;
    }
  });

  Json j;
  j["config"] = Json{{"command", "wrif"},
                     {"data", a.data},
                     {"test", a.test},
                     {"loss", a.loss},
                     {"reg", a.reg},
                     {"epsilon", epsilon},
                     {"y_weight", a.y_weight},
                     {"ground_metric", "euclidean_on_(x,y_weight*y)"},
                     {"pairs_sample", a.pairs_sample},
                     {"seed", a.seed}};
  j["diameter"] = fit.diameter;
  j["loo_wasserstein_bound"] = bound;
  j["lipschitz_estimated"] = a.pairs_sample > 0;
  j["test_ids"] = test.ids;
  j["train_ids"] = data.ids;
  j["nominal"] = wtrak::matrix_to_json(nominal);
  j["lipschitz"] = wtrak::matrix_to_json(lipschitz);

  if (a.loo_check) {
    const auto cov = wtrak::coverage_check(data, spec, epsilon, test_points,
                                           a.y_weight, a.threads);
    j["loo"] = Json{{"epsilon", cov.epsilon},
                    {"coverage", cov.fraction},
                    {"pairs", cov.pairs},
                    {"sign_agreement", cov.sign_agreement}};
    std::cout << "loo coverage " << cov.fraction << " over " << cov.pairs
              << " pairs\n";
  }
  wtrak::write_json_file(join_path(a.out_dir, "wrif.json"), j);
  std::cout << "intervals for " << m << " x " << n << " pairs at epsilon "
            << epsilon << "\n";
  return 0;
}

struct AnomalyArgs {
  std::uint64_t n = 2000, d = 2, seed = 0;
  double separation = 6.0, rate = 0.1;
  double reg = 1e-2, lambda = 1e-4;
  std::string out_dir = ".";
};

int run_anomaly(const AnomalyArgs& a) {
  ensure_out_dir(a.out_dir);
  wtrak::SynthSpec spec;
  spec.kind = wtrak::SynthKind::two_cluster_labels;
  spec.n = a.n;
  spec.d = a.d;
  spec.separation = a.separation;
  spec.corruption_rate = a.rate;
  spec.seed = a.seed;
  const auto run = wtrak::label_noise_experiment(spec, a.reg, a.lambda);

  Json config{{"command", "anomaly"}, {"n", a.n},
              {"d", a.d},             {"separation", a.separation},
              {"corruption_rate", a.rate}, {"seed", a.seed},
              {"reg", a.reg},         {"lambda", a.lambda}};
  wtrak::write_json_file(join_path(a.out_dir, "anomaly.json"),
                         wtrak::anomaly_to_json(run.report, config));
  wtrak::write_curve_csv(join_path(a.out_dir, "roc.csv"), "fpr,tpr",
                         wtrak::roc_points(run.si, run.corrupted));
  wtrak::write_curve_csv(join_path(a.out_dir, "pr.csv"), "recall,precision",
                         wtrak::pr_points(run.si, run.corrupted));
  std::cout << "auroc " << run.report.auroc << ", mean separation "
            << run.report.mean_separation << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"certified robust data attribution"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* cmd_synth = app.add_subcommand("synth", "generate synthetic fixtures");
  cmd_synth->add_option("--kind", synth.kind, "spectrum | twocluster");
  cmd_synth->add_option("--n", synth.n, "rows")->required();
  cmd_synth->add_option("--d", synth.d, "feature dimension");
  cmd_synth->add_option("--kappa", synth.kappa, "target condition number");
  cmd_synth->add_option("--separation", synth.separation, "cluster separation");
  cmd_synth->add_option("--rate", synth.rate, "label corruption rate");
  cmd_synth->add_option("--seed", synth.seed, "generator seed");
  cmd_synth->add_option("--out", synth.out, "output file (.csv or binary)")
      ->required();

  SpectrumArgs spectrum;
  auto* cmd_spectrum =
      app.add_subcommand("spectrum", "covariance spectrum diagnostics");
  cmd_spectrum->add_option("--features", spectrum.features)->required();
  cmd_spectrum->add_option("--lambda", spectrum.lambda, "ridge added to Q");
  cmd_spectrum->add_option("--out-dir", spectrum.out_dir);

  TrakArgs trak;
  auto* cmd_trak = app.add_subcommand("trak", "attribution scores / intervals");
  cmd_trak->add_option("--features", trak.features)->required();
  cmd_trak->add_option("--test", trak.test)->required();
  cmd_trak->add_option("--lambda", trak.lambda);
  cmd_trak->add_option("--epsilon", trak.epsilon, "interval radius");
  cmd_trak->add_option("--metric", trak.metric, "natural | euclidean | both");
  cmd_trak->add_option("--out-dir", trak.out_dir);

  CertifyArgs certify;
  auto* cmd_certify =
      app.add_subcommand("certify", "ranking certification frontier");
  cmd_certify->add_option("--features", certify.features)->required();
  cmd_certify->add_option("--test", certify.test)->required();
  cmd_certify->add_option("--lambda", certify.lambda);
  cmd_certify->add_option("--grid", certify.grid_list,
                          "comma-separated epsilon grid");
  cmd_certify->add_option("--grid-geom", certify.grid_geom,
                          "min,max,count geometric grid")
      ->expected(3)
      ->delimiter(',');
  cmd_certify->add_option("--metric", certify.metric);
  cmd_certify->add_option("--pair-budget", certify.pair_budget);
  cmd_certify->add_option("--seed", certify.seed);
  cmd_certify->add_option("--threads", certify.threads);
  cmd_certify->add_option("--out-dir", certify.out_dir);

  WrifArgs wrif;
  auto* cmd_wrif =
      app.add_subcommand("wrif", "robust influence intervals, convex models");
  cmd_wrif->add_option("--data", wrif.data)->required();
  cmd_wrif->add_option("--test", wrif.test)->required();
  cmd_wrif->add_option("--loss", wrif.loss, "ridge | logistic");
  cmd_wrif->add_option("--reg", wrif.reg, "regularization strength");
  cmd_wrif->add_option("--epsilon", wrif.epsilon,
                       "radius; defaults to diam/n");
  cmd_wrif->add_option("--y-weight", wrif.y_weight,
                       "label weight in the ground metric");
  cmd_wrif->add_flag("--loo-check", wrif.loo_check,
                     "run the leave-one-out coverage oracle");
  cmd_wrif->add_option("--pairs-sample", wrif.pairs_sample,
                       "pair budget for the Lipschitz estimate (0 = exact)");
  cmd_wrif->add_option("--seed", wrif.seed);
  cmd_wrif->add_option("--threads", wrif.threads);
  cmd_wrif->add_option("--out-dir", wrif.out_dir);

  AnomalyArgs anomaly;
  auto* cmd_anomaly =
      app.add_subcommand("anomaly", "label-noise detection experiment");
  cmd_anomaly->add_option("--n", anomaly.n);
  cmd_anomaly->add_option("--d", anomaly.d);
  cmd_anomaly->add_option("--separation", anomaly.separation);
  cmd_anomaly->add_option("--rate", anomaly.rate);
  cmd_anomaly->add_option("--seed", anomaly.seed);
  cmd_anomaly->add_option("--reg", anomaly.reg);
  cmd_anomaly->add_option("--lambda", anomaly.lambda);
  cmd_anomaly->add_option("--out-dir", anomaly.out_dir);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (cmd_synth->parsed()) return run_synth(synth);
    if (cmd_spectrum->parsed()) return run_spectrum(spectrum);
    if (cmd_trak->parsed()) return run_trak(trak);
    if (cmd_certify->parsed()) return run_certify(certify);
    if (cmd_wrif->parsed()) return run_wrif(wrif);
    if (cmd_anomaly->parsed()) return run_anomaly(anomaly);
  } catch (const wtrak::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return wtrak::exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
