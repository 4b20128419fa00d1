// Apache License, Version 2.0, refer to LICENSE.txt

#include "immgp/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "immgp/datagen.hpp"
#include "immgp/error.hpp"
#include "immgp/io.hpp"

namespace immgp::cli {

namespace {

using io::json;

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw IoError(std::string(what) + " '" + p.string() + "' does not exist");
}

fs::path chain_path(const fs::path& dir, int k, int chains) {
  return dir / (chains == 1 ? std::string("chain.jsonl") : "chain_" + std::to_string(k) + ".jsonl");
}

// Expands `--config FILE` into `--key=value` arguments placed directly after
// the subcommand, ahead of the explicit flags, so later flags win.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  if (args.size() < 2) return args;
  std::optional<fs::path> file;
  for (std::size_t i = 2; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      file = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (!file) return args;
  require_file(*file, "config file");
  std::ifstream in(*file);
  std::vector<std::string> extra;
  std::string line;
  for (int line_no = 1; std::getline(in, line); ++line_no) {
    const auto trim = [](std::string t) {
      const auto b = t.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      return t.substr(b, t.find_last_not_of(" \t\r") - b + 1);
    };
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidConfig(file->string() + ": line " + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    std::replace(key.begin(), key.end(), '_', '-');
    if (key.empty() || key == "config") {
      throw InvalidConfig(file->string() + ": line " + std::to_string(line_no) + ": bad key");
    }
    extra.push_back("--" + key + "=" + value);
  }
  args.insert(args.begin() + 2, extra.begin(), extra.end());
  return args;
}

fs::path diagnostics_path(const fs::path& dir, int k, int chains) {
  return dir / (chains == 1 ? std::string("diagnostics.csv") : "diagnostics_" + std::to_string(k) + ".csv");
}

void check_shapes(const Matrix& predicted, const Matrix& truth) {
  if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols()) {
    throw LengthMismatch("predictions are " + std::to_string(predicted.rows()) + "x" +
                         std::to_string(predicted.cols()) + " but truth is " +
                         std::to_string(truth.rows()) + "x" + std::to_string(truth.cols()));
  }
}

Hyperparams fit_hyperparams(const FitOptions& opt, const Dataset& train) {
  if (opt.hyperparams) return io::hyperparams_from_json(io::read_json(*opt.hyperparams));
  return preset_by_name(opt.preset, train.input_dim(), train.output_dim(), &train);
}

void fit_one(const Dataset& train, const Hyperparams& hp, SamplerConfig cfg, const fs::path& chain_file,
             const fs::path& diag_file, bool quiet, int chain_index) {
  io::ChainHeader header{train.input_dim(), train.output_dim(), hp, io::to_json(cfg)};
  io::ChainWriter chain(chain_file, header);
  io::DiagnosticsWriter diagnostics(diag_file);
  const int report_every = std::max(1, cfg.n_sweeps / 20);
  run(train, hp, cfg, [&](int sweep, const MixtureState& state, const SweepDiagnostics& d) {
    diagnostics.append(d);
    if (sweep >= cfg.burn_in) chain.append(state);
    if (!quiet && (sweep + 1) % report_every == 0) {
      std::fprintf(stderr, "[chain %d] sweep %d/%d  c=%zu  alpha=%.4g  log_joint=%.6g\n", chain_index,
                   sweep + 1, cfg.n_sweeps, d.num_components, d.alpha, d.log_joint);
    }
  });
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const InvalidConfig*>(&e) || dynamic_cast<const BadSplit*>(&e)) return kInvalidConfig;
  if (dynamic_cast<const CLI::Error*>(&e)) return kInvalidConfig;
  if (dynamic_cast<const IoError*>(&e)) return kIo;
  if (dynamic_cast<const NumericalError*>(&e)) return kNumerical;
  return 1;
}

double rmse(const Matrix& predicted, const Matrix& truth) {
  check_shapes(predicted, truth);
  if (truth.size() == 0) throw LengthMismatch("RMSE of an empty set is undefined");
  return std::sqrt((predicted - truth).squaredNorm() / static_cast<double>(truth.size()));
}

Vector rmse_per_output(const Matrix& predicted, const Matrix& truth) {
  check_shapes(predicted, truth);
  if (truth.rows() == 0) throw LengthMismatch("RMSE of an empty set is undefined");
  return ((predicted - truth).colwise().squaredNorm() / static_cast<double>(truth.rows()))
      .array()
      .sqrt()
      .transpose();
}

Matrix mean_baseline(const Dataset& train, const Matrix& xtest) {
  if (train.size() == 0) throw LengthMismatch("mean baseline needs training rows");
  const RowVector mean = train.Y.colwise().mean();
  return mean.replicate(xtest.rows(), 1);
}

Matrix linear_baseline(const Dataset& train, const Matrix& xtest) {
  if (xtest.cols() != train.input_dim()) throw LengthMismatch("linear baseline: input dimensions differ");
  Matrix design(train.size(), train.input_dim() + 1);
  design.col(0).setOnes();
  design.rightCols(train.input_dim()) = train.X;
  const Matrix coef = design.colPivHouseholderQr().solve(train.Y);
  Matrix test_design(xtest.rows(), xtest.cols() + 1);
  test_design.col(0).setOnes();
  test_design.rightCols(xtest.cols()) = xtest;
  return test_design * coef;
}

Metrics evaluate(const Matrix& predicted, const Dataset& test, const Dataset* train) {
  Metrics m;
  m.rmse = rmse(predicted, test.Y);
  m.per_output = rmse_per_output(predicted, test.Y);
  if (train != nullptr) {
    if (train->output_dim() != test.output_dim()) throw LengthMismatch("train and test output counts differ");
    m.mean_baseline = rmse(mean_baseline(*train, test.X), test.Y);
    m.linear_baseline = rmse(linear_baseline(*train, test.X), test.Y);
  }
  return m;
}

void cmd_generate(const GenerateOptions& opt) {
  if (opt.n < 1) throw InvalidConfig("--n must be >= 1");
  if (opt.preset != "benchmark") throw InvalidConfig("generate supports only the 'benchmark' preset");
  const Hyperparams hp = benchmark_preset(opt.d, opt.m);
  Rng root(opt.seed);
  Rng gen_rng = root.fork(0);
  const GeneratedSet gs = generate(opt.n, hp, gen_rng);

  Dataset train = gs.dataset;
  Dataset test{Matrix(0, opt.d), Matrix(0, opt.m)};
  std::vector<std::size_t> train_rows(opt.n);
  for (std::size_t i = 0; i < opt.n; ++i) train_rows[i] = i;
  std::vector<std::size_t> test_rows;
  if (opt.n_train && *opt.n_train != opt.n) {
    Split s = split(gs, *opt.n_train, root.fork(1).seed());
    train = std::move(s.train);
    test = std::move(s.test);
    train_rows = std::move(s.train_rows);
    test_rows = std::move(s.test_rows);
  }

  fs::create_directories(opt.out);
  io::write_dataset_csv(opt.out / "train.csv", train);
  io::write_dataset_csv(opt.out / "test.csv", test);
  io::write_json(opt.out / "truth.json",
                 json{{"state", io::to_json(gs.true_state)},
                      {"num_components", gs.true_state.num_components()},
                      {"train_rows", train_rows},
                      {"test_rows", test_rows}});
  io::write_json(opt.out / "manifest.json",
                 json{{"command", "generate"},
                      {"seed", opt.seed},
                      {"preset", opt.preset},
                      {"n", opt.n},
                      {"d", opt.d},
                      {"m", opt.m},
                      {"n_train", train.size()},
                      {"hyperparams", io::to_json(hp)}});
}

void cmd_fit(const FitOptions& opt) {
  require_file(opt.train, "training file");
  opt.sampler.validate();
  if (opt.chains < 1) throw InvalidConfig("--chains must be >= 1");
  const Dataset train = io::read_dataset_csv(opt.train);
  if (train.size() < 1) throw InvalidConfig("training file has no rows");
  if (train.output_dim() < 1) throw InvalidConfig("training file has no output columns");
  const Hyperparams hp = fit_hyperparams(opt, train);
  hp.validate();
  fs::create_directories(opt.out);

  std::vector<SamplerConfig> configs(static_cast<std::size_t>(opt.chains), opt.sampler);
  if (opt.chains > 1) {
    const Rng root(opt.sampler.seed);
    for (int k = 0; k < opt.chains; ++k) configs[static_cast<std::size_t>(k)].seed = root.fork(static_cast<std::uint64_t>(k)).seed();
  }
  if (opt.chains == 1) {
    fit_one(train, hp, configs[0], chain_path(opt.out, 0, 1), diagnostics_path(opt.out, 0, 1), opt.quiet, 0);
  } else {
    std::vector<std::exception_ptr> errors(configs.size());
    std::vector<std::thread> workers;
    for (int k = 0; k < opt.chains; ++k) {
      workers.emplace_back([&, k] {
        try {
          fit_one(train, hp, configs[static_cast<std::size_t>(k)], chain_path(opt.out, k, opt.chains),
                  diagnostics_path(opt.out, k, opt.chains), opt.quiet, k);
        } catch (...) {
          errors[static_cast<std::size_t>(k)] = std::current_exception();
        }
      });
    }
    for (auto& t : workers) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  json seeds = json::array();
  for (const auto& c : configs) seeds.push_back(c.seed);
  io::write_json(opt.out / "fit_manifest.json",
                 json{{"command", "fit"},
                      {"train", opt.train.string()},
                      {"preset", opt.hyperparams ? std::string("explicit") : opt.preset},
                      {"chains", opt.chains},
                      {"seeds", seeds},
                      {"sampler", io::to_json(opt.sampler)},
                      {"hyperparams", io::to_json(hp)}});
}

void cmd_predict(const PredictOptions& opt) {
  if (opt.chains.empty()) throw InvalidConfig("at least one --chain is required");
  require_file(opt.train, "training file");
  require_file(opt.test, "test file");
  const Dataset train = io::read_dataset_csv(opt.train);
  const Dataset test = io::read_dataset_csv(opt.test);

  std::vector<MixtureState> samples;
  Hyperparams hp;
  for (std::size_t k = 0; k < opt.chains.size(); ++k) {
    require_file(opt.chains[k], "chain file");
    io::ChainFile cf = io::read_chain(opt.chains[k]);
    if (cf.header.input_dim != train.input_dim() || cf.header.output_dim != train.output_dim()) {
      throw SchemaMismatch("chain '" + opt.chains[k].string() + "' has D=" +
                           std::to_string(cf.header.input_dim) + ", M=" + std::to_string(cf.header.output_dim) +
                           " but training data has D=" + std::to_string(train.input_dim()) +
                           ", M=" + std::to_string(train.output_dim()));
    }
    if (k == 0) hp = cf.header.hp;
    for (auto& s : cf.samples) samples.push_back(std::move(s));
  }
  if (test.input_dim() != train.input_dim()) {
    throw SchemaMismatch("test data has D=" + std::to_string(test.input_dim()) + " but the chain has D=" +
                         std::to_string(train.input_dim()));
  }
  if (test.output_dim() != 0 && test.output_dim() != train.output_dim()) {
    throw SchemaMismatch("test data has M=" + std::to_string(test.output_dim()) + " but the chain has M=" +
                         std::to_string(train.output_dim()));
  }
  if (samples.empty()) throw InvalidConfig("chain files hold no samples");

  Rng rng(opt.seed);
  const Predictor predictor(samples, train, hp, opt.mode, opt.mc_draws, rng);
  const Matrix predicted = predictor.predict_all(test.X);
  if (predictor.new_density() && test.size() > 0) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < test.size(); ++i) {
      worst = std::max(worst, predictor.new_density()->relative_std_error(test.X.row(i).transpose()));
    }
    std::fprintf(stderr, "new-component density: %zu prior draws, max relative std error %.3g\n",
                 opt.mc_draws, worst);
  }
  io::write_matrix_csv(opt.out, predicted, "y");
}

Metrics cmd_eval(const EvalOptions& opt) {
  require_file(opt.predictions, "predictions file");
  require_file(opt.test, "test file");
  const Matrix predicted = io::read_matrix_csv(opt.predictions, "y");
  const Dataset test = io::read_dataset_csv(opt.test);
  std::optional<Dataset> train;
  if (opt.train) {
    require_file(*opt.train, "training file");
    train = io::read_dataset_csv(*opt.train);
  }
  const Metrics m = evaluate(predicted, test, train ? &*train : nullptr);
  json j{{"rmse", m.rmse}, {"rmse_per_output", io::to_json(m.per_output)}, {"n_test", test.size()}};
  if (m.mean_baseline) j["mean_baseline_rmse"] = *m.mean_baseline;
  if (m.linear_baseline) j["linear_baseline_rmse"] = *m.linear_baseline;
  io::write_json(opt.out, j);
  return m;
}

int main(int argc, char** argv) {
  std::vector<std::string> args;
  try {
    args = expand_config(argc, argv);
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return exit_code_for(err);
  }
  std::string config_unused;
  const auto add_config_option = [&config_unused](CLI::App* sub) {
    sub->add_option("--config", config_unused, "Flat key=value file (keys are flag names); flags take precedence");
  };

  CLI::App app{"Infinite mixtures of multi-output Gaussian processes"};
  app.require_subcommand(1);

  GenerateOptions gen;
  std::size_t gen_train = 0;
  auto* g = app.add_subcommand("generate", "Draw a synthetic data set from the generative model");
  g->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  add_config_option(g);
  g->add_option("--n", gen.n, "Number of points")->capture_default_str()->check(CLI::PositiveNumber);
  g->add_option("--d", gen.d, "Input dimension")->capture_default_str()->check(CLI::PositiveNumber);
  g->add_option("--m", gen.m, "Output dimension")->capture_default_str()->check(CLI::PositiveNumber);
  auto* gen_train_opt = g->add_option("--train", gen_train, "Training rows; the rest go to test.csv");
  g->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  g->add_option("--preset", gen.preset, "Hyperparameter preset")->capture_default_str();
  g->add_option("--out", gen.out, "Output directory")->capture_default_str();

  FitOptions fit;
  auto* f = app.add_subcommand("fit", "Run the Gibbs sampler on a training set");
  f->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  add_config_option(f);
  f->add_option("--train", fit.train, "Training CSV")->required();
  f->add_option("--out", fit.out, "Output directory")->capture_default_str();
  f->add_option("--sweeps", fit.sampler.n_sweeps, "Total sweeps")->capture_default_str();
  f->add_option("--burn-in", fit.sampler.burn_in, "Sweeps discarded before samples are kept")->capture_default_str();
  f->add_option("--hmc-step", fit.sampler.hmc_step, "Leapfrog step size in log sigma0")->capture_default_str();
  f->add_option("--hmc-leapfrog", fit.sampler.hmc_leapfrog, "Leapfrog steps per trajectory")->capture_default_str();
  f->add_option("--mh-tries", fit.sampler.mh_tries_per_param, "MH tries per parameter per sweep")->capture_default_str();
  f->add_option("--alpha-step", fit.sampler.alpha_proposal_scale, "Log-scale random walk step for alpha")
      ->capture_default_str();
  f->add_option("--seed", fit.sampler.seed, "Random seed")->capture_default_str();
  f->add_option("--preset", fit.preset, "Hyperparameter preset (inference|benchmark)")->capture_default_str();
  f->add_option("--hyperparams", fit.hyperparams, "JSON file with explicit hyperparameters");
  f->add_option("--chains", fit.chains, "Independent chains run concurrently")->capture_default_str();
  f->add_flag("--quiet", fit.quiet, "No progress output");

  PredictOptions pred;
  std::string mode = "immgp1";
  auto* p = app.add_subcommand("predict", "Average predictions over a fitted chain");
  p->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  add_config_option(p);
  p->add_option("--chain", pred.chains, "Chain file(s); samples are pooled")
      ->required()
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  p->add_option("--train", pred.train, "Training CSV the chain was fitted to")->required();
  p->add_option("--test", pred.test, "Test CSV")->required();
  p->add_option("--out", pred.out, "Predictions CSV")->capture_default_str();
  p->add_option("--mode", mode, "immgp1 (existing components) or immgp2 (also a new one)")
      ->capture_default_str()
      ->check(CLI::IsMember({"immgp1", "immgp2"}));
  p->add_option("--mc-draws", pred.mc_draws, "Prior draws for the new-component input density")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  p->add_option("--seed", pred.seed, "Random seed")->capture_default_str();

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "RMSE of predictions against test outputs");
  e->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  add_config_option(e);
  e->add_option("--predictions", ev.predictions, "Predictions CSV")->required();
  e->add_option("--test", ev.test, "Test CSV with true outputs")->required();
  e->add_option("--train", ev.train, "Training CSV for the baselines");
  e->add_option("--out", ev.out, "Metrics JSON")->capture_default_str();

  try {
    std::reverse(args.begin(), args.end());
    args.pop_back();
    app.parse(std::move(args));
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kInvalidConfig;
  }

  try {
    if (*g) {
      if (*gen_train_opt) gen.n_train = gen_train;
      cmd_generate(gen);
    } else if (*f) {
      cmd_fit(fit);
    } else if (*p) {
      pred.mode = parse_prediction_mode(mode);
      cmd_predict(pred);
    } else if (*e) {
      const Metrics m = cmd_eval(ev);
      std::printf("rmse %.6g\n", m.rmse);
      if (m.mean_baseline) std::printf("mean baseline rmse %.6g\n", *m.mean_baseline);
      if (m.linear_baseline) std::printf("linear baseline rmse %.6g\n", *m.linear_baseline);
    }
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return exit_code_for(err);
  }
  return kOk;
}

}  // namespace immgp::cli
