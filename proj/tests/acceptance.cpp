// Apache License, Version 2.0, refer to LICENSE.txt
//
// Acceptance suite: one PASS/FAIL line per criterion.
//   immgp_acceptance [--only k] [--workdir DIR] [--cli PATH]

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "helpers.hpp"
#include "immgp/cli.hpp"
#include "immgp/datagen.hpp"
#include "immgp/distributions.hpp"
#include "immgp/gibbs.hpp"
#include "immgp/io.hpp"
#include "immgp/predict.hpp"
#include "oracles.hpp"

using namespace immgp;
namespace fs = std::filesystem;

namespace {

struct Report {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path workdir;
  fs::path cli;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Standard error of a correlated series by non-overlapping batch means.
double batch_means_se(const std::vector<double>& xs, std::size_t batches) {
  const std::size_t len = xs.size() / batches;
  oracle::Moments m;
  for (std::size_t b = 0; b < batches; ++b) {
    double s = 0.0;
    for (std::size_t k = 0; k < len; ++k) s += xs[b * len + k];
    m.add(s / static_cast<double>(len));
  }
  return m.std_error();
}

std::vector<std::size_t> canonical(const std::vector<std::size_t>& z) {
  std::map<std::size_t, std::size_t> relabel;
  std::vector<std::size_t> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    auto it = relabel.find(z[i]);
    if (it == relabel.end()) it = relabel.emplace(z[i], relabel.size()).first;
    out[i] = it->second;
  }
  return out;
}

Dataset random_dataset(Eigen::Index n, Eigen::Index d, Eigen::Index m, Rng& rng) {
  return Dataset{oracle::random_matrix(n, d, rng), oracle::random_matrix(n, m, rng)};
}

Component random_component(Eigen::Index d, Eigen::Index m, Rng& rng) {
  Component c;
  c.mu = oracle::random_vector(d, rng);
  c.R = oracle::random_spd(d, rng);
  c.sigma0 = std::exp(0.5 * rng.normal());
  c.K = oracle::random_spd(m, rng);
  c.w = (0.3 * oracle::random_vector(d, rng)).array().exp();
  c.noise = (0.1 + 0.4 * oracle::random_vector(m, rng).array().abs()).matrix();
  return c;
}

// ln p(y | x) for the members in `rows` under component c, from the dense entrywise covariance.
double block_log_marginal(const Component& c, const Dataset& data, const std::vector<std::size_t>& rows) {
  const Matrix xr = gather_rows(data.X, rows);
  const Matrix yr = gather_rows(data.Y, rows);
  const Vector y = stack_outputs(yr);
  return oracle::gauss_logpdf(y, Vector::Zero(y.size()), oracle::sigma_entrywise(c, xr));
}

// ---------------------------------------------------------------------------

Report criterion1(const Context&) {
  const int draws = 100000;
  double worst = 0.0;
  int checks = 0;
  for (int inst = 0; inst < 10; ++inst) {
    Rng rng = Rng(101).fork(static_cast<std::uint64_t>(inst));
    const Eigen::Index d = 1 + inst % 3;
    const std::size_t members = 1 + static_cast<std::size_t>(inst % 5);
    Hyperparams hp = testing::tame_hyperparams(d, 1);
    hp.mu0 = oracle::random_vector(d, rng);
    hp.R0 = oracle::random_spd(d, rng);
    hp.W0 = oracle::random_spd(d, rng) / static_cast<double>(d + 2);
    hp.nu0 = static_cast<double>(d) + rng.uniform() * 3.0;

    const Eigen::Index n = static_cast<Eigen::Index>(members) + 2;
    const Dataset data = random_dataset(n, d, 1, rng);
    MixtureState s;
    s.assignments.assign(static_cast<std::size_t>(n), 0);
    s.assignments[members] = 1;
    s.assignments[members + 1] = 1;
    s.components = {random_component(d, 1, rng), random_component(d, 1, rng)};
    const Component& c = s.components[0];

    Vector sum = Vector::Zero(d);
    Matrix scatter = Matrix::Zero(d, d);
    for (std::size_t j = 0; j < members; ++j) {
      const Vector x = data.X.row(static_cast<Eigen::Index>(j)).transpose();
      sum += x;
      scatter += (x - c.mu) * (x - c.mu).transpose();
    }
    const Matrix mu_cov = oracle::inverse(hp.R0 + static_cast<double>(members) * c.R);
    const Vector mu_mean = mu_cov * (hp.R0 * hp.mu0 + c.R * sum);
    const Matrix scale = oracle::inverse(oracle::inverse(hp.W0) + scatter);
    const double dof = hp.nu0 + static_cast<double>(members);
    const Matrix r_mean = dof * scale;

    std::vector<oracle::Moments> mu_first(static_cast<std::size_t>(d)), mu_second(static_cast<std::size_t>(d));
    std::vector<oracle::Moments> r_first(static_cast<std::size_t>(d * d));
    Rng mu_rng = rng.fork(1);
    Rng r_rng = rng.fork(2);
    for (int k = 0; k < draws; ++k) {
      const Vector mu = posterior_mu(0, s, data, hp, mu_rng);
      const Matrix r = posterior_R(0, s, data, hp, r_rng);
      for (Eigen::Index a = 0; a < d; ++a) {
        mu_first[static_cast<std::size_t>(a)].add(mu[a]);
        mu_second[static_cast<std::size_t>(a)].add((mu[a] - mu_mean[a]) * (mu[a] - mu_mean[a]));
        for (Eigen::Index b = a; b < d; ++b) r_first[static_cast<std::size_t>(a * d + b)].add(r(a, b));
      }
    }
    auto check = [&](const oracle::Moments& m, double expected) {
      worst = std::max(worst, std::abs(m.mean - expected) / m.std_error());
      if (std::getenv("IMMGP_ACCEPTANCE_VERBOSE")) std::printf("  instance %d: z = %+.3f\n", inst, (m.mean - expected) / m.std_error());
      ++checks;
    };
    for (Eigen::Index a = 0; a < d; ++a) {
      check(mu_first[static_cast<std::size_t>(a)], mu_mean[a]);
      check(mu_second[static_cast<std::size_t>(a)], mu_cov(a, a));
      for (Eigen::Index b = a; b < d; ++b) check(r_first[static_cast<std::size_t>(a * d + b)], r_mean(a, b));
    }
  }
  return {worst < 3.0, std::to_string(checks) + " moments, max |z| = " + fmt("%.3f", worst)};
}

Report criterion2(const Context&) {
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    Rng rng = Rng(202).fork(static_cast<std::uint64_t>(t));
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(3));
    const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng.below(3));
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(4));
    Hyperparams hp = testing::tame_hyperparams(d, m);
    hp.a1 = 0.5 + 3.0 * rng.uniform();
    hp.b1 = 0.5 + 3.0 * rng.uniform();
    const Component c = random_component(d, m, rng);
    const Matrix x = oracle::random_matrix(n, d, rng);
    const Vector y = oracle::random_vector(n * m, rng);
    const double s = c.sigma0;
    const double g = sigma0_energy_gradient(s, c, x, y, hp);
    auto central = [&](double h) {
      return (sigma0_energy(s + h, c, x, y, hp) - sigma0_energy(s - h, c, x, y, hp)) / (2.0 * h);
    };
    const double h = 1e-3 * s;
    const double fd = (4.0 * central(h / 2.0) - central(h)) / 3.0;
    worst = std::max(worst, std::abs(g - fd) / std::max(std::abs(g), std::abs(fd)));
  }
  return {worst <= 1e-5, "100 instances, max relative error = " + fmt("%.3g", worst)};
}

Report criterion3(const Context&) {
  // N = 2: weights against the three factors evaluated directly.
  double worst_weight = 0.0;
  for (int t = 0; t < 20; ++t) {
    Rng rng = Rng(303).fork(static_cast<std::uint64_t>(t));
    const Eigen::Index d = 1 + t % 2;
    const Eigen::Index m = 1 + t % 3;
    const Hyperparams hp = testing::tame_hyperparams(d, m);
    const Dataset data = random_dataset(2, d, m, rng);
    const Component aux = random_component(d, m, rng);
    const AuxSource frozen = [&aux](Rng&) { return aux; };
    const double alpha = 0.2 + 2.0 * rng.uniform();
    auto gauss_x = [&](const Component& c, Eigen::Index i) {
      return oracle::gauss_logpdf(data.X.row(i).transpose(), c.mu, oracle::inverse(c.R));
    };
    auto marginal_y = [&](const Component& c, Eigen::Index i) {
      return oracle::gauss_logpdf(data.Y.row(i).transpose(), Vector::Zero(m),
                                  c.sigma0 * c.K + Matrix(c.noise.asDiagonal()));
    };
    // Conditional of y_i given the other point, from the dense joint.
    auto conditional_y = [&](const Component& c, Eigen::Index i) {
      const std::vector<std::size_t> both = {static_cast<std::size_t>(1 - i), static_cast<std::size_t>(i)};
      return block_log_marginal(c, data, both) - block_log_marginal(c, data, {both[0]});
    };
    auto compare = [&](const IndicatorWeights& w, const std::vector<double>& expected) {
      if (w.log_weights.size() != expected.size()) {
        worst_weight = INFINITY;
        return;
      }
      const double zw = dist::log_sum_exp(w.log_weights);
      const double ze = dist::log_sum_exp(expected);
      for (std::size_t k = 0; k < expected.size(); ++k) {
        worst_weight = std::max(worst_weight, std::abs(std::exp(w.log_weights[k] - zw) - std::exp(expected[k] - ze)));
        worst_weight = std::max(worst_weight, std::abs(w.log_weights[k] - expected[k]) / std::max(1.0, std::abs(expected[k])));
      }
    };
    for (Eigen::Index i = 0; i < 2; ++i) {
      MixtureState together;
      together.alpha = alpha;
      together.assignments = {0, 0};
      together.components = {random_component(d, m, rng)};
      IndicatorUpdater u1(data, hp, frozen);
      const Component& c = together.components[0];
      compare(u1.weights(static_cast<std::size_t>(i), together, rng),
              {conditional_y(c, i) + gauss_x(c, i), std::log(alpha) + marginal_y(aux, i) + gauss_x(aux, i)});

      MixtureState apart;
      apart.alpha = alpha;
      apart.assignments = {0, 1};
      apart.components = {random_component(d, m, rng), random_component(d, m, rng)};
      IndicatorUpdater u2(data, hp, frozen);
      const Component& other = apart.components[static_cast<std::size_t>(1 - i)];
      const Component& own = apart.components[static_cast<std::size_t>(i)];
      compare(u2.weights(static_cast<std::size_t>(i), apart, rng),
              {conditional_y(other, i) + gauss_x(other, i), std::log(alpha) + marginal_y(own, i) + gauss_x(own, i)});
    }
  }

  // N = 3 with frozen parameters: every component carries phi*, so the
  // stationary law is CRP(partition) times the product of block marginals.
  Rng rng(304);
  const Hyperparams hp = testing::tame_hyperparams(1, 2);
  Dataset data{Matrix(3, 1), Matrix(3, 2)};
  data.X << -0.3, 0.2, 1.1;
  data.Y << 0.4, -0.1, 0.6, 0.2, -0.5, 0.3;
  Component phi = random_component(1, 2, rng);
  phi.mu << 0.3;
  const AuxSource frozen = [&phi](Rng&) { return phi; };
  const double alpha = 0.9;

  const std::vector<std::vector<std::size_t>> partitions = {
      {0, 0, 0}, {0, 0, 1}, {0, 1, 0}, {0, 1, 1}, {0, 1, 2}};
  std::vector<double> log_target;
  for (const auto& z : partitions) {
    const std::size_t c = *std::max_element(z.begin(), z.end()) + 1;
    double lp = static_cast<double>(c) * std::log(alpha);
    for (std::size_t b = 0; b < c; ++b) {
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < 3; ++i)
        if (z[i] == b) rows.push_back(i);
      lp += std::lgamma(static_cast<double>(rows.size())) + block_log_marginal(phi, data, rows);
      for (std::size_t i : rows)
        lp += oracle::gauss_logpdf(data.X.row(static_cast<Eigen::Index>(i)).transpose(), phi.mu, oracle::inverse(phi.R));
    }
    log_target.push_back(lp);
  }
  const double norm = dist::log_sum_exp(log_target);

  MixtureState s;
  s.alpha = alpha;
  s.assignments = {0, 0, 0};
  s.components = {phi};
  IndicatorUpdater updater(data, hp, frozen);
  std::map<std::vector<std::size_t>, double> counts;
  const int scans = 100000;
  for (int k = 0; k < scans; ++k) {
    for (std::size_t i = 0; i < 3; ++i) updater.update(i, s, rng);
    counts[canonical(s.assignments)] += 1.0;
  }
  double tv = 0.0;
  std::string probs;
  for (std::size_t p = 0; p < partitions.size(); ++p) {
    const double exact = std::exp(log_target[p] - norm);
    const double emp = counts[partitions[p]] / scans;
    tv += 0.5 * std::abs(exact - emp);
    probs += " " + fmt("%.4f", exact) + "/" + fmt("%.4f", emp);
  }
  const bool pass = worst_weight <= 1e-10 && tv < 1e-2;
  return {pass, "N=2 max weight error = " + fmt("%.3g", worst_weight) + "; N=3 total variation = " +
                    fmt("%.5f", tv) + " (exact/empirical:" + probs + ")"};
}

Report criterion4(const Context&) {
  const std::size_t n = 6;
  const int rounds = 10000;
  Hyperparams hp = testing::tame_hyperparams(1, 1);
  SamplerConfig cfg;
  cfg.mh_tries_per_param = 2;

  auto stats = [n](const MixtureState& s) {
    const auto sizes = s.sizes();
    double mean_size = 0.0;
    for (std::size_t z : s.assignments) mean_size += static_cast<double>(sizes[z]);
    return std::array<double, 4>{s.alpha, static_cast<double>(s.num_components()),
                                 s.components[s.assignments[0]].sigma0, mean_size / static_cast<double>(n)};
  };
  const char* names[4] = {"alpha", "c", "sigma0(z_0)", "mean size"};

  // Marginal-conditional: independent prior draws.
  Rng prior_rng(401);
  std::array<oracle::Moments, 4> marginal;
  for (int k = 0; k < rounds; ++k) {
    const auto st = stats(sample_prior_state(n, hp, prior_rng));
    for (int j = 0; j < 4; ++j) marginal[static_cast<std::size_t>(j)].add(st[static_cast<std::size_t>(j)]);
  }

  // Successive-conditional: sweep, then redraw the data from the current state.
  Rng rng(402);
  MixtureState s = sample_prior_state(n, hp, rng);
  Dataset data = sample_observations(s, rng);
  std::array<std::vector<double>, 4> series;
  bool finite = true;
  for (int k = 0; k < rounds; ++k) {
    SweepDiagnostics diag;
    s = sweep(std::move(s), data, hp, cfg, rng, &diag);
    finite = finite && std::isfinite(diag.log_joint);
    data = sample_observations(s, rng);
    const auto st = stats(s);
    for (int j = 0; j < 4; ++j) series[static_cast<std::size_t>(j)].push_back(st[static_cast<std::size_t>(j)]);
  }

  double worst = 0.0;
  std::string detail;
  for (std::size_t j = 0; j < 4; ++j) {
    const auto& xs = series[j];
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    const double se = batch_means_se(xs, 50);
    const double z = (mean - marginal[j].mean) / std::hypot(se, marginal[j].std_error());
    worst = std::max(worst, std::abs(z));
    detail += std::string(j ? ", " : "") + names[j] + " z = " + fmt("%.2f", z);
  }
  if (!finite) detail += "; non-finite log joint recorded";
  return {worst < 4.0 && finite, detail};
}

Report criterion5(const Context&) {
  double worst = 0.0;
  for (int n = 2; n <= 10; ++n) {
    const auto log_beta = dist::log_stirling_unsigned(n);
    const auto beta = dist::stirling_unsigned(n);
    for (double alpha : {0.3, 1.0, 5.0}) {
      std::vector<double> terms;
      double direct = 0.0;
      for (int c = 1; c <= n; ++c) {
        const double common = static_cast<double>(c) * std::log(alpha) + std::lgamma(alpha) - std::lgamma(n + alpha);
        terms.push_back(log_beta[static_cast<std::size_t>(c - 1)] + common);
        direct += beta[static_cast<std::size_t>(c - 1)] * std::exp(common);
      }
      worst = std::max(worst, std::abs(std::exp(dist::log_sum_exp(terms)) - 1.0));
      worst = std::max(worst, std::abs(direct - 1.0));
    }
  }
  return {worst <= 1e-9, "27 (N, alpha) pairs, max |sum - 1| = " + fmt("%.3g", worst)};
}

Report criterion6(const Context&) {
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    Rng rng = Rng(606).fork(static_cast<std::uint64_t>(t));
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(3));
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(8));
    const Component c = random_component(d, 1, rng);
    oracle::SingleOutputGp gp{c.sigma0 * c.K(0, 0), c.noise[0], c.w, oracle::random_matrix(n, d, rng),
                              oracle::random_vector(n, rng)};
    MixtureState s;
    s.assignments.assign(static_cast<std::size_t>(n), 0);
    s.components = {c};
    const Dataset data{gp.X, Matrix(gp.y)};
    const Vector xs = oracle::random_vector(d, rng);
    const auto [mean, var] = gp.predict(xs);
    const ComponentPrediction p = component_predict(xs, 0, s, data);
    const double lm = log_marginal_y(c, gp.X, gp.y);
    const double lm_ref = gp.log_marginal();
    worst = std::max(worst, std::abs(p.mean[0] - mean) / std::max(1.0, std::abs(mean)));
    worst = std::max(worst, std::abs(p.cov(0, 0) - var) / std::max(1.0, std::abs(var)));
    worst = std::max(worst, std::abs(lm - lm_ref) / std::max(1.0, std::abs(lm_ref)));
  }
  return {worst <= 1e-8, "50 instances, max relative error = " + fmt("%.3g", worst)};
}

// ---------------------------------------------------------------------------

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

int run_cli(const Context& ctx, const std::string& args, const fs::path& log, const fs::path& cwd = {}) {
  const std::string prefix = cwd.empty() ? std::string() : "cd " + quote(cwd) + " && ";
  const std::string cmd = prefix + quote(ctx.cli) + " " + args + " >> " + quote(log) + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct SeedResult {
  double immgp1 = NAN, immgp2 = NAN, mean_baseline = NAN, linear_baseline = NAN;
  std::size_t modal_count = 0;
  bool finite = true;
  bool ok = false;
};

SeedResult fit_and_score(const Context& ctx, const fs::path& dir, std::uint64_t seed) {
  SeedResult r;
  const fs::path log = dir / "log.txt";
  const std::string d = quote(dir);
  const std::string s = std::to_string(seed);
  if (run_cli(ctx, "fit --train " + quote(dir / "train.csv") + " --out " + d + " --sweeps 4000 --burn-in 2000 --seed " +
                       s + " --preset inference --quiet",
              log) != 0)
    return r;
  for (const char* mode : {"immgp1", "immgp2"}) {
    const fs::path pred = dir / (std::string("pred_") + mode + ".csv");
    const fs::path metrics = dir / (std::string("metrics_") + mode + ".json");
    if (run_cli(ctx, "predict --chain " + quote(dir / "chain.jsonl") + " --train " + quote(dir / "train.csv") +
                         " --test " + quote(dir / "test.csv") + " --out " + quote(pred) + " --mode " + mode +
                         " --seed " + s,
                log) != 0)
      return r;
    if (run_cli(ctx, "eval --predictions " + quote(pred) + " --test " + quote(dir / "test.csv") + " --train " +
                         quote(dir / "train.csv") + " --out " + quote(metrics),
                log) != 0)
      return r;
    const auto j = io::read_json(metrics);
    (std::string(mode) == "immgp1" ? r.immgp1 : r.immgp2) = j.at("rmse").get<double>();
    r.mean_baseline = j.at("mean_baseline_rmse").get<double>();
    r.linear_baseline = j.at("linear_baseline_rmse").get<double>();
  }
  std::map<std::size_t, int> counts;
  for (const auto& sample : io::read_chain(dir / "chain.jsonl").samples) ++counts[sample.num_components()];
  r.modal_count = std::max_element(counts.begin(), counts.end(), [](const auto& a, const auto& b) {
                    return a.second < b.second;
                  })->first;
  std::ifstream diag(dir / "diagnostics.csv");
  std::string line;
  std::getline(diag, line);
  while (std::getline(diag, line)) {
    std::stringstream row(line);
    std::string cell;
    for (int col = 0; col < 4 && std::getline(row, cell, ','); ++col) {
      if (col == 3) r.finite = r.finite && std::isfinite(std::stod(cell));
    }
  }
  r.ok = true;
  return r;
}

// True components present in the training rows, if every one of them has at
// least `min_size` training points and all pairs of input means lie at least
// `min_distance` apart in the metric of either component's input precision.
std::optional<std::size_t> well_separated_count(const fs::path& truth_file, std::size_t min_size, double min_distance) {
  const auto truth = io::read_json(truth_file);
  const MixtureState state = io::state_from_json(truth.at("state"));
  std::map<std::size_t, std::size_t> train_sizes;
  for (std::size_t row : truth.at("train_rows").get<std::vector<std::size_t>>()) ++train_sizes[state.assignments[row]];
  std::vector<std::size_t> present;
  for (const auto& [r, size] : train_sizes) {
    if (size < min_size) return std::nullopt;
    present.push_back(r);
  }
  if (present.size() < 2) return std::nullopt;
  for (std::size_t a = 0; a < present.size(); ++a)
    for (std::size_t b = a + 1; b < present.size(); ++b) {
      const Component& ca = state.components[present[a]];
      const Component& cb = state.components[present[b]];
      const Vector diff = ca.mu - cb.mu;
      if (std::sqrt(diff.dot(ca.R * diff)) < min_distance || std::sqrt(diff.dot(cb.R * diff)) < min_distance)
        return std::nullopt;
    }
  return present.size();
}

Report criterion7(const Context& ctx) {
  const fs::path root = ctx.workdir / "criterion7";
  fs::create_directories(root);
  int beats = 0;
  bool agree = true;
  bool finite = true;
  std::string detail;
  std::optional<std::pair<std::uint64_t, std::size_t>> separated;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const fs::path dir = root / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    const auto t0 = std::chrono::steady_clock::now();
    if (run_cli(ctx, "generate --n 500 --d 2 --m 2 --train 400 --preset benchmark --seed " + std::to_string(seed) +
                         " --out " + quote(dir),
                dir / "log.txt") != 0)
      return {false, "generate failed for seed " + std::to_string(seed)};
    const SeedResult r = fit_and_score(ctx, dir, seed);
    if (!r.ok) return {false, "pipeline failed for seed " + std::to_string(seed) + "; see " + (dir / "log.txt").string()};
    const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
    const bool beat = r.immgp1 < r.mean_baseline && r.immgp1 < r.linear_baseline;
    beats += beat ? 1 : 0;
    const double gap = std::abs(r.immgp1 - r.immgp2) / r.immgp1;
    agree = agree && gap <= 0.01;
    finite = finite && r.finite;
    const std::size_t true_count = io::read_json(dir / "truth.json").at("num_components").get<std::size_t>();
    std::printf("  seed %llu: immgp1 %.4f immgp2 %.4f mean %.4f linear %.4f gap %.3f%% modal c %zu true c %zu (%.1f min)\n",
                static_cast<unsigned long long>(seed), r.immgp1, r.immgp2, r.mean_baseline, r.linear_baseline,
                100.0 * gap, r.modal_count, true_count, minutes);
    std::fflush(stdout);
    if (!separated) {
      if (const auto c = well_separated_count(dir / "truth.json", 20, 4.0)) {
        separated = {seed, *c};
        detail = "(c) seed " + std::to_string(seed) + ": modal " + std::to_string(r.modal_count) + " vs true " +
                 std::to_string(*c);
        if (r.modal_count != *c) detail = "FAILED " + detail;
      }
    }
  }
  bool modal_ok = separated && detail.rfind("FAILED", 0) != 0;
  if (!separated) {
    // None of the five draws qualifies: search further generation seeds.
    const fs::path scan = root / "scan";
    for (std::uint64_t seed = 100; seed < 20100 && !separated; ++seed) {
      cli::GenerateOptions g;
      g.n = 500;
      g.n_train = 400;
      g.seed = seed;
      g.out = scan;
      cli::cmd_generate(g);
      if (const auto c = well_separated_count(scan / "truth.json", 20, 4.0)) separated = {seed, *c};
    }
    if (!separated) return {false, "no well-separated draw among generation seeds 100..20099"};
    const fs::path dir = root / ("separated_" + std::to_string(separated->first));
    fs::create_directories(dir);
    if (run_cli(ctx, "generate --n 500 --d 2 --m 2 --train 400 --preset benchmark --seed " +
                         std::to_string(separated->first) + " --out " + quote(dir),
                dir / "log.txt") != 0)
      return {false, "generate failed for the separated draw"};
    const SeedResult r = fit_and_score(ctx, dir, separated->first);
    if (!r.ok) return {false, "pipeline failed for the separated draw"};
    finite = finite && r.finite;
    modal_ok = r.modal_count == separated->second;
    detail = "(c) seed " + std::to_string(separated->first) + ": modal " + std::to_string(r.modal_count) +
             " vs true " + std::to_string(separated->second);
  }
  const bool pass = beats >= 4 && agree && modal_ok && finite;
  return {pass, "(a) beats both baselines on " + std::to_string(beats) + "/5 seeds; (b) IMMGP1/IMMGP2 within 1%: " +
                    (agree ? "yes" : "no") + "; " + detail + (finite ? "" : "; non-finite log joint recorded")};
}

std::map<std::string, std::uint64_t> digests(const fs::path& dir) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "log.txt")
      out[fs::relative(e.path(), dir).string()] = io::file_digest(e.path());
  }
  return out;
}

// Every path is relative to `dir` so the recorded inputs match between runs.
bool run_pipeline(const Context& ctx, const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path log = dir / "log.txt";
  auto in_dir = [&](const std::string& args) { return run_cli(ctx, args, log, dir) == 0; };
  return in_dir("generate --n 80 --train 60 --seed 11 --out .") &&
         in_dir("fit --train train.csv --out fit --sweeps 40 --burn-in 20 --seed 5 --chains 2 --quiet") &&
         in_dir("predict --chain fit/chain_0.jsonl --chain fit/chain_1.jsonl --train train.csv --test test.csv "
                "--out pred.csv --mode immgp2 --mc-draws 50 --seed 9") &&
         in_dir("eval --predictions pred.csv --test test.csv --train train.csv --out metrics.json");
}

Report criterion8(const Context& ctx) {
  const fs::path root = ctx.workdir / "criterion8";
  fs::remove_all(root);
  if (!run_pipeline(ctx, root / "a") || !run_pipeline(ctx, root / "b")) return {false, "a command failed"};
  const auto first = digests(root / "a");
  if (!run_pipeline(ctx, root / "a")) return {false, "a command failed on rerun"};
  const auto rerun = digests(root / "a");
  const auto second = digests(root / "b");
  const bool same = first == second && first == rerun && first.size() >= 10;
  char chain_digest[32] = "missing";
  if (first.count("fit/chain_0.jsonl"))
    std::snprintf(chain_digest, sizeof chain_digest, "%016llx",
                  static_cast<unsigned long long>(first.at("fit/chain_0.jsonl")));
  return {same, std::to_string(first.size()) + " output files, digests " + (same ? "identical" : "differ") +
                    " across two runs and a rerun; fit/chain_0.jsonl " + chain_digest};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int only = 0;
  Context ctx{fs::current_path() / "acceptance_work", "immgp"};
  app.add_option("--only", only, "Run a single criterion (1-8)")->check(CLI::Range(1, 8));
  app.add_option("--workdir", ctx.workdir, "Scratch directory");
  app.add_option("--cli", ctx.cli, "Path to the immgp executable");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(ctx.workdir);
  ctx.workdir = fs::absolute(ctx.workdir);
  if (ctx.cli.has_parent_path()) ctx.cli = fs::absolute(ctx.cli);

  const std::vector<std::pair<std::string, std::function<Report(const Context&)>>> criteria = {
      {"conjugate posterior moments", criterion1},
      {"HMC gradient vs finite differences", criterion2},
      {"exhaustive indicator oracle", criterion3},
      {"Geweke joint-distribution test", criterion4},
      {"Stirling normalization", criterion5},
      {"single-output reduction", criterion6},
      {"synthetic benchmark", criterion7},
      {"determinism", criterion8},
  };
  bool all = true;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    if (only != 0 && static_cast<std::size_t>(only) != k + 1) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Report r;
    try {
      r = criteria[k].second(ctx);
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %zu (%s): %s  %s  [%.1f s]\n", k + 1, criteria[k].first.c_str(), r.pass ? "PASS" : "FAIL",
                r.detail.c_str(), secs);
    std::fflush(stdout);
    all = all && r.pass;
  }
  return all ? 0 : 1;
}
