// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "immgp/gibbs.hpp"
#include "immgp/model.hpp"
#include "immgp/predict.hpp"

namespace immgp::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kInvalidConfig = 2, kIo = 3, kNumerical = 4 };

int exit_code_for(const std::exception& e);

struct GenerateOptions {
  std::size_t n = 500;
  Eigen::Index d = 2;
  Eigen::Index m = 2;
  // Unset: every row goes to train.csv and test.csv holds only the header.
  std::optional<std::size_t> n_train;
  std::uint64_t seed = 0;
  std::string preset = "benchmark";
  fs::path out = ".";
};

struct FitOptions {
  fs::path train;
  fs::path out = ".";
  SamplerConfig sampler;
  std::string preset = "inference";
  std::optional<fs::path> hyperparams;  // JSON object overriding the preset
  int chains = 1;
  bool quiet = false;
};

struct PredictOptions {
  std::vector<fs::path> chains;
  fs::path train;
  fs::path test;
  fs::path out = "predictions.csv";
  PredictionMode mode = PredictionMode::kExistingOnly;
  std::size_t mc_draws = 100;
  std::uint64_t seed = 0;
};

struct EvalOptions {
  fs::path predictions;
  fs::path test;
  std::optional<fs::path> train;
  fs::path out = "metrics.json";
};

struct Metrics {
  double rmse = 0.0;
  Vector per_output;
  std::optional<double> mean_baseline;
  std::optional<double> linear_baseline;
};

// Pooled over all rows and outputs. Throws LengthMismatch on shape mismatch.
double rmse(const Matrix& predicted, const Matrix& truth);
Vector rmse_per_output(const Matrix& predicted, const Matrix& truth);
// Training output means for every test row.
Matrix mean_baseline(const Dataset& train, const Matrix& xtest);
// Per-output least squares on [1, x] fitted to the training set.
Matrix linear_baseline(const Dataset& train, const Matrix& xtest);
Metrics evaluate(const Matrix& predicted, const Dataset& test, const Dataset* train);

void cmd_generate(const GenerateOptions& opt);
void cmd_fit(const FitOptions& opt);
void cmd_predict(const PredictOptions& opt);
Metrics cmd_eval(const EvalOptions& opt);

// Entry point for the executable; returns the process exit code.
int main(int argc, char** argv);

}  // namespace immgp::cli
