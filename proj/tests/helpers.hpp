// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include "immgp/model.hpp"

namespace testing {

// Moderate priors that keep every covariance well conditioned.
inline immgp::Hyperparams tame_hyperparams(Eigen::Index d, Eigen::Index m) {
  immgp::Hyperparams hp;
  hp.a0 = 1.0;
  hp.b0 = 1.0;
  hp.mu0 = immgp::Vector::Zero(d);
  hp.R0 = immgp::Matrix::Identity(d, d);
  hp.W0 = immgp::Matrix::Identity(d, d) / static_cast<double>(d + 2);
  hp.nu0 = static_cast<double>(d + 2);
  hp.a1 = 2.0;
  hp.b1 = 2.0;
  hp.W1 = immgp::Matrix::Identity(m, m) / static_cast<double>(m + 2);
  hp.nu1 = static_cast<double>(m + 2);
  hp.mu1 = 0.0;
  hp.r1 = 0.1;
  hp.a2 = 3.0;
  hp.b2 = 10.0;
  return hp;
}

}  // namespace testing
