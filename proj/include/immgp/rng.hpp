// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <random>

namespace immgp {

/// Seeded random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Uniforms take the top 53 bits of one engine draw; standard
/// normals use the Marsaglia polar method with the spare value cached. Both
/// transforms are implemented here rather than taken from <random> so that
/// streams are identical across standard library implementations.
///
/// fork(k) derives the seed of sub-stream k as splitmix64(seed ^ splitmix64(k + 1)),
/// so forks depend only on the parent seed and k, never on how far the
/// parent has advanced.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  Rng fork(std::uint64_t stream) const;

  std::uint64_t next() { return engine_(); }
  // [0, 1)
  double uniform();
  // (0, 1)
  double uniform_open();
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  friend bool operator==(const Rng& a, const Rng& b) {
    return a.seed_ == b.seed_ && a.engine_ == b.engine_ && a.has_spare_ == b.has_spare_ &&
           a.spare_ == b.spare_;
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace immgp
