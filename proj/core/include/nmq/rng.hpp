#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>

namespace nmq {

// All stochastic code draws through these helpers so that a given seed
// produces byte-identical trajectories on every platform.  std::mt19937_64
// has a fully specified output sequence; the distributions below avoid the
// implementation-defined std::uniform_real_distribution /
// std::discrete_distribution.
using Rng = std::mt19937_64;

// Uniform double in [0, 1) with 53 random bits (the full double mantissa).
inline double uniform53(Rng& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

// Sample an index in [0, n) from a probability law given by an accessor
// p(i), by inverse CDF.  The final positive-mass index absorbs any rounding
// slack so the draw is always valid for laws summing to 1 up to rounding
// error.  Accessor form avoids assuming contiguous storage (Eigen rows of
// column-major matrices are strided).
template <typename Accessor>
int sample_categorical_fn(int n, Accessor&& p, Rng& gen) {
  if (n <= 0) throw std::logic_error("sample_categorical: empty law");
  const double u = uniform53(gen);
  double cum = 0.0;
  for (int i = 0; i < n; ++i) {
    cum += p(i);
    if (u < cum) return i;
  }
  for (int i = n - 1; i >= 0; --i) {
    if (p(i) > 0.0) return i;
  }
  return n - 1;
}

inline int sample_categorical(std::span<const double> probs, Rng& gen) {
  return sample_categorical_fn(
      static_cast<int>(probs.size()), [&](int i) { return probs[i]; }, gen);
}

// Derive a stream for one seed.  Seeds are used directly: mt19937_64's
// seeding already decorrelates small integer seeds adequately for this
// laboratory's purposes, and direct seeding keeps runs reproducible from
// the manifest alone.
inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace nmq
