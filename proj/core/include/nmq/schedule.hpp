#pragma once

#include "nmq/errors.hpp"

namespace nmq {

// Step-size schedule a(n) with a machine-checkable certificate.  Two
// families are supported:
//
//   power:    a(n) = a0 / (n + n0)^{d2}
//   harmonic: a(n) = a0 / (n + 1)            (d2 = 1)
//
// The certificate (d1, d2, d3, N) asserts that for all n >= N
//
//   d1 / n  <=  a(n)  <=  d3 * n^{-d2},   a(n+1) <= a(n),   a(n) < 1,
//
// with d1, d3 > 0 and 0.5 < d2 <= 1 (so the usual summability conditions
// sum a = inf, sum a^2 < inf hold by the family's form).  Construction
// checks the certificate on a spot grid; `check_certificate` re-verifies it
// by direct evaluation of every n in [N, n_max].
class StepSchedule {
 public:
  enum class Kind { kPower, kHarmonic };

  static StepSchedule power(double a0, double n0, double d2, double d1,
                            double d3, long certified_from);
  static StepSchedule harmonic(double a0, double d1, double d3,
                               long certified_from);

  [[nodiscard]] double operator()(long n) const;

  [[nodiscard]] Kind kind() const { return kind_; }
  [[nodiscard]] double a0() const { return a0_; }
  [[nodiscard]] double n0() const { return n0_; }
  [[nodiscard]] double d1() const { return d1_; }
  [[nodiscard]] double d2() const { return d2_; }
  [[nodiscard]] double d3() const { return d3_; }
  // First index from which the certified bounds, monotonicity, and a(n) < 1
  // all hold.
  [[nodiscard]] long certified_from() const { return big_n_; }

  // Direct per-n verification of the certificate over [certified_from,
  // n_max].  Throws ConfigError at the first violation.
  void check_certificate(long n_max) const;

 private:
  StepSchedule(Kind kind, double a0, double n0, double d2, double d1,
               double d3, long big_n);

  Kind kind_;
  double a0_;
  double n0_;
  double d2_;
  double d1_;
  double d3_;
  long big_n_;
};

}  // namespace nmq
