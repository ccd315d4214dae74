#include "nmq/schedule.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace nmq {

namespace {

// Spot grid for the construction-time certificate check: a dense block
// right after N plus a geometric tail out to 1e7.  The exhaustive check is
// available separately through check_certificate.
std::vector<long> spot_grid(long from) {
  std::vector<long> grid;
  for (long n = from; n < from + 64; ++n) grid.push_back(n);
  double g = static_cast<double>(from + 64);
  while (g < 1e7) {
    grid.push_back(static_cast<long>(g));
    g *= 1.25;
  }
  grid.push_back(10000000L);
  return grid;
}

}  // namespace

StepSchedule::StepSchedule(Kind kind, double a0, double n0, double d2,
                           double d1, double d3, long big_n)
    : kind_(kind), a0_(a0), n0_(n0), d2_(d2), d1_(d1), d3_(d3), big_n_(big_n) {
  if (!(a0_ > 0.0)) throw ConfigError("schedule: a0 must be > 0");
  if (!(n0_ >= 0.0)) throw ConfigError("schedule: n0 must be >= 0");
  if (!(d2_ > 0.5) || !(d2_ <= 1.0))
    throw ConfigError("schedule: d2 must lie in (0.5, 1]");
  if (!(d1_ > 0.0) || !(d3_ > 0.0))
    throw ConfigError("schedule: certified d1, d3 must be > 0");
  if (big_n_ < 1)
    throw ConfigError("schedule: certificate must start at N >= 1");
  // Both families are nonincreasing in n for n0 >= 0, so a(0) <= 1 keeps
  // every step size inside (0, 1] as the update rule requires.
  if ((*this)(0) > 1.0)
    throw ConfigError("schedule: a(0) = " + std::to_string((*this)(0)) +
                      " exceeds 1; step sizes must lie in (0, 1]");
  for (long n : spot_grid(big_n_)) {
    const double a = (*this)(n);
    const double nd = static_cast<double>(n);
    if (!(d1_ / nd <= a) || !(a <= d3_ * std::pow(nd, -d2_)) || !(a < 1.0) ||
        !((*this)(n + 1) <= a))
      throw ConfigError(
          "schedule: certified bounds fail at n = " + std::to_string(n));
  }
}

StepSchedule StepSchedule::power(double a0, double n0, double d2, double d1,
                                 double d3, long certified_from) {
  return StepSchedule(Kind::kPower, a0, n0, d2, d1, d3, certified_from);
}

StepSchedule StepSchedule::harmonic(double a0, double d1, double d3,
                                    long certified_from) {
  return StepSchedule(Kind::kHarmonic, a0, /*n0=*/1.0, /*d2=*/1.0, d1, d3,
                      certified_from);
}

double StepSchedule::operator()(long n) const {
  switch (kind_) {
    case Kind::kPower:
      return a0_ / std::pow(static_cast<double>(n) + n0_, d2_);
    case Kind::kHarmonic:
      return a0_ / (static_cast<double>(n) + 1.0);
  }
  return 0.0;  // unreachable
}

void StepSchedule::check_certificate(long n_max) const {
  double prev = (*this)(big_n_);
  for (long n = big_n_; n <= n_max; ++n) {
    const double a = (*this)(n);
    const double nd = static_cast<double>(n);
    if (!(a <= prev))
      throw ConfigError("schedule: a(n) increases at n = " +
                        std::to_string(n));
    if (!(a < 1.0))
      throw ConfigError("schedule: a(n) >= 1 at n = " + std::to_string(n));
    if (!(d1_ / nd <= a))
      throw ConfigError("schedule: lower certified bound fails at n = " +
                        std::to_string(n));
    if (!(a <= d3_ * std::pow(nd, -d2_)))
      throw ConfigError("schedule: upper certified bound fails at n = " +
                        std::to_string(n));
    prev = a;
  }
}

}  // namespace nmq
