#include "matchlab/special.hpp"

#include <cmath>
#include <limits>

namespace matchlab::special {

double ein(double u) {
  if (u <= 1.0) {
    // sum_{k>=1} (-1)^{k+1} u^k / (k k!)
    double term = u;  // (-1)^{k+1} u^k / k!
    double sum = 0.0;
    for (int k = 1; k < 40; ++k) {
      const double add = term / k;
      sum += add;
      if (std::abs(add) < 1e-18 * std::abs(sum)) break;
      term *= -u / (k + 1);
    }
    return sum;
  }
  return e1(u) + kEulerGamma + std::log(u);
}

double ein_d1(double u) {
  if (u == 0.0) return 1.0;
  return -std::expm1(-u) / u;
}

double ein_d2(double u) {
  if (u < 1.0) {
    // sum_{k>=2} (-1)^{k+1} (k-1) u^{k-2} / k!
    double pow_over_fact = 0.5;  // u^{k-2}/k! at k=2
    double sum = 0.0;
    for (int k = 2; k < 40; ++k) {
      const double add = ((k % 2 == 0) ? -1.0 : 1.0) * (k - 1) * pow_over_fact;
      sum += add;
      if (std::abs(add) < 1e-18) break;
      pow_over_fact *= u / (k + 1);
    }
    return sum;
  }
  return (std::exp(-u) * (u + 1.0) - 1.0) / (u * u);
}

double e1(double u) {
  if (u <= 0.0) return std::numeric_limits<double>::infinity();
  if (u <= 1.0) return -kEulerGamma - std::log(u) + ein(u);
  if (u > 745.0) return 0.0;
  // Modified Lentz evaluation of the continued fraction
  // E1(u) = e^{-u} / (u + 1 - 1/(u + 3 - 4/(u + 5 - ...))).
  constexpr double kTiny = 1e-300;
  double b = u + 1.0;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    const double a = -static_cast<double>(i) * i;
    b += 2.0;
    d = 1.0 / (a * d + b);
    c = b + a / c;
    const double delta = c * d;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return h * std::exp(-u);
}

double e1_difference(double b, double t, double big_t) {
  const double u_small = b / big_t;
  const double u_large = b / t;
  if (u_large <= 1.0) return std::log(big_t / t) + ein(u_small) - ein(u_large);
  return e1(u_small) - e1(u_large);
}

}  // namespace matchlab::special
