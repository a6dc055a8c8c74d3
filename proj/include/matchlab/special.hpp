#pragma once

namespace matchlab::special {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kEulerGamma = 0.57721566490153286061;

/// Entire exponential integral Ein(u) = int_0^u (1 - e^{-s})/s ds, u >= 0.
double ein(double u);
/// Ein'(u) = (1 - e^{-u})/u, continuous at 0.
double ein_d1(double u);
/// Ein''(u), continuous at 0 (value -1/2).
double ein_d2(double u);

/// Exponential integral E1(u) = int_u^inf e^{-s}/s ds, u > 0.
/// Series through Ein below 1, continued fraction above.
double e1(double u);

/// E1(b/T) - E1(b/t) for b >= 0 and 0 < t < T, free of the logarithmic
/// cancellation at small b.
double e1_difference(double b, double t, double big_t);

}  // namespace matchlab::special
