#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace matchlab::parallel {

/// Set the OpenMP worker count (0 keeps the runtime default).
void set_threads(int threads);
int max_threads();

/// Fixed block length used for reductions. Partial sums are formed over
/// blocks of this size and combined in block order, so the result does not
/// depend on how many workers ran.
inline constexpr std::size_t kReduceBlock = 4096;

/// Deterministic sum of f(i) for i in [0, count).
template <class F>
double blocked_sum(std::size_t count, F&& f) {
  const std::size_t blocks = (count + kReduceBlock - 1) / kReduceBlock;
  std::vector<double> partial(blocks, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(blocks); ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kReduceBlock;
    const std::size_t hi = std::min(count, lo + kReduceBlock);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += f(i);
    partial[static_cast<std::size_t>(b)] = s;
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

/// Same combination order as blocked_sum, evaluated on one thread.
template <class F>
double blocked_sum_serial(std::size_t count, F&& f) {
  double total = 0.0;
  for (std::size_t lo = 0; lo < count; lo += kReduceBlock) {
    const std::size_t hi = std::min(count, lo + kReduceBlock);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += f(i);
    total += s;
  }
  return total;
}

}  // namespace matchlab::parallel
