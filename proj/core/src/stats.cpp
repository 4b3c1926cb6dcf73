#include "ctxflow/stats.hpp"

#include <algorithm>
#include <cmath>

namespace ctxflow {

Summary summarize(std::span<const double> xs) {
  Summary s;
  if (xs.empty()) return s;
  s.n = xs.size();
  s.present = true;
  s.max = xs[0];
  s.min = xs[0];
  double sum = 0;
  for (double x : xs) {
    s.max = std::max(s.max, x);
    s.min = std::min(s.min, x);
    sum += x;
  }
  s.mean = sum / static_cast<double>(s.n);
  double ss = 0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(s.n));
  return s;
}

double median(std::vector<double> xs) {
  if (xs.empty()) return 0;
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : (xs[n / 2 - 1] + xs[n / 2]) / 2.0;
}

double safe_ratio(double num, double den) { return den == 0 ? 0 : num / den; }

}  // namespace ctxflow
