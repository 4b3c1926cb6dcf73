#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ctxflow {

// max/min/mean and population standard deviation of a sample. All zero and
// `present == false` for an empty sample.
struct Summary {
  double max = 0;
  double min = 0;
  double mean = 0;
  double sd = 0;
  std::size_t n = 0;
  bool present = false;
};

Summary summarize(std::span<const double> xs);
double median(std::vector<double> xs);  // 0 for an empty sample
double safe_ratio(double num, double den);  // 0 when den == 0

template <typename T>
std::vector<double> as_doubles(std::span<const T> xs) {
  return std::vector<double>(xs.begin(), xs.end());
}

}  // namespace ctxflow
