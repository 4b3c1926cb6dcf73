#pragma once

// Brute-force reference computations. Every routine here recomputes its
// answer from raw inputs with quadratic scans and long double sums, sharing
// no code with the library beyond the data types.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxflow/features.hpp"
#include "ctxflow/pairflow.hpp"

namespace testsupport {

bool close_rel(double actual, double expected, double tol = 1e-9);

struct RefStats {
  long double max = 0, min = 0, mean = 0, sd = 0;
  bool present = false;
};
RefStats ref_stats(const std::vector<long double>& xs);

struct RefSma {
  std::vector<std::int64_t> buckets;
  std::vector<long double> sums;
  std::vector<long double> sma;
};
// Bucket b holds points with (b-1)*rate <= ts < b*rate.
RefSma ref_sma(std::span<const ctxflow::PlanePoint> pts, double rate, int k);

struct RefSmaFeatures {
  long double n_below = 0, n_above = 0, ratio_below = 0, ratio_above = 0;
  long double n_outliers = 0, ratio_outliers = 0;
  RefStats magnitude;
  bool present = false;
};
RefSmaFeatures ref_sma_features(const RefSma& s);

// Gap from each value to its successor in (value, position) order.
std::vector<long double> ref_consecutive_gaps(const std::vector<double>& xs);

// Expected slot values (1..102) for `target`, given every flow of its
// profile interval. Slots 16-19 (content length, carried only in stats)
// and 42-45 (TTL) are left absent.
struct RefVector {
  std::vector<long double> value = std::vector<long double>(103, 0);
  std::vector<bool> present = std::vector<bool>(103, false);
  void set(int id, long double v, bool p = true) {
    value[static_cast<std::size_t>(id)] = v;
    present[static_cast<std::size_t>(id)] = p;
  }
};
RefVector ref_flow_slots(const ctxflow::PairFlow& flow, double rate, int k);
RefVector ref_profile_slots(std::span<const ctxflow::PairFlow> interval,
                            const ctxflow::PairFlow& target);

// Returns a description of the first mismatch, or nothing.
std::optional<std::string> compare_slots(const ctxflow::FeatureVector& got, const RefVector& want,
                                         int first, int last, double tol = 1e-9);

}  // namespace testsupport
