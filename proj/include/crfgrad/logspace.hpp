#pragma once

#include <cmath>
#include <initializer_list>
#include <limits>
#include <span>

#include "crfgrad/error.hpp"

namespace crfgrad {

// Extended real on the natural-log scale. -inf plays the role of the
// plain-domain zero; +inf is excluded from the domain by construction,
// so (-inf) + x for finite x is always -inf and never produces NaN.
using LogValue = double;

inline constexpr LogValue kLogZero = -std::numeric_limits<double>::infinity();
inline constexpr LogValue kLogOne = 0.0;

// log(e^a + e^b) computed as max + log1p(exp(min - max)).
// Exact identity when either argument is -inf, so reductions may be
// seeded with kLogZero without changing a single bit of the result.
inline LogValue log_add(LogValue a, LogValue b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  const LogValue hi = a < b ? b : a;
  const LogValue lo = a < b ? a : b;
  return hi + std::log1p(std::exp(lo - hi));
}

// Opt-in tag: reductions over an empty sequence yield the additive
// identity instead of raising "empty-reduction".
struct WithIdentity {};

// Left-fold of log_add in ascending index order (bit-reproducible).
inline LogValue log_sum(std::span<const LogValue> values, WithIdentity) {
  LogValue acc = kLogZero;
  for (LogValue v : values) acc = log_add(acc, v);
  return acc;
}

inline LogValue log_sum(std::span<const LogValue> values) {
  if (values.empty()) throw Error("empty-reduction", "log_sum of an empty sequence");
  return log_sum(values, WithIdentity{});
}

inline LogValue log_sum(std::initializer_list<LogValue> values) {
  return log_sum(std::span<const LogValue>(values.begin(), values.size()));
}

inline LogValue log_sum(std::initializer_list<LogValue> values, WithIdentity tag) {
  return log_sum(std::span<const LogValue>(values.begin(), values.size()), tag);
}

// Tropical pair of operations; -inf is again the additive identity.
inline LogValue max_plus_add(LogValue a, LogValue b) { return a < b ? b : a; }
inline LogValue max_plus_mul(LogValue a, LogValue b) { return a + b; }

}  // namespace crfgrad
