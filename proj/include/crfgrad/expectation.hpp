#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "crfgrad/error.hpp"
#include "crfgrad/logspace.hpp"

namespace crfgrad {

// Semiring element (z, h): a scalar part plus an order-M vector part.
// The same struct serves the plain and the log domain; which family of
// operations is applied decides the reading. M is fixed at construction
// and mixing orders is a dimension error, never a silent broadcast.
struct ExpectationPair {
  double z = 0.0;
  std::vector<double> h;

  ExpectationPair() = default;
  ExpectationPair(double z_part, std::vector<double> h_part)
      : z(z_part), h(std::move(h_part)) {}

  std::size_t order() const { return h.size(); }

  bool operator==(const ExpectationPair&) const = default;
};

namespace detail {
inline void require_same_order(const ExpectationPair& p, const ExpectationPair& q) {
  if (p.order() != q.order()) {
    throw Error("dim-mismatch", "expectation pairs of order " + std::to_string(p.order()) +
                                    " and " + std::to_string(q.order()));
  }
}
}  // namespace detail

// --- plain domain -----------------------------------------------------

inline ExpectationPair plain_pair_zero(std::size_t order) {
  return {0.0, std::vector<double>(order, 0.0)};
}

inline ExpectationPair plain_pair_one(std::size_t order) {
  return {1.0, std::vector<double>(order, 0.0)};
}

// (z1 + z2, h1 + h2)
inline ExpectationPair exp_pair_add(const ExpectationPair& p, const ExpectationPair& q) {
  detail::require_same_order(p, q);
  ExpectationPair out{p.z + q.z, p.h};
  for (std::size_t m = 0; m < out.h.size(); ++m) out.h[m] += q.h[m];
  return out;
}

// (z1 z2, z1 h2 + z2 h1): the product rule carried by the h-part.
inline ExpectationPair exp_pair_mul(const ExpectationPair& p, const ExpectationPair& q) {
  detail::require_same_order(p, q);
  ExpectationPair out{p.z * q.z, std::vector<double>(p.order())};
  for (std::size_t m = 0; m < out.h.size(); ++m) out.h[m] = p.z * q.h[m] + q.z * p.h[m];
  return out;
}

// --- log domain --------------------------------------------------------

inline ExpectationPair log_pair_zero(std::size_t order) {
  return {kLogZero, std::vector<double>(order, kLogZero)};
}

inline ExpectationPair log_pair_one(std::size_t order) {
  return {kLogOne, std::vector<double>(order, kLogZero)};
}

// (z1 ⊕ z2, h1 ⊕ h2) coordinatewise
inline ExpectationPair log_pair_add(const ExpectationPair& p, const ExpectationPair& q) {
  detail::require_same_order(p, q);
  ExpectationPair out{log_add(p.z, q.z), std::vector<double>(p.order())};
  for (std::size_t m = 0; m < out.h.size(); ++m) out.h[m] = log_add(p.h[m], q.h[m]);
  return out;
}

// (z1 ⊗ z2, (z1 ⊗ h2) ⊕ (z2 ⊗ h1)) with ⊗ = + on coordinates
inline ExpectationPair log_pair_mul(const ExpectationPair& p, const ExpectationPair& q) {
  detail::require_same_order(p, q);
  ExpectationPair out{p.z + q.z, std::vector<double>(p.order())};
  for (std::size_t m = 0; m < out.h.size(); ++m) out.h[m] = log_add(p.z + q.h[m], q.z + p.h[m]);
  return out;
}

}  // namespace crfgrad
