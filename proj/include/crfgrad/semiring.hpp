#pragma once

#include <concepts>
#include <cstddef>

#include "crfgrad/expectation.hpp"
#include "crfgrad/logspace.hpp"

namespace crfgrad {

template <typename S>
concept Semiring = requires(const S s, const typename S::Value& a, const typename S::Value& b) {
  { s.zero() } -> std::convertible_to<typename S::Value>;
  { s.one() } -> std::convertible_to<typename S::Value>;
  { s.add(a, b) } -> std::convertible_to<typename S::Value>;
  { s.mul(a, b) } -> std::convertible_to<typename S::Value>;
};

// (R, +, *, 0, 1): partition functions and marginals in the plain domain.
// Overflows exactly where the naive chain computation overflows.
struct SumProduct {
  using Value = double;
  double zero() const { return 0.0; }
  double one() const { return 1.0; }
  double add(double a, double b) const { return a + b; }
  double mul(double a, double b) const { return a * b; }
};

// (R*, log-add-exp, +, -inf, 0): the stable image of SumProduct under log.
struct LogSumProduct {
  using Value = LogValue;
  LogValue zero() const { return kLogZero; }
  LogValue one() const { return kLogOne; }
  LogValue add(LogValue a, LogValue b) const { return log_add(a, b); }
  LogValue mul(LogValue a, LogValue b) const { return a + b; }
};

// (R*, max, +, -inf, 0): Viterbi scoring through the same generic engine.
struct MaxPlus {
  using Value = LogValue;
  LogValue zero() const { return kLogZero; }
  LogValue one() const { return kLogOne; }
  LogValue add(LogValue a, LogValue b) const { return max_plus_add(a, b); }
  LogValue mul(LogValue a, LogValue b) const { return max_plus_mul(a, b); }
};

// Expectation semiring of order M over plain reals. The z-part behaves
// exactly like SumProduct, so long chains overflow; production gradients
// go through the log-domain engines and this one serves as a small-scale
// reference.
class ExpectationSemiring {
 public:
  using Value = ExpectationPair;
  explicit ExpectationSemiring(std::size_t order) : order_(order) {}
  std::size_t order() const { return order_; }
  ExpectationPair zero() const { return plain_pair_zero(order_); }
  ExpectationPair one() const { return plain_pair_one(order_); }
  ExpectationPair add(const ExpectationPair& a, const ExpectationPair& b) const {
    return exp_pair_add(a, b);
  }
  ExpectationPair mul(const ExpectationPair& a, const ExpectationPair& b) const {
    return exp_pair_mul(a, b);
  }

 private:
  std::size_t order_;
};

// Log-domain expectation semiring of order M.
class LogExpectationSemiring {
 public:
  using Value = ExpectationPair;
  explicit LogExpectationSemiring(std::size_t order) : order_(order) {}
  std::size_t order() const { return order_; }
  ExpectationPair zero() const { return log_pair_zero(order_); }
  ExpectationPair one() const { return log_pair_one(order_); }
  ExpectationPair add(const ExpectationPair& a, const ExpectationPair& b) const {
    return log_pair_add(a, b);
  }
  ExpectationPair mul(const ExpectationPair& a, const ExpectationPair& b) const {
    return log_pair_mul(a, b);
  }

 private:
  std::size_t order_;
};

}  // namespace crfgrad
