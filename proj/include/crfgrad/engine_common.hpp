#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "crfgrad/counters.hpp"
#include "crfgrad/logspace.hpp"
#include "crfgrad/model.hpp"

namespace crfgrad {

// log Z(x; theta) together with the gradient in both forms the quotient
// needs: log-coordinates of grad Z and the expected counts grad Z / Z.
struct GradientResult {
  LogValue log_partition = kLogZero;
  std::vector<LogValue> log_gradient;
  std::vector<double> expected_counts;
};

namespace detail {

// The three fold primitives below fix the reduction order (ascending
// source index, accumulator seeded with the additive identity) for every
// engine and every storage strategy; bitwise agreement between the FB
// variants and the EMP z-part rests on these being the only code paths.

// next(y) = ⊕_{y'} psi(y', y) ⊗ prev(y')
inline void chain_forward_step(std::span<const double> psi, std::span<const double> prev,
                               std::span<double> next, int n, EngineStats* stats) {
  for (int y = 0; y < n; ++y) {
    LogValue acc = kLogZero;
    for (int yp = 0; yp < n; ++yp) {
      acc = log_add(acc, psi[static_cast<std::size_t>(yp) * n + static_cast<std::size_t>(y)] + prev[static_cast<std::size_t>(yp)]);
    }
    next[static_cast<std::size_t>(y)] = acc;
  }
  if (stats) {
    stats->ops.log_adds += static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n);
    stats->ops.adds += static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n);
  }
}

// prev(y) = ⊕_{y''} psi(y, y'') ⊗ next(y'')
inline void chain_backward_step(std::span<const double> psi, std::span<const double> next,
                                std::span<double> prev, int n, EngineStats* stats) {
  for (int y = 0; y < n; ++y) {
    LogValue acc = kLogZero;
    for (int yn = 0; yn < n; ++yn) {
      acc = log_add(acc, psi[static_cast<std::size_t>(y) * n + static_cast<std::size_t>(yn)] + next[static_cast<std::size_t>(yn)]);
    }
    prev[static_cast<std::size_t>(y)] = acc;
  }
  if (stats) {
    stats->ops.log_adds += static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n);
    stats->ops.adds += static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n);
  }
}

inline LogValue chain_reduce(std::span<const double> values, EngineStats* stats) {
  LogValue acc = kLogZero;
  for (double v : values) acc = log_add(acc, v);
  if (stats) stats->ops.log_adds += values.size();
  return acc;
}

// alpha_0 per start mode: the ⊗-identity everywhere (free) or only at the
// start label (fixed), the ⊕-identity elsewhere.
inline void init_alpha0(StartMode mode, int start_label, std::span<double> out) {
  for (std::size_t y = 0; y < out.size(); ++y) {
    out[y] = (mode == StartMode::kFree || static_cast<int>(y) == start_label) ? kLogOne : kLogZero;
  }
}

inline void require_nonempty(const SequenceInstance& x) {
  if (x.length() < 1) throw Error("empty-sequence", "sequence must have T >= 1");
}

inline void finish_gradient(GradientResult& out, std::span<const double> log_grad) {
  out.log_gradient.assign(log_grad.begin(), log_grad.end());
  out.expected_counts.resize(log_grad.size());
  for (std::size_t m = 0; m < log_grad.size(); ++m) {
    out.expected_counts[m] = std::exp(out.log_gradient[m] - out.log_partition);
  }
}

}  // namespace detail
}  // namespace crfgrad
