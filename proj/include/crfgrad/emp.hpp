#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "crfgrad/engine_common.hpp"

namespace crfgrad {

// Forward state of the log-domain expectation-semiring recursion: the
// current generation of pair-valued messages split into their z- and
// h-parts, the hatted next-generation buffers, and the current kernel.
// Exactly two generations exist at any time; a step swaps the buffer
// handles instead of copying, so the retained storage is Theta(N^2 + N*M)
// cells no matter how long the sequence runs.
class EmpState {
 public:
  EmpState(const LabelAlphabet& alphabet, std::size_t order, StartMode mode,
           MemCounter* mem = nullptr)
      : n_(alphabet.size()), order_(order), mem_(mem ? mem : &own_mem_) {
    const CountingAllocator<double> alloc(mem_);
    alpha_z_ = CountedVec<double>(static_cast<std::size_t>(n_), 0.0, alloc);
    hat_z_ = CountedVec<double>(static_cast<std::size_t>(n_), 0.0, alloc);
    alpha_h_ = CountedVec<double>(static_cast<std::size_t>(n_) * order_, kLogZero, alloc);
    hat_h_ = CountedVec<double>(static_cast<std::size_t>(n_) * order_, kLogZero, alloc);
    psi_ = CountedVec<double>(static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_), 0.0, alloc);
    detail::init_alpha0(mode, alphabet.start_label(), alpha_z_);
  }

  // The state owns buffers registered with a MemCounter that may be its
  // own member; relocating it would dangle that pointer.
  EmpState(const EmpState&) = delete;
  EmpState& operator=(const EmpState&) = delete;

  int label_count() const { return n_; }
  std::size_t order() const { return order_; }
  int position() const { return position_; }

  std::span<const double> alpha_z() const { return {alpha_z_.data(), alpha_z_.size()}; }
  double alpha_h_at(int y, std::size_t m) const { return alpha_h_[static_cast<std::size_t>(y) * order_ + m]; }

  // Live engine-owned buffer cells (constant across steps and sequence lengths).
  std::int64_t live_cells() const { return mem_->live(); }

  friend void emp_step(EmpState&, const CrfModel&, const SequenceInstance&, int, EngineStats*);

 private:
  int n_;
  std::size_t order_;
  int position_ = 0;
  MemCounter own_mem_;
  MemCounter* mem_;
  CountedVec<double> alpha_z_, hat_z_, alpha_h_, hat_h_, psi_;
  std::vector<SparseFeatures> feat_cells_;  // per-pair scratch, reused every step
};

inline EmpState emp_init(const LabelAlphabet& alphabet, std::size_t order, StartMode mode,
                         MemCounter* mem = nullptr) {
  return EmpState(alphabet, order, mode, mem);
}

// Advances the state from position i-1 to i. The z-part replays the plain
// log-domain forward step; the h-part first propagates all M coordinates
// densely and then folds in the sparse active-set injections, in that
// fixed order.
inline void emp_step(EmpState& state, const CrfModel& model, const SequenceInstance& x, int i,
                     EngineStats* stats = nullptr) {
  const int n = state.n_;
  const std::size_t order = state.order_;
  if (model.label_count() != n || model.feature_count() != order)
    throw Error("dim-mismatch", "state shape does not match the model");
  if (i < 1 || i > x.length())
    throw Error("bad-position", "position " + std::to_string(i) + " outside [1, " +
                                    std::to_string(x.length()) + "]");
  if (i != state.position_ + 1)
    throw Error("bad-position", "state is at position " + std::to_string(state.position_) +
                                    ", cannot step to " + std::to_string(i));

  if (stats) ++stats->position_reads;
  const int v_id = model.vocab_id(x.observations[static_cast<std::size_t>(i) - 1]);
  const std::span<const double> w = model.weights();

  // Kernel and active sets for this position, extracted once per pair.
  if (state.feat_cells_.empty()) state.feat_cells_.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      const std::size_t cell = static_cast<std::size_t>(a) * static_cast<std::size_t>(n) + static_cast<std::size_t>(b);
      SparseFeatures& feats = state.feat_cells_[cell];
      model.extract_into(v_id, a, b, feats);
      double value = 0.0;
      for (const auto& ftr : feats.entries) value += w[ftr.index] * ftr.value;
      state.psi_[cell] = value;
      if (stats) {
        stats->ops.muls += feats.entries.size();
        stats->ops.adds += feats.entries.size();
      }
    }
  }

  detail::chain_forward_step(state.psi_, state.alpha_z_, state.hat_z_, n, stats);

  // Dense propagation of every h coordinate through the kernel.
  for (int y = 0; y < n; ++y) {
    for (std::size_t m = 0; m < order; ++m) {
      LogValue acc = kLogZero;
      for (int yp = 0; yp < n; ++yp) {
        acc = log_add(acc, state.psi_[static_cast<std::size_t>(yp) * static_cast<std::size_t>(n) + static_cast<std::size_t>(y)] +
                               state.alpha_h_[static_cast<std::size_t>(yp) * order + m]);
      }
      state.hat_h_[static_cast<std::size_t>(y) * order + m] = acc;
    }
  }
  if (stats) {
    const auto nn = static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n);
    stats->ops.log_adds += nn * order;
    stats->ops.adds += nn * order;
  }

  // Sparse injection gamma(y') = psi(y', y) ⊗ alpha_z(y'), only over the
  // active sets.
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      const std::size_t cell = static_cast<std::size_t>(a) * static_cast<std::size_t>(n) + static_cast<std::size_t>(b);
      const double gamma = state.psi_[cell] + state.alpha_z_[static_cast<std::size_t>(a)];
      if (stats) ++stats->ops.adds;
      for (const auto& ftr : state.feat_cells_[cell].entries) {
        if (ftr.value == 0.0) continue;
        const double lnf = std::log(ftr.value);
        const std::size_t slot = static_cast<std::size_t>(b) * order + ftr.index;
        state.hat_h_[slot] = log_add(state.hat_h_[slot], gamma + lnf);
        if (stats) {
          ++stats->ops.log_evals;
          ++stats->ops.adds;
          ++stats->ops.log_adds;
        }
      }
    }
  }

  std::swap(state.alpha_z_, state.hat_z_);
  std::swap(state.alpha_h_, state.hat_h_);
  ++state.position_;
}

// Single forward pass: log Z and the full log-gradient fall out of the
// final pair-valued forward vector. Kernels are computed in-loop and
// overwritten, never stored per position.
inline GradientResult emp_gradient(const CrfModel& model, const SequenceInstance& x,
                                   EngineStats* stats = nullptr,
                                   std::vector<std::vector<double>>* z_history = nullptr) {
  detail::require_nonempty(x);
  EmpState state(model.alphabet(), model.feature_count(), model.start_mode(),
                 stats ? &stats->mem : nullptr);
  if (z_history) z_history->emplace_back(state.alpha_z().begin(), state.alpha_z().end());
  for (int i = 1; i <= x.length(); ++i) {
    emp_step(state, model, x, i, stats);
    if (z_history) z_history->emplace_back(state.alpha_z().begin(), state.alpha_z().end());
  }

  GradientResult out;
  out.log_partition = detail::chain_reduce(state.alpha_z(), stats);
  const std::size_t order = model.feature_count();
  std::vector<double> log_grad(order, kLogZero);
  for (std::size_t m = 0; m < order; ++m) {
    LogValue acc = kLogZero;
    for (int y = 0; y < model.label_count(); ++y) acc = log_add(acc, state.alpha_h_at(y, m));
    log_grad[m] = acc;
  }
  if (stats) stats->ops.log_adds += order * static_cast<std::uint64_t>(model.label_count());
  detail::finish_gradient(out, log_grad);
  return out;
}

}  // namespace crfgrad
