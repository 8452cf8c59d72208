#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "crfgrad/engine_common.hpp"
#include "crfgrad/semiring.hpp"

namespace crfgrad {

// Forward/backward vector at one chain position.
template <typename V>
struct MessageVector {
  int position = 0;
  std::vector<V> values;
};

// Square local-kernel matrix u_i, row-major (from-label, to-label).
template <typename V>
struct KernelMatrix {
  int n = 0;
  std::vector<V> cells;

  const V& at(int a, int b) const {
    return cells[static_cast<std::size_t>(a) * static_cast<std::size_t>(n) + static_cast<std::size_t>(b)];
  }
  V& at(int a, int b) {
    return cells[static_cast<std::size_t>(a) * static_cast<std::size_t>(n) + static_cast<std::size_t>(b)];
  }
};

namespace detail {
template <typename V>
void check_kernels(std::span<const KernelMatrix<V>> kernels) {
  if (kernels.empty()) throw Error("empty-sequence", "need at least one kernel matrix");
  const int n = kernels.front().n;
  if (n < 1) throw Error("dim-mismatch", "kernel matrices must be at least 1x1");
  for (const auto& k : kernels) {
    if (k.n != n || k.cells.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(n))
      throw Error("dim-mismatch", "kernel matrices must all be square of the same size");
  }
}
}  // namespace detail

// ⊕-fold in ascending index order, seeded with the additive identity.
template <Semiring S>
typename S::Value semiring_reduce(const S& sr, std::span<const typename S::Value> values) {
  typename S::Value acc = sr.zero();
  for (const auto& v : values) acc = sr.add(acc, v);
  return acc;
}

// alpha_0 = ⊗-identity vector unless an explicit start vector is given;
// alpha_i(y) = ⊕_{y'} u_i(y', y) ⊗ alpha_{i-1}(y').
template <Semiring S>
std::vector<MessageVector<typename S::Value>> generic_forward(
    const S& sr, std::span<const KernelMatrix<typename S::Value>> kernels,
    const std::vector<typename S::Value>* alpha0 = nullptr) {
  using V = typename S::Value;
  detail::check_kernels(kernels);
  const int n = kernels.front().n;
  const int t = static_cast<int>(kernels.size());
  if (alpha0 && static_cast<int>(alpha0->size()) != n)
    throw Error("dim-mismatch", "start vector length does not match kernel size");

  std::vector<MessageVector<V>> alpha(static_cast<std::size_t>(t) + 1);
  alpha[0].position = 0;
  alpha[0].values = alpha0 ? *alpha0 : std::vector<V>(static_cast<std::size_t>(n), sr.one());
  for (int i = 1; i <= t; ++i) {
    auto& out = alpha[static_cast<std::size_t>(i)];
    out.position = i;
    out.values.reserve(static_cast<std::size_t>(n));
    const auto& prev = alpha[static_cast<std::size_t>(i) - 1].values;
    const auto& u = kernels[static_cast<std::size_t>(i) - 1];
    for (int y = 0; y < n; ++y) {
      V acc = sr.zero();
      for (int yp = 0; yp < n; ++yp) acc = sr.add(acc, sr.mul(u.at(yp, y), prev[static_cast<std::size_t>(yp)]));
      out.values.push_back(std::move(acc));
    }
  }
  return alpha;
}

// beta_T = ⊗-identity vector; beta_i(y) = ⊕_{y''} u_{i+1}(y, y'') ⊗ beta_{i+1}(y'').
template <Semiring S>
std::vector<MessageVector<typename S::Value>> generic_backward(
    const S& sr, std::span<const KernelMatrix<typename S::Value>> kernels) {
  using V = typename S::Value;
  detail::check_kernels(kernels);
  const int n = kernels.front().n;
  const int t = static_cast<int>(kernels.size());

  std::vector<MessageVector<V>> beta(static_cast<std::size_t>(t) + 1);
  beta[static_cast<std::size_t>(t)].position = t;
  beta[static_cast<std::size_t>(t)].values = std::vector<V>(static_cast<std::size_t>(n), sr.one());
  for (int i = t - 1; i >= 0; --i) {
    auto& out = beta[static_cast<std::size_t>(i)];
    out.position = i;
    out.values.reserve(static_cast<std::size_t>(n));
    const auto& next = beta[static_cast<std::size_t>(i) + 1].values;
    const auto& u = kernels[static_cast<std::size_t>(i)];
    for (int y = 0; y < n; ++y) {
      V acc = sr.zero();
      for (int yn = 0; yn < n; ++yn) acc = sr.add(acc, sr.mul(u.at(y, yn), next[static_cast<std::size_t>(yn)]));
      out.values.push_back(std::move(acc));
    }
  }
  return beta;
}

// log Z = ⊕ over y_T of alpha_T(y_T).
inline LogValue log_partition(const MessageVector<LogValue>& alpha_t) {
  return detail::chain_reduce(alpha_t.values, nullptr);
}

// Pairwise log-marginal table v_k(a, b) = alpha_{k-1}(a) ⊗ u_k(a, b) ⊗ beta_k(b).
struct PairwiseMarginals {
  int position = 0;
  int n = 0;
  std::vector<LogValue> cells;  // row-major

  LogValue at(int a, int b) const {
    return cells[static_cast<std::size_t>(a) * static_cast<std::size_t>(n) + static_cast<std::size_t>(b)];
  }
};

inline PairwiseMarginals fb_marginals(std::span<const MessageVector<LogValue>> alpha,
                                      std::span<const MessageVector<LogValue>> beta,
                                      std::span<const KernelMatrix<LogValue>> kernels, int k) {
  const int t = static_cast<int>(kernels.size());
  if (k < 1 || k > t)
    throw Error("bad-position", "marginal position " + std::to_string(k) + " outside [1, " +
                                    std::to_string(t) + "]");
  const int n = kernels.front().n;
  PairwiseMarginals v;
  v.position = k;
  v.n = n;
  v.cells.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  const auto& a_vec = alpha[static_cast<std::size_t>(k) - 1].values;
  const auto& b_vec = beta[static_cast<std::size_t>(k)].values;
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      v.cells[static_cast<std::size_t>(a) * static_cast<std::size_t>(n) + static_cast<std::size_t>(b)] =
          a_vec[static_cast<std::size_t>(a)] + kernels[static_cast<std::size_t>(k) - 1].at(a, b) +
          b_vec[static_cast<std::size_t>(b)];
    }
  }
  return v;
}

// --- model-driven log-domain helpers ------------------------------------

inline std::vector<KernelMatrix<LogValue>> build_log_kernels(const CrfModel& model,
                                                             const SequenceInstance& x,
                                                             EngineStats* stats = nullptr) {
  detail::require_nonempty(x);
  const int n = model.label_count();
  std::vector<KernelMatrix<LogValue>> kernels(static_cast<std::size_t>(x.length()));
  SparseFeatures scratch;
  for (int i = 1; i <= x.length(); ++i) {
    auto& k = kernels[static_cast<std::size_t>(i) - 1];
    k.n = n;
    k.cells.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    if (stats) ++stats->position_reads;
    model.fill_kernel(model.vocab_id(x.observations[static_cast<std::size_t>(i) - 1]), k.cells,
                      scratch, stats);
  }
  return kernels;
}

// All log-domain forward vectors, start mode taken from the model.
inline std::vector<MessageVector<LogValue>> forward_messages(const CrfModel& model,
                                                             const SequenceInstance& x,
                                                             EngineStats* stats = nullptr) {
  detail::require_nonempty(x);
  const int n = model.label_count();
  const int t = x.length();
  std::vector<MessageVector<LogValue>> alpha(static_cast<std::size_t>(t) + 1);
  alpha[0].position = 0;
  alpha[0].values.resize(static_cast<std::size_t>(n));
  detail::init_alpha0(model.start_mode(), model.alphabet().start_label(), alpha[0].values);
  std::vector<double> psi(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  SparseFeatures scratch;
  for (int i = 1; i <= t; ++i) {
    if (stats) ++stats->position_reads;
    model.fill_kernel(model.vocab_id(x.observations[static_cast<std::size_t>(i) - 1]), psi, scratch, stats);
    alpha[static_cast<std::size_t>(i)].position = i;
    alpha[static_cast<std::size_t>(i)].values.resize(static_cast<std::size_t>(n));
    detail::chain_forward_step(psi, alpha[static_cast<std::size_t>(i) - 1].values,
                               alpha[static_cast<std::size_t>(i)].values, n, stats);
  }
  return alpha;
}

// log Z by a rolling two-vector forward pass; bitwise identical to the
// termination value of every gradient engine.
inline LogValue sequence_log_partition(const CrfModel& model, const SequenceInstance& x,
                                       EngineStats* stats = nullptr) {
  detail::require_nonempty(x);
  const int n = model.label_count();
  std::vector<double> cur(static_cast<std::size_t>(n)), nxt(static_cast<std::size_t>(n));
  detail::init_alpha0(model.start_mode(), model.alphabet().start_label(), cur);
  std::vector<double> psi(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  SparseFeatures scratch;
  for (int i = 1; i <= x.length(); ++i) {
    if (stats) ++stats->position_reads;
    model.fill_kernel(model.vocab_id(x.observations[static_cast<std::size_t>(i) - 1]), psi, scratch, stats);
    detail::chain_forward_step(psi, cur, nxt, n, stats);
    std::swap(cur, nxt);
  }
  return detail::chain_reduce(cur, stats);
}

// --- Algorithm-1 style gradient engine ----------------------------------

enum class FbStrategy { kFullStorage, kRecomputeMatrices, kCheckpoint };

namespace detail {

// One forward-backward gradient run. The three strategies share every
// arithmetic code path (kernel fill, chain steps, termination folds) and
// differ only in what is stored versus recomputed, so their results are
// bitwise identical.
class FbRun {
 public:
  FbRun(const CrfModel& model, const SequenceInstance& x, FbStrategy strategy, EngineStats* stats)
      : model_(model), x_(x), strategy_(strategy), stats_(stats) {
    require_nonempty(x_);
    mem_ = stats_ ? &stats_->mem : &fallback_mem_;
    n_ = model_.label_count();
    t_ = x_.length();
    nn_ = static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_);
    m_ = model_.feature_count();
    const CountingAllocator<double> alloc(mem_);
    alphas_ = CountedVec<double>(alloc);
    betas_ = CountedVec<double>(alloc);
    kernels_ = CountedVec<double>(alloc);
    scratch_psi_ = CountedVec<double>(alloc);
    acheck_ = CountedVec<double>(alloc);
    bcheck_ = CountedVec<double>(alloc);
    block_alpha_ = CountedVec<double>(alloc);
    block_beta_ = CountedVec<double>(alloc);
    alpha_t_ = CountedVec<double>(alloc);
    log_grad_ = CountedVec<double>(alloc);
    if (strategy_ == FbStrategy::kCheckpoint) {
      bsize_ = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(t_))));
      bsize_ = std::max<std::size_t>(bsize_, 1);
      nblocks_ = (static_cast<std::size_t>(t_) + bsize_ - 1) / bsize_;
    }
  }

  GradientResult run() {
    forward();
    backward();
    return terminate();
  }

 private:
  std::size_t rows(int position) const { return static_cast<std::size_t>(position) * static_cast<std::size_t>(n_); }

  int vid(int i) {
    if (stats_) ++stats_->position_reads;
    return model_.vocab_id(x_.observations[static_cast<std::size_t>(i) - 1]);
  }

  void fill_psi(int i, std::span<double> psi) { model_.fill_kernel(vid(i), psi, feats_, stats_); }

  void forward() {
    if (strategy_ == FbStrategy::kCheckpoint) {
      acheck_.resize(nblocks_ * static_cast<std::size_t>(n_));
      alpha_t_.resize(static_cast<std::size_t>(n_));
      scratch_psi_.resize(nn_);
      CountedVec<double> cur(static_cast<std::size_t>(n_), 0.0, CountingAllocator<double>(mem_));
      CountedVec<double> nxt(static_cast<std::size_t>(n_), 0.0, CountingAllocator<double>(mem_));
      init_alpha0(model_.start_mode(), model_.alphabet().start_label(), cur);
      for (int i = 1; i <= t_; ++i) {
        if ((static_cast<std::size_t>(i) - 1) % bsize_ == 0) {
          std::copy(cur.begin(), cur.end(),
                    acheck_.begin() + static_cast<std::ptrdiff_t>(((static_cast<std::size_t>(i) - 1) / bsize_) * static_cast<std::size_t>(n_)));
        }
        fill_psi(i, scratch_psi_);
        chain_forward_step(scratch_psi_, cur, nxt, n_, stats_);
        std::swap(cur, nxt);
      }
      std::copy(cur.begin(), cur.end(), alpha_t_.begin());
      return;
    }

    alphas_.resize(rows(t_ + 1));
    if (strategy_ == FbStrategy::kFullStorage) {
      kernels_.resize(static_cast<std::size_t>(t_) * nn_);
    } else {
      scratch_psi_.resize(nn_);
    }
    init_alpha0(model_.start_mode(), model_.alphabet().start_label(),
                std::span<double>(alphas_.data(), static_cast<std::size_t>(n_)));
    for (int i = 1; i <= t_; ++i) {
      std::span<double> psi = strategy_ == FbStrategy::kFullStorage
                                  ? std::span<double>(kernels_.data() + (static_cast<std::size_t>(i) - 1) * nn_, nn_)
                                  : std::span<double>(scratch_psi_);
      fill_psi(i, psi);
      chain_forward_step(psi, std::span<const double>(alphas_.data() + rows(i - 1), static_cast<std::size_t>(n_)),
                         std::span<double>(alphas_.data() + rows(i), static_cast<std::size_t>(n_)), n_, stats_);
    }
  }

  void backward() {
    if (strategy_ == FbStrategy::kCheckpoint) {
      bcheck_.resize(nblocks_ * static_cast<std::size_t>(n_));
      CountedVec<double> cur(static_cast<std::size_t>(n_), kLogOne, CountingAllocator<double>(mem_));
      CountedVec<double> nxt(static_cast<std::size_t>(n_), 0.0, CountingAllocator<double>(mem_));
      std::copy(cur.begin(), cur.end(),
                bcheck_.begin() + static_cast<std::ptrdiff_t>((nblocks_ - 1) * static_cast<std::size_t>(n_)));
      for (int i = t_ - 1; i >= static_cast<int>(bsize_); --i) {
        fill_psi(i + 1, scratch_psi_);
        chain_backward_step(scratch_psi_, cur, nxt, n_, stats_);
        std::swap(cur, nxt);
        if (static_cast<std::size_t>(i) % bsize_ == 0) {
          std::copy(cur.begin(), cur.end(),
                    bcheck_.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(i) / bsize_ - 1) * static_cast<std::size_t>(n_)));
        }
      }
      return;
    }

    // beta_0 is never read by the termination loop and is not computed.
    betas_.resize(rows(t_ + 1));
    std::fill(betas_.begin() + static_cast<std::ptrdiff_t>(rows(t_)), betas_.end(), kLogOne);
    for (int i = t_ - 1; i >= 1; --i) {
      std::span<const double> psi;
      if (strategy_ == FbStrategy::kFullStorage) {
        psi = std::span<const double>(kernels_.data() + static_cast<std::size_t>(i) * nn_, nn_);
      } else {
        fill_psi(i + 1, scratch_psi_);
        psi = scratch_psi_;
      }
      chain_backward_step(psi, std::span<const double>(betas_.data() + rows(i + 1), static_cast<std::size_t>(n_)),
                          std::span<double>(betas_.data() + rows(i), static_cast<std::size_t>(n_)), n_, stats_);
    }
  }

  // Rebuilds the forward and backward vectors of one checkpoint block from
  // its boundary vectors, replaying the exact chain-step arithmetic.
  void rebuild_block(std::size_t j) {
    const int s = static_cast<int>(j * bsize_);
    const int e = std::min(static_cast<int>((j + 1) * bsize_), t_);
    if (block_alpha_.empty()) {
      block_alpha_.resize(bsize_ * static_cast<std::size_t>(n_));
      block_beta_.resize(bsize_ * static_cast<std::size_t>(n_));
    }
    std::copy(acheck_.begin() + static_cast<std::ptrdiff_t>(j * static_cast<std::size_t>(n_)),
              acheck_.begin() + static_cast<std::ptrdiff_t>((j + 1) * static_cast<std::size_t>(n_)),
              block_alpha_.begin());
    for (int t = s + 1; t <= e - 1; ++t) {
      fill_psi(t, scratch_psi_);
      chain_forward_step(scratch_psi_,
                         std::span<const double>(block_alpha_.data() + rows(t - 1 - s), static_cast<std::size_t>(n_)),
                         std::span<double>(block_alpha_.data() + rows(t - s), static_cast<std::size_t>(n_)), n_, stats_);
    }
    std::copy(bcheck_.begin() + static_cast<std::ptrdiff_t>(j * static_cast<std::size_t>(n_)),
              bcheck_.begin() + static_cast<std::ptrdiff_t>((j + 1) * static_cast<std::size_t>(n_)),
              block_beta_.begin() + static_cast<std::ptrdiff_t>(rows(e - 1 - s)));
    for (int t = e - 1; t >= s + 1; --t) {
      fill_psi(t + 1, scratch_psi_);
      chain_backward_step(scratch_psi_,
                          std::span<const double>(block_beta_.data() + rows(t - s), static_cast<std::size_t>(n_)),
                          std::span<double>(block_beta_.data() + rows(t - 1 - s), static_cast<std::size_t>(n_)), n_, stats_);
    }
  }

  GradientResult terminate() {
    log_grad_.assign(m_, kLogZero);
    GradientResult out;
    out.log_partition =
        strategy_ == FbStrategy::kCheckpoint
            ? chain_reduce(alpha_t_, stats_)
            : chain_reduce(std::span<const double>(alphas_.data() + rows(t_), static_cast<std::size_t>(n_)), stats_);

    const std::span<const double> w = model_.weights();
    for (int k = 1; k <= t_; ++k) {
      const double* arow;
      const double* brow;
      if (strategy_ == FbStrategy::kCheckpoint) {
        const std::size_t j = (static_cast<std::size_t>(k) - 1) / bsize_;
        if ((static_cast<std::size_t>(k) - 1) % bsize_ == 0) rebuild_block(j);
        const int s = static_cast<int>(j * bsize_);
        arow = block_alpha_.data() + rows(k - 1 - s);
        brow = block_beta_.data() + rows(k - 1 - s);
      } else {
        arow = alphas_.data() + rows(k - 1);
        brow = betas_.data() + rows(k);
      }
      const double* kcells = strategy_ == FbStrategy::kFullStorage
                                 ? kernels_.data() + (static_cast<std::size_t>(k) - 1) * nn_
                                 : nullptr;
      const int v_id = vid(k);
      for (int a = 0; a < n_; ++a) {
        for (int b = 0; b < n_; ++b) {
          model_.extract_into(v_id, a, b, feats_);
          double cell;
          if (kcells) {
            cell = kcells[static_cast<std::size_t>(a) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(b)];
          } else {
            cell = 0.0;
            for (const auto& ftr : feats_.entries) cell += w[ftr.index] * ftr.value;
            if (stats_) {
              stats_->ops.muls += feats_.entries.size();
              stats_->ops.adds += feats_.entries.size();
            }
          }
          const double v = arow[a] + cell + brow[b];
          if (stats_) stats_->ops.adds += 2;
          for (const auto& ftr : feats_.entries) {
            if (ftr.value == 0.0) continue;  // log 0 would inject the ⊕-identity
            const double lnf = std::log(ftr.value);
            log_grad_[ftr.index] = log_add(log_grad_[ftr.index], v + lnf);
            if (stats_) {
              ++stats_->ops.log_evals;
              ++stats_->ops.adds;
              ++stats_->ops.log_adds;
            }
          }
        }
      }
    }
    detail::finish_gradient(out, std::span<const double>(log_grad_.data(), m_));
    return out;
  }

  const CrfModel& model_;
  const SequenceInstance& x_;
  FbStrategy strategy_;
  EngineStats* stats_;
  MemCounter fallback_mem_;
  MemCounter* mem_ = nullptr;
  int n_ = 0;
  int t_ = 0;
  std::size_t nn_ = 0;
  std::size_t m_ = 0;
  std::size_t bsize_ = 0;
  std::size_t nblocks_ = 0;
  CountedVec<double> alphas_, betas_, kernels_, scratch_psi_;
  CountedVec<double> acheck_, bcheck_, block_alpha_, block_beta_, alpha_t_;
  CountedVec<double> log_grad_;
  SparseFeatures feats_;
};

}  // namespace detail

inline GradientResult fb_gradient(const CrfModel& model, const SequenceInstance& x,
                                  FbStrategy strategy = FbStrategy::kFullStorage,
                                  EngineStats* stats = nullptr) {
  return detail::FbRun(model, x, strategy, stats).run();
}

inline GradientResult checkpoint_fb_gradient(const CrfModel& model, const SequenceInstance& x,
                                             EngineStats* stats = nullptr) {
  return fb_gradient(model, x, FbStrategy::kCheckpoint, stats);
}

// --- Viterbi decoding (max-plus instantiation) ---------------------------

struct ViterbiResult {
  std::vector<int> labels;  // y_1 .. y_T
  double score = 0.0;       // max over paths of the unnormalized log score
};

// Ties break toward the lowest label index.
inline ViterbiResult viterbi_decode(const CrfModel& model, const SequenceInstance& x,
                                    EngineStats* stats = nullptr) {
  detail::require_nonempty(x);
  const int n = model.label_count();
  const int t = x.length();
  std::vector<double> cur(static_cast<std::size_t>(n)), nxt(static_cast<std::size_t>(n));
  detail::init_alpha0(model.start_mode(), model.alphabet().start_label(), cur);
  std::vector<int> bp(static_cast<std::size_t>(t) * static_cast<std::size_t>(n), 0);
  std::vector<double> psi(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  SparseFeatures scratch;
  for (int i = 1; i <= t; ++i) {
    if (stats) ++stats->position_reads;
    model.fill_kernel(model.vocab_id(x.observations[static_cast<std::size_t>(i) - 1]), psi, scratch, stats);
    for (int y = 0; y < n; ++y) {
      double best = kLogZero;
      int arg = 0;
      for (int yp = 0; yp < n; ++yp) {
        const double s = psi[static_cast<std::size_t>(yp) * static_cast<std::size_t>(n) + static_cast<std::size_t>(y)] + cur[static_cast<std::size_t>(yp)];
        if (s > best) {
          best = s;
          arg = yp;
        }
      }
      nxt[static_cast<std::size_t>(y)] = best;
      bp[(static_cast<std::size_t>(i) - 1) * static_cast<std::size_t>(n) + static_cast<std::size_t>(y)] = arg;
    }
    std::swap(cur, nxt);
  }

  int best_y = 0;
  for (int y = 1; y < n; ++y) {
    if (cur[static_cast<std::size_t>(y)] > cur[static_cast<std::size_t>(best_y)]) best_y = y;
  }
  ViterbiResult out;
  out.score = cur[static_cast<std::size_t>(best_y)];
  out.labels.resize(static_cast<std::size_t>(t));
  out.labels[static_cast<std::size_t>(t) - 1] = best_y;
  for (int i = t; i >= 2; --i) {
    out.labels[static_cast<std::size_t>(i) - 2] =
        bp[(static_cast<std::size_t>(i) - 1) * static_cast<std::size_t>(n) + static_cast<std::size_t>(out.labels[static_cast<std::size_t>(i) - 1])];
  }
  return out;
}

}  // namespace crfgrad
