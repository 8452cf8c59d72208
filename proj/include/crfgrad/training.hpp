#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "crfgrad/emp.hpp"
#include "crfgrad/fb.hpp"
#include "crfgrad/model.hpp"

namespace crfgrad {

struct Corpus {
  std::vector<SequenceInstance> instances;
};

enum class EngineKind { kFbFull, kFbRecompute, kFbCheckpoint, kEmp };

inline GradientResult sequence_gradient(const CrfModel& model, const SequenceInstance& x,
                                        EngineKind engine, EngineStats* stats = nullptr) {
  switch (engine) {
    case EngineKind::kFbFull:
      return fb_gradient(model, x, FbStrategy::kFullStorage, stats);
    case EngineKind::kFbRecompute:
      return fb_gradient(model, x, FbStrategy::kRecomputeMatrices, stats);
    case EngineKind::kFbCheckpoint:
      return fb_gradient(model, x, FbStrategy::kCheckpoint, stats);
    case EngineKind::kEmp:
      return emp_gradient(model, x, stats);
  }
  throw Error("bad-config", "unknown engine");
}

namespace detail {

inline const std::vector<int>& require_labels(const SequenceInstance& x) {
  if (!x.labels) throw Error("unlabeled", "instance carries no label sequence");
  if (x.labels->size() != x.observations.size())
    throw Error("dim-mismatch", "label sequence length differs from observation length");
  return *x.labels;
}

// Sum of active feature values along the labeled path; y0 is the start
// label in both start modes (the free mode marginalizes y0 only inside Z).
inline void add_empirical_counts(const CrfModel& model, const SequenceInstance& x,
                                 std::span<double> counts) {
  const auto& labels = require_labels(x);
  SparseFeatures feats;
  int y_prev = model.alphabet().start_label();
  for (int i = 1; i <= x.length(); ++i) {
    const int y = labels[static_cast<std::size_t>(i) - 1];
    if (y < 0 || y >= model.label_count()) throw Error("bad-label", "label index outside the alphabet");
    model.extract_into(model.vocab_id(x.observations[static_cast<std::size_t>(i) - 1]), y_prev, y, feats);
    for (const auto& ftr : feats.entries) counts[ftr.index] += ftr.value;
    y_prev = y;
  }
}

inline double path_score(const CrfModel& model, const SequenceInstance& x) {
  const auto& labels = require_labels(x);
  const std::span<const double> w = model.weights();
  SparseFeatures feats;
  double score = 0.0;
  int y_prev = model.alphabet().start_label();
  for (int i = 1; i <= x.length(); ++i) {
    const int y = labels[static_cast<std::size_t>(i) - 1];
    if (y < 0 || y >= model.label_count()) throw Error("bad-label", "label index outside the alphabet");
    model.extract_into(model.vocab_id(x.observations[static_cast<std::size_t>(i) - 1]), y_prev, y, feats);
    for (const auto& ftr : feats.entries) score += w[ftr.index] * ftr.value;
    y_prev = y;
  }
  return score;
}

}  // namespace detail

// Dataset log likelihood, minus (l2/2)*||theta||^2 when l2 > 0.
inline double log_likelihood(const CrfModel& model, const Corpus& corpus, double l2 = 0.0) {
  if (corpus.instances.empty()) throw Error("empty-corpus", "corpus has no instances");
  double total = 0.0;
  for (const auto& x : corpus.instances) {
    total += detail::path_score(model, x) - sequence_log_partition(model, x);
  }
  if (l2 > 0.0) {
    double norm2 = 0.0;
    for (double w : model.weights()) norm2 += w * w;
    total -= 0.5 * l2 * norm2;
  }
  return total;
}

// Empirical counts minus model-expected counts (minus l2*theta). Expected
// counts come from the configured engine; with workers > 1 the per-sequence
// gradients run in parallel and are reduced in corpus order, so the result
// does not depend on the worker count.
inline std::vector<double> likelihood_gradient(const CrfModel& model, const Corpus& corpus,
                                               EngineKind engine, double l2 = 0.0,
                                               int workers = 1) {
  if (corpus.instances.empty()) throw Error("empty-corpus", "corpus has no instances");
  const std::size_t m = model.feature_count();
  const std::size_t d = corpus.instances.size();

  std::vector<GradientResult> per_instance(d);
  if (workers <= 1 || d <= 1) {
    for (std::size_t i = 0; i < d; ++i)
      per_instance[i] = sequence_gradient(model, corpus.instances[i], engine);
  } else {
    const std::size_t nthreads = std::min<std::size_t>(static_cast<std::size_t>(workers), d);
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (std::size_t tix = 0; tix < nthreads; ++tix) {
      pool.emplace_back([&, tix] {
        for (std::size_t i = tix; i < d; i += nthreads)
          per_instance[i] = sequence_gradient(model, corpus.instances[i], engine);
      });
    }
    for (auto& th : pool) th.join();
  }

  std::vector<double> grad(m, 0.0);
  for (const auto& x : corpus.instances) detail::add_empirical_counts(model, x, grad);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < m; ++j) grad[j] -= per_instance[i].expected_counts[j];
  }
  if (l2 > 0.0) {
    const std::span<const double> w = model.weights();
    for (std::size_t j = 0; j < m; ++j) grad[j] -= l2 * w[j];
  }
  return grad;
}

// Central finite differences of the log likelihood; the independent oracle
// for the analytic gradient.
inline std::vector<double> fd_gradient(const CrfModel& model, const Corpus& corpus,
                                       double step = 1e-5, double l2 = 0.0) {
  if (step <= 0.0) throw Error("bad-config", "finite-difference step must be positive");
  const std::size_t m = model.feature_count();
  std::vector<double> grad(m, 0.0);
  std::vector<double> theta(model.weights().begin(), model.weights().end());
  for (std::size_t j = 0; j < m; ++j) {
    const double saved = theta[j];
    theta[j] = saved + step;
    const double up = log_likelihood(model.with_weights(theta), corpus, l2);
    theta[j] = saved - step;
    const double down = log_likelihood(model.with_weights(theta), corpus, l2);
    theta[j] = saved;
    grad[j] = (up - down) / (2.0 * step);
  }
  return grad;
}

// Exhaustive enumeration of every label path in the configured start mode,
// with max-score rescaling so the plain-domain sums stay finite. Guarded:
// refuses instances with more than 10^6 paths.
inline GradientResult brute_force_gradient(const CrfModel& model, const SequenceInstance& x) {
  detail::require_nonempty(x);
  const int n = model.label_count();
  const int t = x.length();
  const std::size_t m = model.feature_count();
  const bool free_start = model.start_mode() == StartMode::kFree;

  double path_count = free_start ? static_cast<double>(n) : 1.0;
  for (int i = 0; i < t; ++i) {
    path_count *= static_cast<double>(n);
    if (path_count > 1e6)
      throw Error("oracle-limit", "instance enumerates more than 1e6 label paths");
  }

  // Per-position kernels and active sets, shared by both passes.
  std::vector<TransitionMatrix> psi;
  psi.reserve(static_cast<std::size_t>(t));
  std::vector<std::vector<SparseFeatures>> feats(static_cast<std::size_t>(t));
  for (int i = 1; i <= t; ++i) {
    psi.push_back(model.build_transition_matrix(x.observations, i));
    auto& row = feats[static_cast<std::size_t>(i) - 1];
    row.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    const int v_id = model.vocab_id(x.observations[static_cast<std::size_t>(i) - 1]);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        model.extract_into(v_id, a, b, row[static_cast<std::size_t>(a) * static_cast<std::size_t>(n) + static_cast<std::size_t>(b)]);
  }

  const std::vector<int> starts = [&] {
    std::vector<int> s;
    if (free_start) {
      for (int y = 0; y < n; ++y) s.push_back(y);
    } else {
      s.push_back(model.alphabet().start_label());
    }
    return s;
  }();

  std::vector<int> path(static_cast<std::size_t>(t), 0);
  const auto for_each_path = [&](auto&& visit) {
    for (int y0 : starts) {
      std::fill(path.begin(), path.end(), 0);
      while (true) {
        double score = 0.0;
        int prev = y0;
        for (int i = 1; i <= t; ++i) {
          const int y = path[static_cast<std::size_t>(i) - 1];
          score += psi[static_cast<std::size_t>(i) - 1].at(prev, y);
          prev = y;
        }
        visit(y0, score);
        int pos = t - 1;
        while (pos >= 0 && path[static_cast<std::size_t>(pos)] == n - 1) {
          path[static_cast<std::size_t>(pos)] = 0;
          --pos;
        }
        if (pos < 0) break;
        ++path[static_cast<std::size_t>(pos)];
      }
    }
  };

  double max_score = kLogZero;
  for_each_path([&](int, double score) { max_score = std::max(max_score, score); });

  double z_scaled = 0.0;
  std::vector<double> grad_scaled(m, 0.0);
  for_each_path([&](int y0, double score) {
    const double weight = std::exp(score - max_score);
    z_scaled += weight;
    int prev = y0;
    for (int i = 1; i <= t; ++i) {
      const int y = path[static_cast<std::size_t>(i) - 1];
      const auto& active = feats[static_cast<std::size_t>(i) - 1]
                                [static_cast<std::size_t>(prev) * static_cast<std::size_t>(n) + static_cast<std::size_t>(y)];
      for (const auto& ftr : active.entries) grad_scaled[ftr.index] += weight * ftr.value;
      prev = y;
    }
  });

  GradientResult out;
  out.log_partition = max_score + std::log(z_scaled);
  out.log_gradient.resize(m);
  out.expected_counts.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    out.log_gradient[j] = grad_scaled[j] > 0.0 ? max_score + std::log(grad_scaled[j]) : kLogZero;
    out.expected_counts[j] = grad_scaled[j] / z_scaled;
  }
  return out;
}

struct TrainConfig {
  EngineKind engine = EngineKind::kFbFull;
  double step_size = 0.1;
  int iterations = 1;
  double l2 = 0.0;
  StartMode start_mode = StartMode::kFixed;
  int workers = 1;
};

struct TrainResult {
  CrfModel model;
  std::vector<double> trace;  // likelihood before training, then after each iteration
};

// Batch gradient ascent with a fixed step. Deterministic given its inputs.
inline TrainResult train(const CrfModel& model, const Corpus& corpus, const TrainConfig& config) {
  if (config.iterations < 1) throw Error("bad-config", "iterations must be >= 1");
  if (!(config.step_size > 0.0)) throw Error("bad-config", "step size must be positive");
  if (config.l2 < 0.0) throw Error("bad-config", "l2 must be nonnegative");
  if (config.start_mode != model.start_mode())
    throw Error("bad-config", "config start mode differs from the model's");

  CrfModel current = model;
  std::vector<double> theta(model.weights().begin(), model.weights().end());
  TrainResult out{current, {}};
  out.trace.reserve(static_cast<std::size_t>(config.iterations) + 1);
  out.trace.push_back(log_likelihood(current, corpus, config.l2));
  for (int it = 1; it <= config.iterations; ++it) {
    const std::vector<double> grad =
        likelihood_gradient(current, corpus, config.engine, config.l2, config.workers);
    for (std::size_t j = 0; j < theta.size(); ++j) theta[j] += config.step_size * grad[j];
    current = current.with_weights(theta);
    const double ll = log_likelihood(current, corpus, config.l2);
    if (!std::isfinite(ll)) throw Error("diverged", "iteration " + std::to_string(it));
    out.trace.push_back(ll);
  }
  out.model = current;
  return out;
}

}  // namespace crfgrad
