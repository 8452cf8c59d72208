#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "crfgrad/counters.hpp"
#include "crfgrad/error.hpp"

namespace crfgrad {

// Which paths the chain sums over: fixed pins y0 to the alphabet's start
// label (N^T paths); free also sums over y0 (N^(T+1) paths).
enum class StartMode : std::uint8_t { kFixed = 0, kFree = 1 };

// Ordered label set. Canonical index order is lexicographic in the label
// names; start_label designates y0 for fixed-start chains.
class LabelAlphabet {
 public:
  explicit LabelAlphabet(std::vector<std::string> labels, int start_label = 0)
      : labels_(std::move(labels)), start_label_(start_label) {
    if (labels_.empty()) throw Error("bad-alphabet", "alphabet needs at least one label");
    if (start_label_ < 0 || start_label_ >= size())
      throw Error("bad-alphabet", "start label index out of range");
    for (int i = 0; i < size(); ++i) {
      if (!index_.emplace(labels_[i], i).second)
        throw Error("bad-alphabet", "duplicate label '" + labels_[i] + "'");
    }
  }

  int size() const { return static_cast<int>(labels_.size()); }
  const std::string& name(int y) const { return labels_.at(static_cast<std::size_t>(y)); }
  const std::vector<std::string>& names() const { return labels_; }
  int start_label() const { return start_label_; }

  // -1 when unknown.
  int index_of(const std::string& label) const {
    auto it = index_.find(label);
    return it == index_.end() ? -1 : it->second;
  }

  friend bool operator==(const LabelAlphabet& a, const LabelAlphabet& b) {
    return a.labels_ == b.labels_ && a.start_label_ == b.start_label_;
  }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, int> index_;
  int start_label_;
};

// Active feature set for one (position, label pair): indices strictly
// increasing and unique, values nonnegative; an absent index means zero.
struct SparseFeatures {
  struct Entry {
    std::size_t index;
    double value;
    bool operator==(const Entry&) const = default;
  };
  std::vector<Entry> entries;

  void clear() { entries.clear(); }
  bool operator==(const SparseFeatures&) const = default;
};

struct FeatureTemplates {
  bool transitions = true;
  bool emissions = true;
  bool operator==(const FeatureTemplates&) const = default;
};

// One observation sequence; labels (y_1..y_T as indices) optional.
struct SequenceInstance {
  std::vector<std::string> observations;
  std::optional<std::vector<int>> labels;

  int length() const { return static_cast<int>(observations.size()); }
};

// Log-potential matrix for one position: cell (a, b) = <theta, f(a, b, x, i)>.
struct TransitionMatrix {
  int position = 0;
  int n = 0;
  std::vector<double> cells;  // row-major: from-label a, to-label b

  double at(int a, int b) const {
    return cells[static_cast<std::size_t>(a) * static_cast<std::size_t>(n) + static_cast<std::size_t>(b)];
  }
};

// Linear-chain CRF: alphabet, indicator feature templates over a fixed
// vocabulary, and the weight vector. Immutable after construction; the
// table core is shared, so with_weights() clones are cheap and the model
// can be read from any number of threads.
//
// Feature index layout (lexicographic in (template id, label ids, token)):
//   transitions, when enabled:  m = a*N + b            for all label pairs
//   emissions, when enabled:    m = base + b*V + w     vocab sorted, w its rank
class CrfModel {
 public:
  CrfModel(LabelAlphabet alphabet, FeatureTemplates templates, std::vector<std::string> vocab,
           StartMode mode)
      : core_(std::make_shared<const Core>(std::move(alphabet), templates, std::move(vocab))),
        mode_(mode),
        weights_(core_->feature_count, 0.0) {}

  const LabelAlphabet& alphabet() const { return core_->alphabet; }
  int label_count() const { return core_->alphabet.size(); }
  StartMode start_mode() const { return mode_; }
  const FeatureTemplates& templates() const { return core_->templates; }
  const std::vector<std::string>& vocab() const { return core_->vocab; }

  std::size_t feature_count() const { return core_->feature_count; }
  std::span<const double> weights() const { return weights_; }

  CrfModel with_weights(std::vector<double> w) const {
    if (w.size() != core_->feature_count)
      throw Error("dim-mismatch", "weight vector of length " + std::to_string(w.size()) +
                                      " for a model with M=" + std::to_string(core_->feature_count));
    CrfModel out(*this);
    out.weights_ = std::move(w);
    return out;
  }

  // -1 when the token is outside the training vocabulary.
  int vocab_id(const std::string& token) const {
    auto it = core_->vocab_index.find(token);
    return it == core_->vocab_index.end() ? -1 : it->second;
  }

  std::size_t transition_feature(int a, int b) const {
    const auto n = static_cast<std::size_t>(label_count());
    return static_cast<std::size_t>(a) * n + static_cast<std::size_t>(b);
  }

  std::size_t emission_feature(int label, int vocab_id) const {
    return core_->emission_base + static_cast<std::size_t>(label) * core_->vocab.size() +
           static_cast<std::size_t>(vocab_id);
  }

  // Canonical name of feature m. Label parts are indices so that tokens
  // containing '|' stay unambiguous: "t|<a>|<b>" and "e|<b>|<token>".
  std::string feature_name(std::size_t m) const {
    if (m >= core_->feature_count) throw Error("dim-mismatch", "feature index out of range");
    const auto n = static_cast<std::size_t>(label_count());
    if (core_->templates.transitions && m < n * n) {
      return "t|" + std::to_string(m / n) + "|" + std::to_string(m % n);
    }
    const std::size_t e = m - core_->emission_base;
    const std::size_t v = core_->vocab.size();
    return "e|" + std::to_string(e / v) + "|" + core_->vocab[e % v];
  }

  std::optional<std::size_t> feature_index(const std::string& name) const {
    const auto n = static_cast<std::size_t>(label_count());
    if (name.size() < 4 || name[1] != '|') return std::nullopt;
    const std::size_t sep = name.find('|', 2);
    if (sep == std::string::npos) return std::nullopt;
    const std::string first_text = name.substr(2, sep - 2);
    std::size_t first = 0;
    try {
      first = static_cast<std::size_t>(std::stoul(first_text));
    } catch (const std::exception&) {
      return std::nullopt;
    }
    if (first >= n || std::to_string(first) != first_text) return std::nullopt;
    const std::string tail = name.substr(sep + 1);
    if (name[0] == 't') {
      if (!core_->templates.transitions) return std::nullopt;
      std::size_t second = 0;
      try {
        second = static_cast<std::size_t>(std::stoul(tail));
      } catch (const std::exception&) {
        return std::nullopt;
      }
      if (second >= n || std::to_string(second) != tail) return std::nullopt;
      return first * n + second;
    }
    if (name[0] == 'e') {
      if (!core_->templates.emissions) return std::nullopt;
      auto it = core_->vocab_index.find(tail);
      if (it == core_->vocab_index.end()) return std::nullopt;
      return emission_feature(static_cast<int>(first), it->second);
    }
    return std::nullopt;
  }

  // Active set A_i(y_prev, y) with values, indices ascending. The token id
  // is resolved by the caller so per-position engines pay one lookup per
  // position instead of one per label pair.
  void extract_into(int token_vocab_id, int y_prev, int y, SparseFeatures& out) const {
    out.clear();
    if (core_->templates.transitions)
      out.entries.push_back({transition_feature(y_prev, y), 1.0});
    if (core_->templates.emissions && token_vocab_id >= 0)
      out.entries.push_back({emission_feature(y, token_vocab_id), 1.0});
  }

  SparseFeatures extract_features(const std::vector<std::string>& x, int i, int y_prev,
                                  int y) const {
    if (i < 1 || i > static_cast<int>(x.size()))
      throw Error("bad-position", "position " + std::to_string(i) + " outside [1, " +
                                      std::to_string(x.size()) + "]");
    if (y_prev < 0 || y_prev >= label_count() || y < 0 || y >= label_count())
      throw Error("bad-label", "label index outside the alphabet");
    SparseFeatures out;
    extract_into(vocab_id(x[static_cast<std::size_t>(i) - 1]), y_prev, y, out);
    return out;
  }

  // Fills the N x N log-potential matrix for one resolved token, row-major,
  // summing theta[m] * f_m over the active set in ascending m.
  void fill_kernel(int token_vocab_id, std::span<double> psi, SparseFeatures& scratch,
                   EngineStats* stats = nullptr) const {
    const int n = label_count();
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        extract_into(token_vocab_id, a, b, scratch);
        double cell = 0.0;
        for (const auto& e : scratch.entries) cell += weights_[e.index] * e.value;
        psi[static_cast<std::size_t>(a) * static_cast<std::size_t>(n) + static_cast<std::size_t>(b)] = cell;
        if (stats) {
          stats->ops.muls += scratch.entries.size();
          stats->ops.adds += scratch.entries.size();
        }
      }
    }
  }

  TransitionMatrix build_transition_matrix(const std::vector<std::string>& x, int i,
                                           EngineStats* stats = nullptr) const {
    if (i < 1 || i > static_cast<int>(x.size()))
      throw Error("bad-position", "position " + std::to_string(i) + " outside [1, " +
                                      std::to_string(x.size()) + "]");
    TransitionMatrix tm;
    tm.position = i;
    tm.n = label_count();
    tm.cells.assign(static_cast<std::size_t>(tm.n) * static_cast<std::size_t>(tm.n), 0.0);
    SparseFeatures scratch;
    fill_kernel(vocab_id(x[static_cast<std::size_t>(i) - 1]), tm.cells, scratch, stats);
    return tm;
  }

  friend bool operator==(const CrfModel& a, const CrfModel& b) {
    return a.alphabet() == b.alphabet() && a.templates() == b.templates() &&
           a.vocab() == b.vocab() && a.mode_ == b.mode_ && a.weights_ == b.weights_;
  }

 private:
  struct Core {
    LabelAlphabet alphabet;
    FeatureTemplates templates;
    std::vector<std::string> vocab;
    std::unordered_map<std::string, int> vocab_index;
    std::size_t emission_base = 0;
    std::size_t feature_count = 0;

    Core(LabelAlphabet a, FeatureTemplates t, std::vector<std::string> v)
        : alphabet(std::move(a)), templates(t), vocab(std::move(v)) {
      for (int i = 0; i < static_cast<int>(vocab.size()); ++i) {
        if (!vocab_index.emplace(vocab[i], i).second)
          throw Error("bad-vocab", "duplicate token '" + vocab[i] + "'");
      }
      const auto n = static_cast<std::size_t>(alphabet.size());
      emission_base = templates.transitions ? n * n : 0;
      feature_count = emission_base + (templates.emissions ? n * vocab.size() : 0);
    }
  };

  std::shared_ptr<const Core> core_;
  StartMode mode_;
  std::vector<double> weights_;
};

}  // namespace crfgrad
