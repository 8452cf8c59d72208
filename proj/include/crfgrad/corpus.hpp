#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <random>
#include <string>
#include <vector>

#include "crfgrad/error.hpp"
#include "crfgrad/model.hpp"
#include "crfgrad/training.hpp"

namespace crfgrad {

// Sequence as read from text, before labels are resolved to indices.
struct RawSequence {
  std::vector<std::string> tokens;
  std::vector<std::string> labels;  // empty when the sequence is unlabeled
};

struct RawCorpus {
  std::vector<RawSequence> sequences;
  int skipped_empty = 0;  // blank-line runs that delimited nothing
};

// One "token<TAB>label" per line, blank line between sequences; the final
// blank line may be omitted. CRLF endings are accepted. With
// require_labels=false a line may also be a bare token.
inline RawCorpus parse_corpus(std::istream& in, bool require_labels = true) {
  RawCorpus corpus;
  RawSequence current;
  std::string line;
  int line_no = 0;
  const auto flush = [&] {
    if (current.tokens.empty()) {
      ++corpus.skipped_empty;
      return;
    }
    if (!current.labels.empty() && current.labels.size() != current.tokens.size())
      throw Error("parse", "sequence ending at line " + std::to_string(line_no) +
                               " mixes labeled and unlabeled lines");
    corpus.sequences.push_back(std::move(current));
    current = RawSequence{};
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      if (require_labels)
        throw Error("parse", "line " + std::to_string(line_no) + ": missing tab separator");
      current.tokens.push_back(line);
      continue;
    }
    std::string token = line.substr(0, tab);
    std::string label = line.substr(tab + 1);
    if (token.empty()) throw Error("parse", "line " + std::to_string(line_no) + ": empty token");
    if (label.empty()) throw Error("parse", "line " + std::to_string(line_no) + ": empty label");
    current.tokens.push_back(std::move(token));
    current.labels.push_back(std::move(label));
  }
  ++line_no;
  if (!current.tokens.empty()) flush();
  if (corpus.sequences.empty()) throw Error("empty-corpus", "no sequences in input");
  return corpus;
}

// Label names interned in first-seen order, then sorted lexicographically
// before indexing.
inline std::vector<std::string> label_names_from(const RawCorpus& raw) {
  std::vector<std::string> names;
  for (const auto& seq : raw.sequences)
    for (const auto& label : seq.labels)
      if (std::find(names.begin(), names.end(), label) == names.end()) names.push_back(label);
  if (names.empty()) throw Error("no-labels", "corpus carries no labeled sequence");
  std::sort(names.begin(), names.end());
  return names;
}

inline std::vector<std::string> vocab_from(const RawCorpus& raw) {
  std::vector<std::string> vocab;
  for (const auto& seq : raw.sequences)
    for (const auto& token : seq.tokens) vocab.push_back(token);
  std::sort(vocab.begin(), vocab.end());
  vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
  return vocab;
}

// Resolves label names against the alphabet; unknown names are an error.
inline Corpus resolve_corpus(const RawCorpus& raw, const LabelAlphabet& alphabet) {
  Corpus corpus;
  corpus.instances.reserve(raw.sequences.size());
  for (const auto& seq : raw.sequences) {
    SequenceInstance inst;
    inst.observations = seq.tokens;
    if (!seq.labels.empty()) {
      std::vector<int> ids;
      ids.reserve(seq.labels.size());
      for (const auto& label : seq.labels) {
        const int y = alphabet.index_of(label);
        if (y < 0) throw Error("unknown-label", "label '" + label + "' not in the alphabet");
        ids.push_back(y);
      }
      inst.labels = std::move(ids);
    }
    corpus.instances.push_back(std::move(inst));
  }
  return corpus;
}

inline CrfModel build_model(const RawCorpus& raw, FeatureTemplates templates, StartMode mode,
                            int start_label = 0) {
  LabelAlphabet alphabet(label_names_from(raw), start_label);
  return CrfModel(std::move(alphabet), templates,
                  templates.emissions ? vocab_from(raw) : std::vector<std::string>{}, mode);
}

// --- synthetic corpus ----------------------------------------------------

namespace detail {

// mt19937_64 output mapped to [0, 1); the standard pins the generator's
// bit stream, so corpora reproduce across platforms (the std distribution
// adapters do not promise that and are avoided).
inline double unit_draw(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline int categorical_draw(std::mt19937_64& rng, const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = unit_draw(rng) * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    u -= weights[i];
    if (u < 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(weights.size()) - 1;
}

inline std::string padded_name(const std::string& prefix, int index, int count) {
  std::string digits = std::to_string(index);
  const std::size_t width = std::to_string(count - 1).size();
  while (digits.size() < width) digits.insert(digits.begin(), '0');
  return prefix + digits;
}

}  // namespace detail

// Transition weight of the generating chain: label a prefers to move to
// (a+1) mod N with odds 3:1 against each other label.
inline double synth_transition_weight(int a, int b, int n_labels) {
  return b == (a + 1) % n_labels ? 3.0 : 1.0;
}

// Emission weight: label b prefers token (b mod V) with the same 3:1 odds.
inline double synth_emission_weight(int b, int w, int vocab_size) {
  return w == b % vocab_size ? 3.0 : 1.0;
}

// Samples D sequences of length T from the fixed chain above. y_1 is drawn
// from the transition row of label 0, matching a fixed-start chain whose
// start label is index 0. Deterministic in the seed.
inline RawCorpus synth_corpus(std::uint64_t seed, int n_labels, int t, int d, int vocab_size) {
  if (n_labels < 1 || t < 1 || d < 1 || vocab_size < 1)
    throw Error("bad-config", "synth_corpus dimensions must all be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<std::string> label_names(static_cast<std::size_t>(n_labels));
  for (int i = 0; i < n_labels; ++i) label_names[static_cast<std::size_t>(i)] = detail::padded_name("L", i, n_labels);
  std::vector<std::string> token_names(static_cast<std::size_t>(vocab_size));
  for (int i = 0; i < vocab_size; ++i) token_names[static_cast<std::size_t>(i)] = detail::padded_name("w", i, vocab_size);

  std::vector<std::vector<double>> trans(static_cast<std::size_t>(n_labels),
                                         std::vector<double>(static_cast<std::size_t>(n_labels)));
  for (int a = 0; a < n_labels; ++a)
    for (int b = 0; b < n_labels; ++b) trans[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = synth_transition_weight(a, b, n_labels);
  std::vector<std::vector<double>> emit(static_cast<std::size_t>(n_labels),
                                        std::vector<double>(static_cast<std::size_t>(vocab_size)));
  for (int b = 0; b < n_labels; ++b)
    for (int w = 0; w < vocab_size; ++w) emit[static_cast<std::size_t>(b)][static_cast<std::size_t>(w)] = synth_emission_weight(b, w, vocab_size);

  RawCorpus corpus;
  corpus.sequences.resize(static_cast<std::size_t>(d));
  for (auto& seq : corpus.sequences) {
    seq.tokens.reserve(static_cast<std::size_t>(t));
    seq.labels.reserve(static_cast<std::size_t>(t));
    int prev = 0;
    for (int i = 0; i < t; ++i) {
      const int y = detail::categorical_draw(rng, trans[static_cast<std::size_t>(prev)]);
      const int w = detail::categorical_draw(rng, emit[static_cast<std::size_t>(y)]);
      seq.labels.push_back(label_names[static_cast<std::size_t>(y)]);
      seq.tokens.push_back(token_names[static_cast<std::size_t>(w)]);
      prev = y;
    }
  }
  return corpus;
}

// Exact corpus-scan average active-set size over all (position, label pair)
// cells: the paper's A.
inline double measured_avg_active(const CrfModel& model, const Corpus& corpus) {
  const int n = model.label_count();
  SparseFeatures feats;
  std::uint64_t total = 0;
  std::uint64_t cells = 0;
  for (const auto& x : corpus.instances) {
    for (int i = 1; i <= x.length(); ++i) {
      const int v_id = model.vocab_id(x.observations[static_cast<std::size_t>(i) - 1]);
      for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
          model.extract_into(v_id, a, b, feats);
          total += feats.entries.size();
          ++cells;
        }
      }
    }
  }
  return cells == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(cells);
}

}  // namespace crfgrad
