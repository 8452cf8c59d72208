#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <istream>
#include <type_traits>
#include <ostream>
#include <string>
#include <unordered_set>
#include <vector>

#include "crfgrad/error.hpp"
#include "crfgrad/model.hpp"

namespace crfgrad {

// Versioned binary model format, little-endian:
//   magic "CRFG" | u16 version | u8 start mode | u32 start label |
//   u8 template mask | u32 N + label strings | u32 M + feature-name
//   strings | M x f64 weights
// Strings are u32 byte length + raw bytes. Feature names are stored in
// index order and must re-derive to the canonical layout on load.

namespace detail_io {

inline constexpr char kMagic[4] = {'C', 'R', 'F', 'G'};
inline constexpr std::uint16_t kVersion = 1;

inline void put_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const char byte = static_cast<char>((value >> (8 * i)) & 0xff);
    out.put(byte);
  }
}

inline void put_f64(std::ostream& out, double value) {
  put_le(out, std::bit_cast<std::uint64_t>(value));
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_le(out, static_cast<std::uint32_t>(s.size()));
  put_bytes(out, s.data(), s.size());
}

inline void take_bytes(std::istream& in, void* p, std::size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw Error("truncated", "model stream ended early");
}

template <typename T>
T take_le(std::istream& in) {
  static_assert(std::is_unsigned_v<T>);
  unsigned char buf[sizeof(T)];
  take_bytes(in, buf, sizeof(T));
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(buf[i]) << (8 * i);
  return value;
}

inline double take_f64(std::istream& in) {
  return std::bit_cast<double>(take_le<std::uint64_t>(in));
}

inline std::string take_string(std::istream& in) {
  const auto len = take_le<std::uint32_t>(in);
  std::string s(len, '\0');
  if (len > 0) take_bytes(in, s.data(), len);
  return s;
}

}  // namespace detail_io

inline void serialize_model(const CrfModel& model, std::ostream& out) {
  using namespace detail_io;
  put_bytes(out, kMagic, sizeof(kMagic));
  put_le(out, kVersion);
  put_le(out, static_cast<std::uint8_t>(model.start_mode()));
  put_le(out, static_cast<std::uint32_t>(model.alphabet().start_label()));
  const std::uint8_t mask = (model.templates().transitions ? 1u : 0u) |
                            (model.templates().emissions ? 2u : 0u);
  put_le(out, mask);
  put_le(out, static_cast<std::uint32_t>(model.label_count()));
  for (const auto& name : model.alphabet().names()) put_string(out, name);
  put_le(out, static_cast<std::uint32_t>(model.feature_count()));
  for (std::size_t m = 0; m < model.feature_count(); ++m) put_string(out, model.feature_name(m));
  for (double w : model.weights()) put_f64(out, w);
  if (!out) throw Error("io", "failed writing model stream");
}

inline CrfModel deserialize_model(std::istream& in) {
  using namespace detail_io;
  char magic[4];
  take_bytes(in, magic, sizeof(magic));
  if (std::string(magic, 4) != std::string(kMagic, 4))
    throw Error("bad-magic", "not a CRFG model stream");
  const auto version = take_le<std::uint16_t>(in);
  if (version != kVersion)
    throw Error("bad-version", "model format version " + std::to_string(version) +
                                   ", expected " + std::to_string(kVersion));
  const auto mode_byte = take_le<std::uint8_t>(in);
  if (mode_byte > 1) throw Error("corrupt", "unknown start mode flag");
  const auto start_label = take_le<std::uint32_t>(in);
  const auto mask = take_le<std::uint8_t>(in);
  if (mask > 3) throw Error("corrupt", "unknown template mask");
  FeatureTemplates templates{(mask & 1u) != 0, (mask & 2u) != 0};

  const auto n = take_le<std::uint32_t>(in);
  std::vector<std::string> labels;
  labels.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) labels.push_back(take_string(in));

  const auto m_count = take_le<std::uint32_t>(in);
  std::vector<std::string> names;
  names.reserve(m_count);
  std::unordered_set<std::string> seen;
  for (std::uint32_t m = 0; m < m_count; ++m) {
    names.push_back(take_string(in));
    if (!seen.insert(names.back()).second)
      throw Error("duplicate-feature", "feature name '" + names.back() + "' appears twice");
  }

  std::vector<double> weights;
  weights.reserve(m_count);
  for (std::uint32_t m = 0; m < m_count; ++m) weights.push_back(take_f64(in));

  // The vocabulary is exactly the token set of the emission names; the
  // canonical layout is then re-derived and checked name-for-name.
  std::vector<std::string> vocab;
  for (const auto& name : names) {
    if (name.size() >= 2 && name[0] == 'e' && name[1] == '|') {
      const std::size_t sep = name.find('|', 2);
      if (sep == std::string::npos) throw Error("corrupt", "malformed feature name '" + name + "'");
      vocab.push_back(name.substr(sep + 1));
    }
  }
  std::sort(vocab.begin(), vocab.end());
  vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());

  LabelAlphabet alphabet(std::move(labels), static_cast<int>(start_label));
  CrfModel model(std::move(alphabet), templates, std::move(vocab),
                 static_cast<StartMode>(mode_byte));
  if (model.feature_count() != m_count)
    throw Error("corrupt", "feature table size does not match templates");
  for (std::size_t m = 0; m < m_count; ++m) {
    if (model.feature_name(m) != names[m])
      throw Error("corrupt", "feature table is not in canonical order at index " + std::to_string(m));
  }
  return model.with_weights(std::move(weights));
}

}  // namespace crfgrad
