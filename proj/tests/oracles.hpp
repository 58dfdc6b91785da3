#pragma once

// Reference implementations used only by tests. They share no code with the library:
// membership is a std::set lookup, feasibility is a scan over all names.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace oracle {

inline std::string fold(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '_' || c == '.') out += '-';
    else out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

class NameSet {
 public:
  NameSet(const std::vector<std::string>& names, bool normalize) : normalize_(normalize) {
    for (const auto& n : names) keys_.insert(normalize ? fold(n) : n);
  }

  std::string key(std::string_view s) const { return normalize_ ? fold(s) : std::string(s); }
  bool contains(std::string_view s) const { return !s.empty() && keys_.count(key(s)) != 0; }

  /// Some name starts with `p` (after folding).
  bool live_prefix(std::string_view p) const {
    const std::string k = key(p);
    auto it = keys_.lower_bound(k);
    return it != keys_.end() && it->compare(0, k.size(), k) == 0;
  }

  const std::set<std::string>& keys() const { return keys_; }

 private:
  bool normalize_;
  std::set<std::string> keys_;
};

/// Every string over `alphabet` of length 0..max_len.
inline std::vector<std::string> all_strings(std::string_view alphabet, std::size_t max_len) {
  std::vector<std::string> out{""};
  std::size_t begin = 0;
  for (std::size_t len = 1; len <= max_len; ++len) {
    const std::size_t end = out.size();
    for (std::size_t i = begin; i < end; ++i) {
      for (char c : alphabet) out.push_back(out[i] + c);
    }
    begin = end;
  }
  return out;
}

/// Reference hallucination rates.
inline double rate(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace oracle
