#include "pkgguard/package_list.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

namespace pkgguard {

Sha256 sha256(std::string_view bytes) {
  Sha256 out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != out.size()) {
    throw std::runtime_error("sha256: digest computation failed");
  }
  return out;
}

std::string to_hex(const Sha256& digest) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(digest.size() * 2);
  for (auto b : digest) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 0xF]);
  }
  return s;
}

std::string normalize_name(std::string_view raw) {
  std::string out(raw);
  for (auto& c : out) c = fold_name_char(c);
  return out;
}

bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    auto c = static_cast<unsigned char>(s[i]);
    std::size_t extra = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= s.size()) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // overlong forms, surrogates, out of range
    if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) || (extra == 3 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
      return false;
    }
    i += extra + 1;
  }
  return true;
}

namespace {

constexpr bool is_blank(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_blank(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_blank(s.back())) s.remove_suffix(1);
  return s;
}

// Returns an empty string when the name is acceptable, otherwise the reason.
std::string check_name(std::string_view name) {
  if (!valid_utf8(name)) return "malformed UTF-8";
  for (char c : name) {
    if (c == '\0') return "NUL byte in name";
    if (is_blank(c)) return "whitespace inside name";
    if (!is_name_char(c)) return "character outside the registry alphabet";
  }
  return {};
}

}  // namespace

std::string PackageList::key_of(std::string_view candidate) const {
  return normalized_ ? normalize_name(candidate) : std::string(candidate);
}

bool PackageList::contains(std::string_view candidate) const {
  if (candidate.empty()) return false;
  const std::string k = key_of(candidate);
  std::size_t lo = 0, hi = entries_.size();
  while (lo < hi) {
    std::size_t mid = lo + (hi - lo) / 2;
    const auto& mk = key(mid);
    if (mk < k) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  return lo < entries_.size() && key(lo) == k;
}

PackageList PackageList::finalize(std::vector<PackageName> entries, bool normalize,
                                  std::string source_id, std::vector<LoadDiagnostic> diagnostics) {
  auto key_of_entry = [normalize](const PackageName& n) -> const std::string& {
    return normalize ? n.normalized : n.raw;
  };
  // Stable so that the first spelling of a duplicate survives.
  std::stable_sort(entries.begin(), entries.end(), [&](const auto& a, const auto& b) {
    return key_of_entry(a) < key_of_entry(b);
  });
  entries.erase(std::unique(entries.begin(), entries.end(),
                            [&](const auto& a, const auto& b) {
                              return key_of_entry(a) == key_of_entry(b);
                            }),
                entries.end());

  PackageList list;
  list.normalized_ = normalize;
  list.source_id_ = std::move(source_id);
  list.diagnostics_ = std::move(diagnostics);
  list.entries_ = std::move(entries);

  std::string blob = normalize ? "pkgguard-list\nnormalize=1\n" : "pkgguard-list\nnormalize=0\n";
  std::size_t total = blob.size();
  for (std::size_t i = 0; i < list.entries_.size(); ++i) total += list.key(i).size() + 1;
  blob.reserve(total);
  for (std::size_t i = 0; i < list.entries_.size(); ++i) {
    blob += list.key(i);
    blob.push_back('\n');
  }
  list.digest_ = sha256(blob);
  return list;
}

PackageList PackageList::from_names(const std::vector<std::string>& names, bool normalize,
                                    std::string source_id) {
  std::vector<PackageName> entries;
  entries.reserve(names.size());
  for (const auto& n : names) {
    if (n.empty()) throw PackageListError("empty package name");
    if (auto why = check_name(n); !why.empty()) {
      throw PackageListError("invalid package name '" + n + "': " + why);
    }
    entries.push_back({n, normalize_name(n)});
  }
  return finalize(std::move(entries), normalize, std::move(source_id), {});
}

PackageList load_list(std::istream& in, const LoadOptions& options) {
  std::vector<PackageName> entries;
  std::vector<LoadDiagnostic> diagnostics;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto name = trim(line);
    if (name.empty() || name.front() == '#') continue;
    if (auto why = check_name(name); !why.empty()) {
      if (options.strict) {
        throw PackageListError("line " + std::to_string(lineno) + ": " + why);
      }
      diagnostics.push_back({lineno, std::move(why)});
      continue;
    }
    entries.push_back({std::string(name), normalize_name(name)});
  }
  if (in.bad()) throw PackageListError("read failure");
  return PackageList::finalize(std::move(entries), options.normalize, options.source_id,
                               std::move(diagnostics));
}

PackageList load_list(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PackageListError("cannot open package list: " + path.string());
  LoadOptions opts = options;
  if (opts.source_id.empty()) opts.source_id = path.filename().string();
  return load_list(in, opts);
}

void PackageList::write_snapshot(std::ostream& out) const {
  out << "# pkgguard snapshot source=" << (source_id_.empty() ? "-" : source_id_)
      << " normalize=" << (normalized_ ? 1 : 0) << " count=" << entries_.size()
      << " digest=" << to_hex(digest_) << '\n';
  for (std::size_t i = 0; i < entries_.size(); ++i) out << key(i) << '\n';
}

void save_snapshot(const PackageList& list, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PackageListError("cannot write snapshot: " + path.string());
  list.write_snapshot(out);
  if (!out.flush()) throw PackageListError("write failure: " + path.string());
}

}  // namespace pkgguard
