#include "pkgguard/checkpoint.hpp"

#include <libdeflate.h>

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cstdio>
#include <cstring>
#include <functional>
#include <memory>
#include <random>

namespace pkgguard {

namespace {

using Kind = CheckpointError::Kind;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void varint(std::uint64_t v) {
    while (v >= 0x80) {
      u8(static_cast<std::uint8_t>(v | 0x80));
      v >>= 7;
    }
    u8(static_cast<std::uint8_t>(v));
  }
  std::string& str() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view bytes) : p_(reinterpret_cast<const std::uint8_t*>(bytes.data())), end_(p_ + bytes.size()) {}

  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end_ - p_) < n) throw CheckpointError(Kind::Format, "checkpoint body truncated");
  }
  const std::uint8_t* take(std::size_t n) {
    need(n);
    const auto* at = p_;
    p_ += n;
    return at;
  }
  std::uint8_t u8() { return *take(1); }
  std::uint16_t u16() {
    const auto* b = take(2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }
  std::uint32_t u32() {
    const auto* b = take(4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::uint64_t varint() {
    std::uint64_t v = 0;
    for (int shift = 0; shift < 64; shift += 7) {
      if (p_ == end_) throw CheckpointError(Kind::Format, "checkpoint body truncated inside a varint");
      const std::uint8_t b = *p_++;
      v |= static_cast<std::uint64_t>(b & 0x7F) << shift;
      if (!(b & 0x80)) return v;
    }
    throw CheckpointError(Kind::Format, "varint too long");
  }
  bool done() const { return p_ == end_; }
  const std::uint8_t* cursor() const { return p_; }
  const std::uint8_t* end() const { return end_; }

 private:
  const std::uint8_t* p_;
  const std::uint8_t* end_;
};

std::uint64_t zigzag(std::int64_t v) { return (static_cast<std::uint64_t>(v) << 1) ^ static_cast<std::uint64_t>(v >> 63); }
std::int64_t unzigzag(std::uint64_t v) { return static_cast<std::int64_t>(v >> 1) ^ -static_cast<std::int64_t>(v & 1); }

Dfa decode_body(std::string_view body, const std::optional<Sha256>& expected_digest);

std::uint32_t crc_of(std::string_view bytes) {
  return libdeflate_crc32(0, bytes.data(), bytes.size());
}

}  // namespace

const char* to_string(CheckpointError::Kind k) noexcept {
  switch (k) {
    case Kind::Io: return "io";
    case Kind::BadMagic: return "bad-magic";
    case Kind::UnsupportedVersion: return "unsupported-version";
    case Kind::Checksum: return "checksum";
    case Kind::StaleCache: return "stale-cache";
    case Kind::Format: return "format";
  }
  return "?";
}

std::string encode_checkpoint(const Dfa& dfa) {
  const auto& p = dfa.parts();
  const std::size_t n = dfa.state_count();
  Writer w;
  w.str().reserve(64 + n / 8 + 3 * n);
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(p.fold ? 1u : 0u);
  w.bytes(p.list_digest.data(), p.list_digest.size());
  w.u16(static_cast<std::uint16_t>(p.alphabet.size()));
  w.bytes(p.alphabet.data(), p.alphabet.size());
  w.u32(p.name_count);
  w.u32(static_cast<std::uint32_t>(n));
  w.u32(static_cast<std::uint32_t>(dfa.edge_count()));
  for (std::size_t byte = 0; byte < (n + 7) / 8; ++byte) {
    w.u8(static_cast<std::uint8_t>(p.accepting[byte / 8] >> (8 * (byte % 8))));
  }
  std::array<std::uint8_t, 256> index{};
  for (std::size_t i = 0; i < p.alphabet.size(); ++i) {
    index[static_cast<unsigned char>(p.alphabet[i])] = static_cast<std::uint8_t>(i);
  }
  for (std::size_t s = 0; s < n; ++s) {
    const auto lo = p.edge_begin[s], hi = p.edge_begin[s + 1];
    w.varint(hi - lo);
    for (auto e = lo; e < hi; ++e) {
      w.u8(index[static_cast<unsigned char>(p.labels[e])]);
      w.varint(zigzag(static_cast<std::int64_t>(p.targets[e]) - static_cast<std::int64_t>(s)));
    }
  }
  w.u32(crc_of(w.str()));
  return std::move(w.str());
}

Dfa decode_checkpoint(std::string_view bytes, const std::optional<Sha256>& expected_digest) {
  if (bytes.size() < sizeof kCheckpointMagic ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw CheckpointError(Kind::BadMagic, "not a package-guard checkpoint (bad magic)");
  }
  if (bytes.size() < sizeof kCheckpointMagic + 4 + 4) {
    throw CheckpointError(Kind::Checksum, "checkpoint truncated");
  }
  Reader head(bytes.substr(sizeof kCheckpointMagic));
  const std::uint32_t version = head.u32();
  if (version == 0 || version > kCheckpointVersion) {
    throw CheckpointError(Kind::UnsupportedVersion,
                          "unsupported checkpoint version " + std::to_string(version));
  }
  const auto body = bytes.substr(0, bytes.size() - 4);
  if (crc_of(body) != Reader(bytes.substr(bytes.size() - 4)).u32()) {
    throw CheckpointError(Kind::Checksum, "checkpoint checksum mismatch (corrupt or truncated)");
  }
  return decode_body(body, expected_digest);
}

namespace {

Dfa decode_body(std::string_view body, const std::optional<Sha256>& expected_digest) {
  Reader r(body.substr(sizeof kCheckpointMagic + 4));
  DfaParts parts;
  const std::uint32_t flags = r.u32();
  if (flags & ~1u) throw CheckpointError(Kind::Format, "unknown checkpoint flags");
  parts.fold = (flags & 1u) != 0;
  std::memcpy(parts.list_digest.data(), r.take(32), 32);
  if (expected_digest && *expected_digest != parts.list_digest) {
    throw CheckpointError(Kind::StaleCache, "checkpoint was built from a different package list (digest " +
                                                to_hex(parts.list_digest) + ", expected " +
                                                to_hex(*expected_digest) + ")");
  }
  const std::uint16_t alpha_len = r.u16();
  const auto* alpha = r.take(alpha_len);
  parts.alphabet.assign(reinterpret_cast<const char*>(alpha), alpha_len);
  parts.name_count = r.u32();
  const std::uint32_t n = r.u32();
  const std::uint32_t edges = r.u32();
  if (n == 0) throw CheckpointError(Kind::Format, "checkpoint has no states");
  // Each state costs at least one byte and each edge at least two.
  if (n > body.size() || edges > body.size() / 2) {
    throw CheckpointError(Kind::Format, "state or edge count exceeds the file size");
  }

  const std::size_t acc_bytes = (static_cast<std::size_t>(n) + 7) / 8;
  const auto* acc = r.take(acc_bytes);
  parts.accepting.assign((static_cast<std::size_t>(n) + 63) / 64, 0);
  for (std::size_t b = 0; b < acc_bytes; ++b) {
    parts.accepting[b / 8] |= static_cast<std::uint64_t>(acc[b]) << (8 * (b % 8));
  }

  parts.edge_begin.reserve(static_cast<std::size_t>(n) + 1);
  parts.labels.reserve(edges);
  parts.targets.reserve(edges);
  const std::uint8_t* p = r.cursor();
  const std::uint8_t* const end = r.end();
  auto varint = [&](std::uint64_t& v) {
    if (p != end && !(*p & 0x80)) {
      v = *p++;
      return true;
    }
    v = 0;
    for (int shift = 0; shift < 64; shift += 7) {
      if (p == end) return false;
      const std::uint8_t b = *p++;
      v |= static_cast<std::uint64_t>(b & 0x7F) << shift;
      if (!(b & 0x80)) return true;
    }
    return false;
  };
  std::uint32_t e = 0;
  for (std::uint32_t s = 0; s < n; ++s) {
    parts.edge_begin.push_back(e);
    std::uint64_t count;
    if (!varint(count)) throw CheckpointError(Kind::Format, "checkpoint body truncated inside a varint");
    if (count > edges - e) throw CheckpointError(Kind::Format, "edge count exceeds header");
    int prev = -1;
    for (std::uint64_t k = 0; k < count; ++k, ++e) {
      if (p == end) throw CheckpointError(Kind::Format, "checkpoint body truncated");
      const std::uint8_t li = *p++;
      if (li >= alpha_len || static_cast<int>(li) <= prev) {
        throw CheckpointError(Kind::Format, "label index out of range or unsorted");
      }
      prev = li;
      parts.labels.push_back(static_cast<char>(alpha[li]));
      std::uint64_t z;
      if (!varint(z)) throw CheckpointError(Kind::Format, "checkpoint body truncated inside a varint");
      const std::int64_t target = static_cast<std::int64_t>(s) + unzigzag(z);
      if (target < 0 || target >= static_cast<std::int64_t>(n)) {
        throw CheckpointError(Kind::Format, "transition target out of range");
      }
      parts.targets.push_back(static_cast<StateId>(target));
    }
  }
  parts.edge_begin.push_back(e);
  if (e != edges || p != end) throw CheckpointError(Kind::Format, "checkpoint size mismatch");

  try {
    return Dfa::from_parts(std::move(parts), /*edges_checked=*/true);
  } catch (const DfaError& err) {
    throw CheckpointError(Kind::Format, std::string("invalid automaton: ") + err.what());
  }
}

}  // namespace

std::size_t save_checkpoint(const Dfa& dfa, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(dfa);
  std::random_device rd;
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(rd());
  {
    std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(tmp.c_str(), "wb"), &std::fclose);
    if (!f) throw CheckpointError(Kind::Io, "cannot write checkpoint: " + tmp.string());
    if (std::fwrite(bytes.data(), 1, bytes.size(), f.get()) != bytes.size() || std::fflush(f.get()) != 0) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw CheckpointError(Kind::Io, "short write: " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw CheckpointError(Kind::Io, "cannot move checkpoint into place: " + path.string());
  }
  return bytes.size();
}

Dfa load_checkpoint(const std::filesystem::path& path, const std::optional<Sha256>& expected_digest) {
  const int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (fd < 0) throw CheckpointError(Kind::Io, "cannot open checkpoint: " + path.string());
  struct stat st {};
  if (::fstat(fd, &st) != 0) {
    ::close(fd);
    throw CheckpointError(Kind::Io, "cannot stat checkpoint: " + path.string());
  }
  const auto size = static_cast<std::size_t>(st.st_size);
  if (size == 0) {
    ::close(fd);
    return decode_checkpoint({}, expected_digest);
  }
  void* map = ::mmap(nullptr, size, PROT_READ, MAP_PRIVATE | MAP_POPULATE, fd, 0);
  ::close(fd);
  if (map == MAP_FAILED) throw CheckpointError(Kind::Io, "cannot map checkpoint: " + path.string());
  std::unique_ptr<void, std::function<void(void*)>> guard(map, [size](void* m) { ::munmap(m, size); });
  return decode_checkpoint(std::string_view(static_cast<const char*>(map), size), expected_digest);
}

std::filesystem::path checkpoint_path_for(const std::filesystem::path& cache_dir, const Sha256& digest) {
  return cache_dir / (to_hex(digest) + ".pkgdfa");
}

CacheResult ensure_cache(const std::filesystem::path& list_path, const std::filesystem::path& cache_dir,
                         bool normalize) {
  LoadOptions opts;
  opts.normalize = normalize;
  const PackageList list = load_list(list_path, opts);

  CacheResult result;
  result.list_digest = list.digest();
  result.checkpoint = checkpoint_path_for(cache_dir, list.digest());
  std::error_code ec;
  if (std::filesystem::exists(result.checkpoint, ec)) {
    try {
      result.dfa = load_checkpoint(result.checkpoint, list.digest());
      return result;
    } catch (const CheckpointError&) {
      // fall through and rebuild
    }
  }
  std::filesystem::create_directories(cache_dir, ec);
  if (ec) throw CheckpointError(Kind::Io, "cannot create cache directory: " + cache_dir.string());
  result.dfa = build_dfa(list);
  result.built = true;
  save_checkpoint(result.dfa, result.checkpoint);
  return result;
}

}  // namespace pkgguard
