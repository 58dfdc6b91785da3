#include <doctest.h>

#include <fstream>
#include <random>

#include <zlib.h>

#include "oracles.hpp"
#include "pkgguard/checkpoint.hpp"
#include "pkgguard/sim.hpp"

using namespace pkgguard;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("pkgguard-ckpt-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

CheckpointError::Kind kind_of(std::string_view bytes, const std::optional<Sha256>& digest = std::nullopt) {
  try {
    decode_checkpoint(bytes, digest);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  FAIL("decode succeeded");
  return CheckpointError::Kind::Io;
}

void put_u32(std::string& s, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s[at + i] = static_cast<char>(v >> (8 * i));
}

std::string with_trailer(std::string body) {
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
  body.resize(body.size() + 4);
  put_u32(body, body.size() - 4, crc);
  return body;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("round-trip") {
  TempDir dir;
  auto list = PackageList::from_names({"a", "b"}, false);
  auto dfa = build_dfa(list);
  const auto path = dir.path / "ab.pkgdfa";
  const auto n = save_checkpoint(dfa, path);
  CHECK(n == fs::file_size(path));
  auto back = load_checkpoint(path, list.digest());
  CHECK(back.parts().labels == dfa.parts().labels);
  CHECK(back.parts().targets == dfa.parts().targets);
  CHECK(back.parts().edge_begin == dfa.parts().edge_begin);
  CHECK(back.parts().accepting == dfa.parts().accepting);
  for (const auto& s : oracle::all_strings("abc", 3)) CHECK(accepts(back, s) == accepts(dfa, s));
  CHECK(encode_checkpoint(back) == encode_checkpoint(dfa));
}

TEST_CASE("header layout") {
  auto list = PackageList::from_names({"Ab", "c"}, true);
  auto bytes = encode_checkpoint(build_dfa(list));
  CHECK(bytes.compare(0, 8, std::string("PKGGDFA\0", 8)) == 0);
  CHECK(static_cast<unsigned char>(bytes[8]) == 1);  // version 1, little-endian
  CHECK(bytes[9] == 0);
  CHECK(static_cast<unsigned char>(bytes[12]) == 1);  // folding flag
  CHECK(std::memcmp(bytes.data() + 16, list.digest().data(), 32) == 0);
  CHECK(static_cast<unsigned char>(bytes[48]) == 3);  // alphabet "abc"
  CHECK(bytes.substr(50, 3) == "abc");
}

TEST_CASE("folding survives the round-trip") {
  auto dfa = build_dfa(PackageList::from_names({"Pillow"}, true));
  auto back = decode_checkpoint(encode_checkpoint(dfa));
  CHECK(back.folds());
  CHECK(accepts(back, "PILLOW"));
}

TEST_CASE("error kinds") {
  auto list = PackageList::from_names({"numpy", "scipy"}, false);
  const auto good = encode_checkpoint(build_dfa(list));
  using K = CheckpointError::Kind;

  CHECK(kind_of(good.substr(0, good.size() - 1)) == K::Checksum);
  CHECK(kind_of(good.substr(0, 20)) == K::Checksum);
  CHECK(kind_of("") == K::BadMagic);
  std::string magic = good;
  magic[0] = 'X';
  CHECK(kind_of(magic) == K::BadMagic);

  std::string future = good;
  put_u32(future, 8, 2);
  CHECK(kind_of(future) == K::UnsupportedVersion);

  CHECK(kind_of(good, PackageList::from_names({"numpy"}, false).digest()) == K::StaleCache);
  CHECK_NOTHROW(decode_checkpoint(good, list.digest()));

}

TEST_CASE("checksum precedes structural checks") {
  auto good = encode_checkpoint(build_dfa(PackageList::from_names({"ab", "cd"}, false)));
  std::string bad = good;
  bad[12] = 4;  // unknown flag without updating the trailer
  CHECK(kind_of(bad) == CheckpointError::Kind::Checksum);
}

TEST_CASE("structural errors behind a valid checksum") {
  const auto good = encode_checkpoint(build_dfa(PackageList::from_names({"ab", "ac"}, false)));
  const std::string body = good.substr(0, good.size() - 4);
  using K = CheckpointError::Kind;
  CHECK_NOTHROW(decode_checkpoint(with_trailer(body)));

  std::string flags = body;
  flags[12] = 4;
  CHECK(kind_of(with_trailer(flags)) == K::Format);

  std::string extra = body + "x";
  CHECK(kind_of(with_trailer(extra)) == K::Format);

  std::string short_body = body.substr(0, body.size() - 1);
  CHECK(kind_of(with_trailer(short_body)) == K::Format);

  // state_count is at offset 48 + 2 + |alphabet| + 4.
  std::string states = body;
  put_u32(states, 48 + 2 + 3 + 4, 0x7fffffff);
  CHECK(kind_of(with_trailer(states)) == K::Format);
}

TEST_CASE("single byte corruption is detected") {
  auto list = PackageList::from_names(sim::synthetic_names(200, 3), true);
  const auto good = encode_checkpoint(build_dfa(list));
  std::mt19937_64 rng(21);
  int detected = 0;
  const int trials = 2000;
  for (int i = 0; i < trials; ++i) {
    std::string bad = good;
    const auto at = rng() % bad.size();
    bad[at] = static_cast<char>(bad[at] ^ static_cast<char>(1 + rng() % 255));
    try {
      decode_checkpoint(bad, list.digest());
    } catch (const CheckpointError&) {
      ++detected;
    }
  }
  CHECK(detected == trials);
}

TEST_CASE("file errors") {
  TempDir dir;
  CHECK_THROWS_AS(load_checkpoint(dir.path / "missing.pkgdfa"), CheckpointError);
  try {
    load_checkpoint(dir.path / "missing.pkgdfa");
  } catch (const CheckpointError& e) {
    CHECK(e.kind() == CheckpointError::Kind::Io);
  }
  write_file(dir.path / "empty.pkgdfa", "");
  CHECK_THROWS_AS(load_checkpoint(dir.path / "empty.pkgdfa"), CheckpointError);
}

TEST_CASE("ensure_cache builds once and rebuilds on change") {
  TempDir dir;
  const auto list_path = dir.path / "names.txt";
  write_file(list_path, "numpy\nscipy\n");
  const auto cache = dir.path / "cache";

  const auto before = dfa_build_count();
  auto cold = ensure_cache(list_path, cache, false);
  CHECK(cold.built);
  CHECK(fs::exists(cold.checkpoint));
  auto warm = ensure_cache(list_path, cache, false);
  CHECK_FALSE(warm.built);
  CHECK(dfa_build_count() == before + 1);
  CHECK(accepts(warm.dfa, "scipy"));

  write_file(list_path, "numpy\nscipy\npandas\n");
  auto changed = ensure_cache(list_path, cache, false);
  CHECK(changed.built);
  CHECK(changed.list_digest != cold.list_digest);
  CHECK(accepts(changed.dfa, "pandas"));
  CHECK(dfa_build_count() == before + 2);

  // A corrupt checkpoint is replaced.
  write_file(changed.checkpoint, "garbage");
  auto repaired = ensure_cache(list_path, cache, false);
  CHECK(repaired.built);
  CHECK_NOTHROW(load_checkpoint(repaired.checkpoint, repaired.list_digest));
}

TEST_CASE("checkpoint names follow the digest") {
  auto list = PackageList::from_names({"x"}, false);
  CHECK(checkpoint_path_for("/c", list.digest()) == fs::path("/c") / (to_hex(list.digest()) + ".pkgdfa"));
}

}  // TEST_SUITE
