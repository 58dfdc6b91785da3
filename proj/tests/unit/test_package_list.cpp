#include <doctest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "pkgguard/package_list.hpp"

using namespace pkgguard;

namespace {

PackageList from_text(const std::string& text, bool normalize = false, bool strict = false) {
  std::istringstream in(text);
  LoadOptions opts;
  opts.normalize = normalize;
  opts.strict = strict;
  return load_list(in, opts);
}

}  // namespace

TEST_SUITE("package_list") {

TEST_CASE("duplicates collapse") {
  auto list = from_text("numpy\nrequests\nnumpy\n");
  CHECK(list.count() == 2);
  CHECK(list.contains("numpy"));
  CHECK(list.contains("requests"));
}

TEST_CASE("normalization merges spellings") {
  const oracle::NameSet ref({"Pillow", "pillow"}, true);
  auto list = from_text("Pillow\npillow\n", true);
  CHECK(list.count() == ref.keys().size());
  CHECK(list.count() == 1);
  CHECK(list.contains("PILLOW"));
  CHECK(list.entries().front().raw == "Pillow");  // first spelling wins

  auto raw = from_text("Pillow\npillow\n", false);
  CHECK(raw.count() == 2);
  CHECK_FALSE(raw.contains("PILLOW"));
}

TEST_CASE("separators fold under normalization") {
  auto list = from_text("zope.interface\ntyping_extensions\n", true);
  CHECK(list.contains("zope-interface"));
  CHECK(list.contains("Typing.Extensions"));
  CHECK(normalize_name("A_b.C") == "a-b-c");
}

TEST_CASE("membership examples") {
  auto list = from_text("protobuf\nnumpy\n");
  CHECK(list.contains("protobuf"));
  CHECK_FALSE(list.contains("google-protobuf"));
  CHECK_FALSE(list.contains(""));
  CHECK_FALSE(contains(list, "proto"));
}

TEST_CASE("comments, blanks and rejected lines") {
  auto list = from_text("# header\n\n  numpy  \nbad name\nnäme\nok-1\r\n");
  CHECK(list.count() == 2);
  CHECK(list.contains("numpy"));
  CHECK(list.contains("ok-1"));
  REQUIRE(list.diagnostics().size() == 2);
  CHECK(list.diagnostics()[0].line == 4);
  CHECK(list.diagnostics()[1].line == 5);
  CHECK_THROWS_AS(from_text("numpy\nbad name\n", false, true), PackageListError);
}

TEST_CASE("invalid utf-8 is rejected") {
  CHECK_FALSE(valid_utf8("\xC0\xAF"));
  CHECK_FALSE(valid_utf8("\xED\xA0\x80"));
  CHECK_FALSE(valid_utf8("\xE2\x82"));
  CHECK(valid_utf8("\xE2\x82\xAC"));
  auto list = from_text("\xFFnumpy\nscipy\n");
  CHECK(list.count() == 1);
  CHECK(list.diagnostics().size() == 1);
}

TEST_CASE("from_names rejects bad names") {
  CHECK_THROWS_AS(PackageList::from_names({"ok", ""}, false), PackageListError);
  CHECK_THROWS_AS(PackageList::from_names({"a b"}, false), PackageListError);
}

TEST_CASE("digest depends on keys and mode only") {
  auto a = from_text("b\na\n");
  auto b = from_text("a\nb\na\n");
  auto c = from_text("a\nb\n", true);
  auto d = from_text("a\nc\n");
  CHECK(a.digest() == b.digest());
  CHECK(a.digest() != c.digest());
  CHECK(a.digest() != d.digest());
  CHECK(to_hex(sha256("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("snapshot round-trip") {
  std::mt19937_64 rng(11);
  const std::string alpha = "abcXY_.-9";
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::string> names;
    for (int i = 0; i < 200; ++i) {
      std::string s;
      const int len = 1 + static_cast<int>(rng() % 8);
      for (int k = 0; k < len; ++k) s += alpha[rng() % alpha.size()];
      names.push_back(s);
    }
    const bool normalize = trial % 2 == 0;
    auto list = PackageList::from_names(names, normalize);
    std::stringstream snap;
    list.write_snapshot(snap);
    auto again = from_text(snap.str(), normalize);
    CHECK(again.digest() == list.digest());
    CHECK(again.count() == list.count());
  }
}

TEST_CASE("membership matches the set oracle") {
  std::mt19937_64 rng(5);
  const std::string alpha = "abAB_-";
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::string> names;
    for (int i = 0; i < 300; ++i) {
      std::string s;
      const int len = 1 + static_cast<int>(rng() % 4);
      for (int k = 0; k < len; ++k) s += alpha[rng() % alpha.size()];
      names.push_back(s);
    }
    const bool normalize = trial % 2 == 1;
    const oracle::NameSet ref(names, normalize);
    auto list = PackageList::from_names(names, normalize);
    CHECK(list.count() == ref.keys().size());
    for (const auto& s : oracle::all_strings(alpha, 4)) {
      REQUIRE_MESSAGE(list.contains(s) == ref.contains(s), s);
    }
  }
}

}  // TEST_SUITE
