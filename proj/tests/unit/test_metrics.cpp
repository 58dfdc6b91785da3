#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "pkgguard/metrics.hpp"

using namespace pkgguard;

namespace {

// `total` occurrences spread over `responses` responses; the first `bad_responses`
// responses each carry at least one of the `bad` hallucinated occurrences.
Transcript synth(std::size_t responses, std::size_t total, std::size_t bad, std::size_t bad_responses) {
  Transcript t;
  t.responses.resize(responses);
  std::size_t placed_bad = 0;
  for (std::size_t i = 0; i < bad_responses; ++i) {
    t.responses[i].packages.push_back({"fake-" + std::to_string(placed_bad++), 0});
  }
  std::size_t i = 0;
  while (placed_bad < bad) {
    t.responses[i++ % bad_responses].packages.push_back({"fake-" + std::to_string(placed_bad++), 0});
  }
  for (std::size_t k = 0; k < total - bad; ++k) t.responses[k % responses].packages.push_back({"real", 0});
  return t;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("hallucination rate") {
  auto list = PackageList::from_names({"real"}, false);
  auto r = score(synth(200, 1847, 155, 100), list);
  CHECK(r.p_total == 1847);
  CHECK(r.p_hall == 155);
  CHECK(r.phr == doctest::Approx(oracle::rate(155, 1847)));
  CHECK(std::abs(100.0 * r.phr - 8.39) <= 0.01);
  CHECK(r.p_hall_unique == 155);
}

TEST_CASE("response rate") {
  auto list = PackageList::from_names({"real"}, false);
  auto r = score(synth(1000, 2000, 116, 116), list);
  CHECK(r.responses == 1000);
  CHECK(r.responses_with_hall == 116);
  CHECK(r.rhr == oracle::rate(116, 1000));
  CHECK(100.0 * r.rhr == doctest::Approx(11.60));
}

TEST_CASE("empty transcript") {
  auto r = score(Transcript{}, PackageList::from_names({"a"}, false));
  CHECK(r.p_total == 0);
  CHECK(r.phr == 0.0);
  CHECK(r.rhr == 0.0);
  Transcript only_empty;
  only_empty.responses.resize(3);
  auto r2 = score(only_empty, PackageList::from_names({"a"}, false));
  CHECK(r2.responses == 3);
  CHECK(r2.phr == 0.0);
  CHECK(r2.rhr == 0.0);
}

TEST_CASE("unique hallucinations use list keys") {
  auto list = PackageList::from_names({"numpy"}, true);
  Transcript t;
  t.responses.push_back({"1", {{"Fake_Pkg", 0}, {"fake-pkg", 0}, {"NumPy", 0}}});
  auto r = score(t, list);
  CHECK(r.p_hall == 2);
  CHECK(r.p_hall_unique == 1);
}

TEST_CASE("metrics are invariant under response order") {
  auto list = PackageList::from_names({"real"}, false);
  auto t = synth(50, 300, 40, 20);
  const auto base = score(t, list);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(t.responses.begin(), t.responses.end(), rng);
    for (auto& resp : t.responses) std::shuffle(resp.packages.begin(), resp.packages.end(), rng);
    const auto r = score(t, list);
    CHECK(r.phr == base.phr);
    CHECK(r.rhr == base.rhr);
    CHECK(r.p_hall_unique == base.p_hall_unique);
  }
}

TEST_CASE("extraction") {
  const auto pypi = builtin_profile("pypi");
  auto fig = extract_from_text(
      "To use the API, install the client:\n\n```bash\npip install google-protobuf\n```\n", pypi);
  REQUIRE(fig.packages.size() == 1);
  CHECK(fig.packages[0].name == "google-protobuf");
  CHECK(extract_from_text("Just use numpy and pip install it.", pypi).packages.empty());
  auto two = extract_from_text("```\npip install a b\n```\ntext\n```sh\npip install -U c==1\n```\n", pypi);
  CHECK(two.packages.size() == 3);
}

TEST_CASE("transcript files") {
  std::istringstream in(
      "{\"id\": \"r1\", \"text\": \"```\\npip install numpy fakepkg\\n```\"}\n"
      "\n"
      "{\"id\": 2, \"text\": \"no commands here\"}\n");
  auto t = read_transcripts(in, builtin_profile("pypi"));
  REQUIRE(t.responses.size() == 2);
  CHECK(t.responses[0].id == "r1");
  CHECK(t.responses[1].id == "2");
  auto r = score(t, PackageList::from_names({"numpy"}, false));
  CHECK(r.p_total == 2);
  CHECK(r.p_hall == 1);
  CHECK(r.rhr == 0.5);
  CHECK(r.to_json().find("\"phr\": 0.5") != std::string::npos);

  std::istringstream bad("{\"id\": 1}\n");
  CHECK_THROWS(read_transcripts(bad, builtin_profile("pypi")));
  std::istringstream broken("{not json\n");
  CHECK_THROWS(read_transcripts(broken, builtin_profile("pypi")));
}

}  // TEST_SUITE
