#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "ont/rng.hpp"
#include "ont/subsample.hpp"
#include "test_util.hpp"

using namespace ont;

TEST_SUITE_BEGIN("subsampler");

TEST_CASE("output length is floor(N/k) and values come from the right window") {
  for (const auto& [n, k] : std::vector<std::pair<std::size_t, int>>{
           {10, 2}, {11, 2}, {12, 3}, {100, 7}, {64, 4}, {9, 9}}) {
    // Ramp signal: sample value encodes its own index.
    Waveform x{std::vector<double>(n), 8000};
    for (std::size_t i = 0; i < n; ++i) x.samples[i] = static_cast<double>(i);

    SubsampleConfig cfg;
    cfg.k = k;
    cfg.seed = 5;
    const SubsamplePair pair = subsample_pair(x, cfg);
    const std::size_t windows = n / static_cast<std::size_t>(k);
    CHECK(pair.s1.size() == windows);
    CHECK(pair.s2.size() == windows);
    CHECK(pair.map.n_windows() == windows);

    for (std::size_t w = 0; w < windows; ++w) {
      const auto i1 = static_cast<std::size_t>(std::llround(pair.s1.samples[w]));
      const auto i2 = static_cast<std::size_t>(std::llround(pair.s2.samples[w]));
      CHECK(i1 / static_cast<std::size_t>(k) == w);  // membership
      CHECK(i2 / static_cast<std::size_t>(k) == w);
      CHECK(std::llabs(static_cast<long long>(i1) - static_cast<long long>(i2)) == 1);
    }
  }
}

TEST_CASE("same seed reproduces the same plan, different seeds differ") {
  SubsampleConfig cfg;
  cfg.k = 4;
  cfg.seed = 123;
  const auto a = subsample_plan(4000, cfg);
  const auto b = subsample_plan(4000, cfg);
  CHECK(a.offsets == b.offsets);
  cfg.seed = 124;
  const auto c = subsample_plan(4000, cfg);
  CHECK(a.offsets != c.offsets);
}

TEST_CASE("fixed mode always picks offsets (0,1) regardless of seed") {
  SubsampleConfig cfg;
  cfg.k = 3;
  cfg.mode = SubsampleMode::fixed;
  cfg.seed = 1;
  const auto a = subsample_plan(300, cfg);
  cfg.seed = 999;
  const auto b = subsample_plan(300, cfg);
  CHECK(a.offsets == b.offsets);
  for (const auto& [l, r] : a.offsets) {
    CHECK(l == 0);
    CHECK(r == 1);
  }
}

TEST_CASE("random mode varies across windows and uses both orders") {
  SubsampleConfig cfg;
  cfg.k = 4;
  cfg.seed = 9;
  const auto map = subsample_plan(4000, cfg);  // 1000 windows
  std::set<std::pair<int, int>> seen(map.offsets.begin(), map.offsets.end());
  CHECK(seen.size() > 2);
  bool forward = false, backward = false;
  for (const auto& [a, b] : map.offsets) {
    forward = forward || (a < b);
    backward = backward || (a > b);
  }
  CHECK(forward);
  CHECK(backward);
}

TEST_CASE("a stored map re-applied to another signal picks identical indices") {
  Waveform x{std::vector<double>(1000), 8000};
  for (std::size_t i = 0; i < x.size(); ++i) x.samples[i] = static_cast<double>(i);
  SubsampleConfig cfg;
  cfg.k = 2;
  cfg.seed = 17;
  const SubsamplePair pair = subsample_pair(x, cfg);

  // Second signal encodes indices shifted by a constant; identical index
  // choices shift the outputs by exactly that constant.
  Waveform y = x;
  for (double& v : y.samples) v += 5000.0;
  const auto [t1, t2] = subsample_apply(pair.map, y);
  for (std::size_t w = 0; w < pair.map.n_windows(); ++w) {
    CHECK(t1.samples[w] == pair.s1.samples[w] + 5000.0);
    CHECK(t2.samples[w] == pair.s2.samples[w] + 5000.0);
  }
}

TEST_CASE("map validation rejects malformed maps") {
  SubsampleIndexMap m;
  m.k = 1;
  m.offsets = {{0, 1}};
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m.k = 4;
  m.offsets.clear();
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m.offsets = {{0, 2}};  // not adjacent
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m.offsets = {{3, 4}};  // outside window
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m.offsets = {{2, 3}, {1, 0}};
  CHECK_NOTHROW(m.validate());
}

TEST_CASE("plan rejects k < 2 and signals shorter than one window") {
  SubsampleConfig cfg;
  cfg.k = 1;
  CHECK_THROWS_AS(subsample_plan(100, cfg), ConfigError);
  cfg.k = 8;
  CHECK_THROWS_AS(subsample_plan(7, cfg), ConfigError);
  CHECK_NOTHROW(subsample_plan(8, cfg));
}

TEST_CASE("apply rejects a signal shorter than the map coverage") {
  SubsampleConfig cfg;
  cfg.k = 2;
  const auto map = subsample_plan(100, cfg);
  Waveform small{std::vector<double>(99, 0.1), 8000};
  CHECK_THROWS_AS(subsample_apply(map, small), ConfigError);
}

TEST_CASE("offset histogram is roughly uniform over adjacent pairs") {
  // For k=4 there are three adjacent positions {0,1},{1,2},{2,3}, each in two
  // orders. Over many windows each of the six pairs should appear.
  SubsampleConfig cfg;
  cfg.k = 4;
  cfg.seed = 31;
  const auto map = subsample_plan(12000, cfg);  // 3000 windows
  std::map<std::pair<int, int>, int> counts;
  for (const auto& o : map.offsets) ++counts[o];
  REQUIRE(counts.size() == 6);
  for (const auto& [pair, count] : counts) CHECK(count > 300);
}

TEST_SUITE_END();
