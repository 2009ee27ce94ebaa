#include <doctest.h>

#include "duon/cache_model.hpp"
#include "duon/rng.hpp"
#include "oracles.hpp"

using namespace duon;

namespace {

CacheConfig tiny() {
  CacheConfig c;
  c.l1_size = 4 * 64 * 4;  // 4 sets x 4 ways
  c.l1_assoc = 4;
  c.llc_size = 16 * 64 * 8;  // 16 sets x 8 ways
  c.llc_assoc = 8;
  return c;
}

}  // namespace

TEST_CASE("repeat access hits L1 in 2 cycles") {
  CacheHierarchy h(CacheConfig{}, 1, 64);
  const auto first = h.access(0, 1234);
  CHECK(first.level == AccessLevel::Miss);
  CHECK(first.latency == 2 + 21);
  h.fill(0, 1234, 5);
  const auto second = h.access(0, 1234);
  CHECK(second.level == AccessLevel::L1Hit);
  CHECK(second.latency == 2);
}

TEST_CASE("five lines in one 4-way L1 set evict the first") {
  CacheHierarchy h(CacheConfig{}, 1, 64);
  const std::uint64_t l1_sets = 32 * 1024 / (4 * 64);  // 128
  for (std::uint64_t i = 0; i < 5; ++i) {
    const auto a = 7 + i * l1_sets;
    CHECK(h.access(0, a).level == AccessLevel::Miss);
    h.fill(0, a, i);
  }
  const auto again = h.access(0, 7);
  CHECK(again.level == AccessLevel::LlcHit);
  CHECK(again.latency == 23);
  CHECK(h.read(7) == 0);
  CHECK(h.in_l1(0, 7));
  CHECK_FALSE(h.in_l1(0, 7 + l1_sets));  // LRU victim of the refill
}

TEST_CASE("hierarchy matches the reference model on random streams") {
  const auto cfg = tiny();
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    SplitMix64 rng(seed);
    const std::uint32_t cores = 1 + static_cast<std::uint32_t>(rng.below(4));
    CacheHierarchy h(cfg, cores, 64);
    oracle::Hierarchy ref(cores, 4, 4, 16, 8);
    const auto span = 32 + rng.below(400);
    for (int i = 0; i < 3000; ++i) {
      const auto core = static_cast<std::uint32_t>(rng.below(cores));
      const auto addr = rng.below(span);
      const auto got = h.access(core, addr);
      if (got.level == AccessLevel::Miss) h.fill(core, addr, addr);
      const int want = ref.access(core, addr);
      const int level = got.level == AccessLevel::L1Hit    ? 1
                        : got.level == AccessLevel::LlcHit ? 2
                                                           : 0;
      REQUIRE(level == want);
    }
    CHECK(h.inclusive());
  }
}

TEST_CASE("invalidate_page_lines counts lines and dirty writebacks") {
  CacheHierarchy h(CacheConfig{}, 2, 64);
  std::uint64_t wb = 0;
  auto sink = [&](std::uint64_t, std::uint64_t) { ++wb; };
  CHECK(h.invalidate_page_lines({3}, sink) == std::pair<std::uint64_t, std::uint64_t>{0, 0});

  for (std::uint32_t off = 0; off < 64; ++off) {
    const auto a = h.line_addr({3}, off);
    h.fill(off % 2, a, off);
    if (off < 10) h.write(a, 1000 + off);
  }
  h.fill(0, h.line_addr({4}, 0), 9);
  const auto [inv, written] = h.invalidate_page_lines({3}, sink);
  CHECK(inv == 64);
  CHECK(written == 10);
  CHECK(wb == 10);
  for (std::uint32_t off = 0; off < 64; ++off) {
    const auto a = h.line_addr({3}, off);
    CHECK_FALSE(h.contains(a));
    CHECK_FALSE(h.in_l1(0, a));
    CHECK_FALSE(h.in_l1(1, a));
  }
  CHECK(h.contains(h.line_addr({4}, 0)));
  CHECK(h.inclusive());
}

TEST_CASE("dirty LLC eviction hands back the value") {
  auto cfg = tiny();
  CacheHierarchy h(cfg, 1, 64);
  // Nine lines in LLC set 0 (8 ways): the first is evicted.
  for (std::uint64_t i = 0; i < 8; ++i) {
    h.fill(0, i * 16, i);
    if (i == 0) h.write(0, 42);
  }
  const auto ev = h.fill(0, 8 * 16, 8);
  REQUIRE(ev);
  CHECK(ev->line_addr == 0);
  CHECK(ev->dirty);
  CHECK(ev->value == 42);
  CHECK_FALSE(h.in_l1(0, 0));
  CHECK(h.stats().llc_writebacks == 1);
}

TEST_CASE("line addresses are unified-page based") {
  CacheHierarchy h(CacheConfig{}, 1, 64);
  CHECK(h.line_addr({5}, 3) == 5 * 64 + 3);
  CHECK(h.page_of(5 * 64 + 3) == UnifiedPageId{5});
  CHECK(h.offset_of(5 * 64 + 3) == 3);
}

TEST_CASE("cache config validation names the field") {
  CacheConfig c;
  c.l1_size = 1000;
  try {
    c.validate();
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).rfind("cache.l1_size", 0) == 0);
  }
  CacheConfig d;
  d.llc_assoc = 0;
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
}
