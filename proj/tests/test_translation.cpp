#include <doctest.h>

#include <sstream>

#include "duon/rng.hpp"
#include "duon/translation.hpp"
#include "oracles.hpp"
#include "scenarios.hpp"

using namespace duon;

namespace {

struct Small {
  MemoryGeometry geom{4 * 4096, 8 * 4096, 4096};
  FrameMap frames{geom};
  Translation tr;

  explicit Small(std::uint32_t cores = 4, std::size_t tlb = 8, bool aware = true)
      : tr(geom, frames, config(cores, tlb, aware)) {}

  static TranslationConfig config(std::uint32_t cores, std::size_t tlb,
                                  bool aware) {
    TranslationConfig c;
    c.cores = cores;
    c.tlb_entries = tlb;
    c.remap_aware = aware;
    c.alloc_order = AllocOrder::Sequential;
    return c;
  }
};

}  // namespace

TEST_CASE("tlb lookup on an empty TLB misses") {
  Small s;
  CHECK_FALSE(s.tr.tlb_lookup(0, {7}));
  CHECK(s.tr.stats().tlb_misses == 1);
}

TEST_CASE("tlb lookup hits after a walk fills the entry") {
  Small s;
  s.tr.handle_page_fault({7}, 0, {});
  const auto first = s.tr.translate_for_cache(0, {7});
  CHECK_FALSE(first.tlb_hit);
  const auto hit = s.tr.tlb_lookup(0, {7});
  REQUIRE(hit);
  CHECK(hit->ua == first.ua);
  CHECK_FALSE(s.tr.tlb_lookup(1, {7}));
}

TEST_CASE("TLB evicts vpn 7 after 4096 distinct fills") {
  Tlb tlb(4096);
  oracle::Lru ref(4096);
  tlb.fill({{7}, {7}, true});
  ref.insert(7);
  for (std::uint64_t v = 100; v < 100 + 4096; ++v) {
    tlb.fill({{v}, {v}, true});
    ref.insert(v);
  }
  CHECK(tlb.lookup({7}) == nullptr);
  CHECK_FALSE(ref.contains(7));
  CHECK(tlb.size() == 4096);
}

TEST_CASE("TLB replacement matches a reference LRU list") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SplitMix64 rng(seed);
    const std::size_t cap = 1 + rng.below(16);
    Tlb tlb(cap);
    oracle::Lru ref(cap);
    for (int i = 0; i < 2000; ++i) {
      const auto v = rng.below(3 * cap);
      const auto kind = rng.below(4);
      if (kind == 0) {
        CHECK((tlb.lookup({v}) != nullptr) == ref.lookup(v));
      } else if (kind == 3) {
        CHECK(tlb.invalidate({v}) == ref.contains(v));
        ref.erase(v);
      } else {
        const auto ev = tlb.fill({{v}, {v}, true});
        const auto ref_ev = ref.insert(v);
        CHECK(ev.has_value() == ref_ev.has_value());
        if (ev && ref_ev) CHECK(ev->vpn == *ref_ev);
      }
      CHECK(tlb.size() <= cap);
    }
  }
}

TEST_CASE("ept lookup of an unmapped vpn faults") {
  Small s;
  CHECK_THROWS_AS(s.tr.ept_lookup({3}), PageFault);
  s.tr.handle_page_fault({3}, 0, {});
  const auto& e = s.tr.ept_lookup({3});
  CHECK_FALSE(e.migrated);
  CHECK_FALSE(e.ra);
  CHECK(s.tr.stats().page_walks == 1);
}

TEST_CASE("page faults: free ua, repeat fault, full memory") {
  Small s;
  const auto r = s.tr.handle_page_fault({5}, 0, {});
  CHECK(r.allocated);
  CHECK(r.tlb_invalidations == 0);
  CHECK(r.lines.invalidated == 0);
  CHECK_FALSE(r.evicted);
  const auto again = s.tr.handle_page_fault({5}, 1, {});
  CHECK_FALSE(again.allocated);
  CHECK(again.entry.ua == r.entry.ua);

  for (std::uint64_t v = 6; v < 6 + 11; ++v) s.tr.handle_page_fault({v}, 10 + v, {});
  CHECK(s.tr.free_pages() == 0);
  CHECK(s.tr.resident_pages() == 12);
  s.tr.translate_for_cache(2, {5});
  const auto full = s.tr.handle_page_fault({99}, 100, {});
  REQUIRE(full.evicted);
  CHECK(full.evicted->vpn == 5);  // oldest access
  CHECK(full.entry.ua == r.entry.ua);
  CHECK(full.tlb_invalidations == 1);
  CHECK(s.tr.find({5}) == nullptr);
  CHECK(s.tr.resident_pages() == 12);
}

TEST_CASE("page fault with nothing evictable") {
  Small s;
  for (std::uint64_t v = 0; v < 12; ++v) s.tr.handle_page_fault({v}, v, {});
  FaultHooks pin_all;
  pin_all.pinned = [](UnifiedPageId) { return true; };
  CHECK_THROWS_AS(s.tr.handle_page_fault({50}, 0, pin_all), CapacityError);
}

TEST_CASE("migration flags: start, conflict, complete") {
  Small s;
  s.tr.handle_page_fault({1}, 0, {});
  CHECK_THROWS_AS(s.tr.mark_migration_complete({1}, {Tier::Slow, 2}, true),
                  StateError);
  s.tr.mark_migration_start({1}, MigrationRole::Victim, true);
  CHECK(scenario::flags_of(*s.tr.find({1})) == scenario::Flags{0, 1, 1, "1"});
  CHECK_THROWS_AS(s.tr.mark_migration_start({1}, MigrationRole::Victim, true),
                  ConflictError);
  s.tr.mark_migration_complete({1}, {Tier::Slow, 2}, false);
  const auto& e = *s.tr.find({1});
  CHECK(scenario::flags_of(e) == scenario::Flags{1, 0, 0, "0"});
  CHECK(e.ra == PhysicalFrame{Tier::Slow, 2});

  // Re-selection of a migrated page raises ongoing with migrated still set.
  s.tr.mark_migration_start({1}, MigrationRole::Incoming, false);
  CHECK(scenario::flags_of(*s.tr.find({1})) == scenario::Flags{1, 1, 0, "0"});
}

TEST_CASE("baseline translation refuses migration flags") {
  Small s(4, 8, false);
  s.tr.handle_page_fault({1}, 0, {});
  CHECK_THROWS_AS(s.tr.mark_migration_start({1}, MigrationRole::Victim, true),
                  ModeError);
}

TEST_CASE("ept entry of the swapped hot page after completion") {
  scenario::SwapRig rig;
  rig.controller.request_migration(rig.ua2, 0);
  rig.controller.drain(0);
  const auto& e = rig.translation.ept_lookup(rig.va2);
  CHECK(e.ua == rig.ua2);
  CHECK(e.ra == rig.fa50);
  CHECK(scenario::flags_of(e) == scenario::Flags{1, 0, 1, "0"});
}

TEST_CASE("resolve_memory_target cases") {
  const MemoryGeometry g(64 * 4096, 128 * 4096, 4096);
  BitVector bits(64);
  RemapState migrated{{50}, PhysicalFrame{Tier::Slow, 100}, true, false};
  CHECK(resolve_memory_target(migrated, 3, bits, g) ==
        MemoryTarget{FrameAccess{{Tier::Slow, 100}, 3}});

  RemapState plain{{70}, std::nullopt, false, false};
  CHECK(resolve_memory_target(plain, 9, bits, g) ==
        MemoryTarget{FrameAccess{{Tier::Slow, 6}, 9}});

  RemapState moving{{50}, std::nullopt, false, true};
  InFlightLine held{{Tier::Slow, 100}, BufferKind::Hot, true};
  CHECK(resolve_memory_target(moving, 4, bits, g, &held) ==
        MemoryTarget{BufferAccess{BufferKind::Hot, 4}});
  InFlightLine absent{{Tier::Slow, 100}, BufferKind::Hot, false};
  CHECK(resolve_memory_target(moving, 4, bits, g, &absent) ==
        MemoryTarget{StallUntilBuffered{}});
  bits.set(4);
  CHECK(resolve_memory_target(moving, 4, bits, g, &absent) ==
        MemoryTarget{FrameAccess{{Tier::Slow, 100}, 4}});
  CHECK_THROWS_AS(resolve_memory_target(moving, 4, bits, g), StateError);
}

TEST_CASE("cache tags use UA and memory uses RA iff migrated") {
  for (bool duon : {true, false}) {
    CAPTURE(duon);
    const auto cfg = scenario::lookup_config(duon);
    Simulator sim(cfg, scenario::lookup_traces());
    std::ostringstream log;
    sim.set_trace_log(&log);
    for (const auto& sc : scenario::lookup_script()) {
      CAPTURE(sc.name);
      log.str("");
      REQUIRE(sim.step());
      auto f = scenario::parse_log_line(log.str());
      const VirtualPageId vpn{sc.vpn};
      const auto* e = sim.translation().find(vpn);
      REQUIRE(e);
      const auto ua = UnifiedPageId{std::stoull(f["ua"])};
      CHECK(ua == e->ua);
      CHECK(sim.caches().contains(sim.caches().line_addr(ua, sc.line)));
      CHECK(f["tlb"] == (sc.tlb_hit ? "hit" : "miss"));
      CHECK((f["served"] == "L1" || f["served"] == "LLC") == sc.cache_hit);
      CHECK(!sim.frames().is_identity(ua) == sc.migrated);
      if (duon) CHECK(e->migrated == sc.migrated);
      if (!sc.cache_hit) {
        const auto expect = sc.migrated ? sim.frames().frame_of(ua)
                                        : default_frame_of(ua, sim.translation().geometry());
        if (duon && sc.migrated) CHECK(e->ra == expect);
        CHECK(f["frame"] == to_string(expect));
      }
    }
    CHECK_FALSE(sim.step());
  }
}

TEST_CASE("translate_for_cache returns UA for a page mid-migration") {
  scenario::SwapRig rig;
  rig.translation.translate_for_cache(0, rig.va1);
  rig.controller.request_migration(rig.ua2, 0);
  CHECK(rig.e1().ongoing_migration);
  CHECK(rig.translation.translate_for_cache(0, rig.va1).ua == rig.ua1);
  CHECK(rig.translation.translate_for_cache(1, rig.va1).ua == rig.ua1);
  CHECK(rig.translation.translate_for_cache(1, rig.va2).ua == rig.ua2);
}

TEST_CASE("ept csv rendering") {
  scenario::SwapRig rig;
  CHECK(ept_csv_header() == "vpn,ua,ra,migrated,ongoing,pair,residency");
  CHECK(ept_csv_row(rig.e1()) == "4146,50,-,0,0,0,-");
  rig.controller.request_migration(rig.ua2, 0);
  rig.controller.drain(0);
  CHECK(ept_csv_row(rig.e1()) == "4146,50,S100,1,0,1,0");
}
