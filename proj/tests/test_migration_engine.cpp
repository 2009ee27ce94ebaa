#include <doctest.h>

#include "duon/migration_engine.hpp"
#include "scenarios.hpp"

using namespace duon;
using scenario::Flags;
using scenario::flags_of;
using scenario::SwapRig;

TEST_CASE("pair migration walks the five-step flag table") {
  SwapRig rig;
  rig.translation.translate_for_cache(0, rig.va1);
  rig.translation.translate_for_cache(1, rig.va1);
  rig.translation.translate_for_cache(0, rig.va2);

  // Step 1: decision, nothing raised yet.
  CHECK(flags_of(rig.e1()) == Flags{0, 0, 0, "-"});
  CHECK(flags_of(rig.e2()) == Flags{0, 0, 0, "-"});
  CHECK(rig.frames.frame_of(rig.ua1) == rig.fa50);
  CHECK(rig.frames.frame_of(rig.ua2) == rig.sa100);
  CHECK(rig.page_holds(rig.fa50, 0x1111));
  CHECK(rig.page_holds(rig.sa100, 0x2222));

  REQUIRE(rig.controller.request_migration(rig.ua2, 100) == RequestOutcome::Started);
  const auto job = *rig.controller.active_job();
  CHECK(job.pair);
  CHECK(job.victim_vpn == rig.va1);

  // Step 2: victim held, hot page still served from slow memory.
  rig.controller.advance(job.s2_start);
  CHECK(flags_of(rig.e1()) == Flags{0, 1, 1, "1"});
  CHECK(flags_of(rig.e2()) == Flags{0, 0, 0, "0"});
  CHECK_FALSE(rig.e1().ra);
  CHECK_FALSE(rig.e2().ra);
  CHECK(rig.translation.tlb(0).peek(rig.va1)->ongoing_migration);
  CHECK(rig.translation.tlb(1).peek(rig.va1)->ongoing_migration);
  CHECK(rig.controller.migration_queue().serviced(Tier::Fast) == 0);
  {
    const auto ic = rig.controller.intercept_access(0, rig.va1, 0, false, job.s2_start);
    CHECK(ic.kind == Intercept::Kind::Enqueued);
    const auto hot = rig.controller.intercept_access(0, rig.va2, 0, false, job.s2_start);
    CHECK(hot.kind == Intercept::Kind::RedirectedToFrame);
    CHECK(hot.frame == rig.sa100);
  }

  // Step 3: victim fully in the hot buffer.
  rig.controller.advance(job.s3_start);
  CHECK(flags_of(rig.e1()) == Flags{0, 1, 1, "1"});
  CHECK(flags_of(rig.e2()) == Flags{0, 0, 0, "0"});
  CHECK(rig.controller.hot_buffer().held_count() == 64);
  for (std::uint32_t l = 0; l < 64; ++l)
    CHECK(rig.controller.hot_buffer().value(l) == 0x1111);
  CHECK(rig.controller.bitvec_for(rig.ua1).none());

  // Step 4: hot page copied into fast memory; remapped addresses assigned.
  rig.controller.advance(job.s4_start);
  CHECK(flags_of(rig.e1()) == Flags{0, 1, 1, "1"});
  CHECK(flags_of(rig.e2()) == Flags{0, 0, 0, "0"});
  CHECK(rig.e1().ra == rig.sa100);
  CHECK(rig.e2().ra == rig.fa50);
  CHECK(rig.page_holds(rig.fa50, 0x2222));
  CHECK(rig.controller.bitvec_for(rig.ua2).all());
  {
    const auto hot = rig.controller.intercept_access(0, rig.va2, 7, false, job.s4_start);
    CHECK(hot.kind == Intercept::Kind::RedirectedToFrame);
    CHECK(hot.frame == rig.fa50);
  }

  // Step 5: both complete.
  rig.controller.advance(job.retire_cycle);
  CHECK(rig.controller.idle());
  CHECK(flags_of(rig.e1()) == Flags{1, 0, 1, "0"});
  CHECK(flags_of(rig.e2()) == Flags{1, 0, 1, "0"});
  CHECK(rig.e1().ra == rig.sa100);
  CHECK(rig.e2().ra == rig.fa50);
  CHECK(rig.frames.frame_of(rig.ua1) == rig.sa100);
  CHECK(rig.frames.frame_of(rig.ua2) == rig.fa50);
  CHECK(rig.page_holds(rig.sa100, 0x1111));
  CHECK(rig.page_holds(rig.fa50, 0x2222));
  for (std::uint32_t c : {0u, 1u}) {
    const auto* t = rig.translation.tlb(c).peek(rig.va1);
    REQUIRE(t);
    CHECK(t->ra == rig.sa100);
    CHECK(t->migrated);
    CHECK_FALSE(t->ongoing_migration);
  }
  const auto* t2 = rig.translation.tlb(0).peek(rig.va2);
  CHECK(t2->ra == rig.fa50);
  CHECK(t2->migrated);
  CHECK(rig.controller.wait_queue().size() == 0);
  CHECK(rig.controller.hot_buffer().held_count() == 0);
}

TEST_CASE("job schedule follows per-line latencies") {
  SwapRig rig;
  rig.controller.request_migration(rig.ua2, 100);
  const auto& j = *rig.controller.active_job();
  const DeviceLatencies d;
  const std::uint64_t ack = 10 + 2;  // two cores
  CHECK(j.s2_start == 100 + ack);
  CHECK(j.s2_line == d.fast_read + d.buffer_access);
  CHECK(j.s3_line == d.slow_read + d.fast_write);
  CHECK(j.s4_line == d.buffer_access + d.slow_write);
  CHECK(j.s3_start == j.s2_start + 64 * j.s2_line);
  CHECK(j.s4_start == j.s3_start + 64 * j.s3_line);
  CHECK(j.data_done == j.s4_start + 64 * j.s4_line);
  CHECK(j.retire_cycle == j.data_done + 2 * ack);
}

TEST_CASE("zero-latency pair job takes 128 controller reads") {
  MigrationConfig mc;
  mc.latency = {0, 0, 0, 0, 0};
  SwapRig rig(mc);
  rig.controller.request_migration(rig.ua2, 0);
  rig.controller.drain(0);
  CHECK(rig.controller.migration_queue().serviced(Tier::Fast) == 64);
  CHECK(rig.controller.migration_queue().serviced(Tier::Slow) == 64);
  CHECK(rig.controller.migration_queue().serviced(Tier::Fast) +
            rig.controller.migration_queue().serviced(Tier::Slow) ==
        2 * 64);
  CHECK(rig.controller.stats().line_transfers == 3 * 64);
  CHECK(rig.page_holds(rig.fa50, 0x2222));
}

TEST_CASE("one-way migration into a free fast frame") {
  const MemoryGeometry g(4 * 4096, 8 * 4096, 4096);
  FrameMap frames(g);
  PhysicalMemory mem(g, 64);
  TranslationConfig tc;
  tc.cores = 1;
  tc.alloc_order = AllocOrder::Sequential;
  Translation tr(g, frames, tc);
  // vpns 0..2 take ua 0..2; ua 3 is held back so vpn 10 lands on ua 4 and
  // fast frame 3 stays free.
  for (std::uint64_t v = 0; v < 3; ++v) tr.handle_page_fault({v}, 0, {});
  tr.reserve_free({3});
  tr.handle_page_fault({10}, 0, {});  // lands on ua 4, slow frame 0
  tr.release_reserved({3});
  for (std::uint32_t l = 0; l < 64; ++l) mem.write({Tier::Slow, 0}, l, 77 + l);
  MigrationController mc({}, g, frames, mem, tr, true);
  const auto ua = tr.find({10})->ua;
  REQUIRE(ua == UnifiedPageId{4});
  REQUIRE(mc.request_migration(ua, 0) == RequestOutcome::Started);
  CHECK_FALSE(mc.active_job()->pair);
  CHECK_FALSE(mc.active_job()->victim_vpn);
  CHECK(mc.active_job()->s4_start == mc.active_job()->data_done);
  mc.drain(0);
  CHECK(tr.find({10})->ra == PhysicalFrame{Tier::Fast, 3});
  CHECK(frames.frame_of(ua) == PhysicalFrame{Tier::Fast, 3});
  CHECK_FALSE(tr.find({10})->pair);
  for (std::uint32_t l = 0; l < 64; ++l) CHECK(mem.read({Tier::Fast, 3}, l) == 77 + l);
  CHECK(mc.migration_queue().serviced(Tier::Fast) == 0);
  CHECK(mc.stats().one_way == 1);
}

TEST_CASE("requests: rejections, queueing, overflow drop") {
  MigrationConfig cfg;
  cfg.queue_capacity = 2;
  SwapRig rig(cfg);
  CHECK(rig.controller.request_migration(rig.ua1, 0) == RequestOutcome::RejectedAlreadyFast);
  CHECK(rig.controller.request_migration({SwapRig::kFastPages + 120}, 0) ==
        RequestOutcome::RejectedNotResident);
  CHECK(rig.controller.request_migration(rig.ua2, 0) == RequestOutcome::Started);
  CHECK(rig.controller.request_migration(rig.ua2, 0) == RequestOutcome::RejectedInFlight);
  CHECK(rig.controller.request_migration({SwapRig::kFastPages + 1}, 0) == RequestOutcome::Queued);
  CHECK(rig.controller.request_migration({SwapRig::kFastPages + 1}, 0) ==
        RequestOutcome::RejectedInFlight);
  CHECK(rig.controller.request_migration({SwapRig::kFastPages + 2}, 0) == RequestOutcome::Queued);
  CHECK(rig.controller.request_migration({SwapRig::kFastPages + 3}, 0) == RequestOutcome::Dropped);
  CHECK(rig.controller.queued() == 2);

  std::vector<std::uint64_t> order;
  rig.controller.on_retire([&](const JobRecord& r) { order.push_back(r.hot_ua.ua); });
  rig.controller.drain(0);
  CHECK(order == std::vector<std::uint64_t>{rig.ua2.ua, SwapRig::kFastPages + 1,
                                            SwapRig::kFastPages + 2});
  CHECK(rig.controller.idle());
}

TEST_CASE("victim selection is LRU with lowest-vpn ties") {
  SwapRig rig;
  CHECK(rig.controller.select_victim(0) == rig.va1);
  rig.translation.touch(rig.va1, 50);
  // Everything else sits at cycle 10: lowest vpn wins.
  CHECK(rig.controller.select_victim(0) == VirtualPageId{SwapRig::kVpnBase});
  for (std::uint64_t i = 0; i < SwapRig::kFastPages; ++i)
    rig.translation.touch({SwapRig::kVpnBase + i}, 100 + i);
  rig.translation.touch({SwapRig::kVpnBase + 5}, 20);
  CHECK(rig.controller.select_victim(0) == VirtualPageId{SwapRig::kVpnBase + 5});
}

TEST_CASE("intercepts on the hot page: frame, buffer, destination") {
  SwapRig rig;
  rig.controller.request_migration(rig.ua2, 0);
  const auto j = *rig.controller.active_job();
  const std::uint32_t line = 3;
  const auto mid = j.s3_start + line * j.s3_line + j.s3_read;
  const auto end = j.s3_start + (line + 1) * j.s3_line;
  auto k = [&](std::uint64_t t) {
    return rig.controller.intercept_access(0, rig.va2, line, false, t).kind;
  };
  CHECK(k(mid - 1) == Intercept::Kind::RedirectedToFrame);
  CHECK(k(mid) == Intercept::Kind::ServedFromBuffer);
  CHECK(k(end - 1) == Intercept::Kind::ServedFromBuffer);
  CHECK(k(end) == Intercept::Kind::RedirectedToFrame);
  CHECK(rig.controller.intercept_access(0, rig.va2, line, false, end).frame == rig.fa50);

  // Victim: held until landed, buffered until drained, then at slow frame.
  const auto landed = j.s2_start + (line + 1) * j.s2_line;
  const auto drained = j.s4_start + (line + 1) * j.s4_line;
  auto v = [&](std::uint64_t t) {
    return rig.controller.intercept_access(0, rig.va1, line, false, t);
  };
  const auto held = v(landed - 1);
  CHECK(held.kind == Intercept::Kind::Enqueued);
  CHECK(held.ready_cycle == landed);
  CHECK(v(landed).kind == Intercept::Kind::ServedFromBuffer);
  CHECK(v(drained - 1).kind == Intercept::Kind::ServedFromBuffer);
  CHECK(v(drained).kind == Intercept::Kind::RedirectedToFrame);
  CHECK(v(drained).frame == rig.sa100);

  CHECK_THROWS_AS(rig.controller.intercept_access(0, {3}, 0, false, 0), StateError);
  rig.controller.drain(0);
  CHECK_THROWS_AS(rig.controller.intercept_access(0, rig.va2, 0, false, 0), StateError);
  CHECK(rig.controller.stats().wait_enqueued == 1);
  CHECK(rig.controller.stats().wait_served == 1);
}

TEST_CASE("writes to in-flight lines reach the destination") {
  SwapRig rig;
  rig.controller.request_migration(rig.ua2, 0);
  const auto j = *rig.controller.active_job();
  // Victim line 0 sits in the hot buffer during S3.
  rig.controller.advance(j.s3_start);
  rig.controller.write_line(rig.ua1, 0, 0xAAAA);
  CHECK(rig.controller.read_line(rig.ua1, 0) == 0xAAAA);
  // Hot page line 63 is still at its source early in S3.
  rig.controller.write_line(rig.ua2, 63, 0xBBBB);
  CHECK(rig.controller.read_line(rig.ua2, 63) == 0xBBBB);
  rig.controller.drain(0);
  CHECK(rig.memory.read(rig.sa100, 0) == 0xAAAA);
  CHECK(rig.memory.read(rig.fa50, 63) == 0xBBBB);
  CHECK(rig.memory.read(rig.sa100, 1) == 0x1111);
}

TEST_CASE("re-migration of a migrated page") {
  SwapRig rig;
  rig.controller.request_migration(rig.ua2, 0);
  const auto t = rig.controller.drain(0);
  // UA1 now lives in slow frame 100; bring it back.
  rig.translation.touch(rig.va1, t + 1);
  REQUIRE(rig.controller.request_migration(rig.ua1, t) == RequestOutcome::Started);
  const auto& j = *rig.controller.active_job();
  CHECK(j.remigration);
  CHECK(flags_of(rig.e1()) == Flags{1, 1, 0, "0"});
  CHECK(j.bitvec_in.none());
  CHECK(j.bitvec_out.none());
  rig.controller.drain(t);
  CHECK(flags_of(rig.e1()).migrated == 1);
  CHECK(flags_of(rig.e1()).ongoing == 0);
  CHECK(rig.e1().ra == rig.frames.frame_of(rig.ua1));
  CHECK(rig.frames.frame_of(rig.ua1).tier == Tier::Fast);
  CHECK(rig.page_holds(rig.frames.frame_of(rig.ua1), 0x1111));
  CHECK(rig.controller.stats().remigrations == 1);
}

TEST_CASE("contention: demand reads wait only for controller reads") {
  SwapRig rig;
  rig.controller.request_migration(rig.ua2, 0);
  const auto j = *rig.controller.active_job();
  const DeviceLatencies d;
  CHECK(rig.controller.contention_delay(Tier::Fast, j.s2_start) == d.fast_read);
  CHECK(rig.controller.contention_delay(Tier::Fast, j.s2_start + d.fast_read) == 0);
  CHECK(rig.controller.contention_delay(Tier::Slow, j.s2_start) == 0);
  CHECK(rig.controller.contention_delay(Tier::Slow, j.s3_start + 5) == d.slow_read - 5);
  CHECK(rig.controller.contention_delay(Tier::Fast, j.s3_start + 5) == 0);
  CHECK(rig.controller.contention_delay(Tier::Slow, j.s4_start) == 0);

  MigrationConfig off;
  off.contend = false;
  SwapRig quiet(off);
  quiet.controller.request_migration(quiet.ua2, 0);
  CHECK(quiet.controller.contention_delay(Tier::Fast,
                                          quiet.controller.active_job()->s2_start) == 0);
}

TEST_CASE("bit vector basics") {
  BitVector b(64);
  CHECK(b.none());
  b.set(0);
  b.set(63);
  CHECK(b.popcount() == 2);
  CHECK(b.test(63));
  CHECK_THROWS(b.set(64));
  b.reset();
  CHECK(b.none());
  BitVector odd(70);
  for (std::uint32_t i = 0; i < 70; ++i) odd.set(i);
  CHECK(odd.all());
}
