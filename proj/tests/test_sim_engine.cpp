#include <doctest.h>

#include <cmath>
#include <sstream>

#include "duon/rng.hpp"
#include "duon/sim_engine.hpp"
#include "scenarios.hpp"

using namespace duon;

namespace {

// Small machine where migrations, evictions and page faults all happen.
SimConfig small(PolicyKind kind, bool duon, std::uint64_t seed = 0) {
  SimConfig c;
  c.cores = 4;
  c.fast_capacity = 16 * 4096;
  c.slow_capacity = 48 * 4096;
  c.cache.l1_size = 4096;
  c.cache.llc_size = 32 * 1024;
  c.cache.llc_assoc = 8;
  c.policy.kind = kind;
  c.policy.duon = duon;
  c.policy.threshold = 4;
  c.policy.epoch_us = 2;
  c.policy.adapt_period = 2;
  c.policy.adapt_min = 2;
  c.remap_capacity = 16;
  c.tlb_entries = 16;
  c.seed = seed;
  return c;
}

CoreTraces zipf_traces(std::uint64_t seed, std::uint64_t events,
                       std::uint64_t footprint = 80, std::uint32_t cores = 4) {
  TraceSpec t;
  t.pattern = ZipfPattern{0.8};
  t.footprint_pages = footprint;
  t.events_per_core = events;
  t.write_ratio = 0.4;
  t.mean_icount = 2;
  t.seed = seed;
  return generate(t, cores);
}

const PolicyKind kAllKinds[] = {PolicyKind::NoMigration, PolicyKind::Threshold,
                                PolicyKind::Epoch, PolicyKind::AdaptThold};

std::string fingerprint(const SimStats& s) {
  std::ostringstream os;
  for (const auto& c : s.cores)
    os << c.instructions << ',' << c.cycles << ',' << c.issue_cycles << ','
       << c.cache_cycles << ',' << c.memory_cycles << ',' << c.stall_cycles << ','
       << c.overhead_cycles << ',' << c.l1_hits << ',' << c.llc_hits << ','
       << c.llc_misses << ',' << c.tlb_hits << ',' << c.page_faults << ';';
  os << s.migrations << ',' << s.pair_migrations << ',' << s.remigrations << ','
     << s.shootdown_events << ',' << s.lines_invalidated << ','
     << s.migration_stall_cycles << ',' << s.tcm_broadcasts << ';';
  for (auto o : s.overhead_per_epoch) os << o << ',';
  return os.str();
}

}  // namespace

TEST_CASE("ns to cycles at 3.2 GHz") {
  CHECK(ns_to_cycles(80, 3.2) == 256);
  CHECK(ns_to_cycles(250, 3.2) == 800);
  CHECK(ns_to_cycles(28, 3.2) == 90);
  CHECK(ns_to_cycles(32, 3.2) == 103);
  CHECK(ns_to_cycles(0, 3.2) == 0);
  CHECK_THROWS_AS(ns_to_cycles(-1, 3.2), std::invalid_argument);
  const auto pcm = LatencyTable::from_devices(kHbm, kPcm, 3.2);
  CHECK(pcm.slow_read == 256);
  CHECK(pcm.slow_write == 800);
  CHECK(pcm.fast_read == 90);
  CHECK(pcm.fast_write == 90);
  const auto ddr = LatencyTable::from_devices(kHbm, kDdr4, 3.2);
  CHECK(ddr.slow_read == 103);
  CHECK(ddr.slow_write == 103);
  const LatencyTable defaults;
  CHECK(defaults.slow_read == 256);
  CHECK(defaults.slow_write == 800);
}

TEST_CASE("epoch length in cycles") {
  SimConfig c;
  CHECK(c.epoch_cycles() == 32000000);
  c.policy.epoch_us = 2;
  CHECK(c.epoch_cycles() == 6400);
}

TEST_CASE("config validation names fields") {
  auto field_of = [](SimConfig c) -> std::string {
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      const std::string w = e.what();
      return w.substr(0, w.find(':'));
    }
    return "";
  };
  SimConfig c;
  CHECK(field_of(c).empty());
  c.cores = 0;
  CHECK(field_of(c) == "system.cores");
  c = {};
  c.fast_capacity = 4097;
  CHECK(field_of(c) == "geometry.fast_capacity");
  c = {};
  c.policy.threshold = 0;
  CHECK(field_of(c) == "policy.threshold");
  c = {};
  c.freq_ghz = 0;
  CHECK(field_of(c) == "system.freq_ghz");
}

TEST_CASE("empty traces give zero everything") {
  const auto s = run(small(PolicyKind::Threshold, true), CoreTraces(4));
  CHECK(s.instructions() == 0);
  CHECK(s.max_cycles() == 0);
  CHECK(s.migrations == 0);
  CHECK_THROWS_AS(compute_ipc(s), IpcError);
}

TEST_CASE("zero latencies give IPC 1") {
  SimConfig c;
  c.cores = 1;
  c.fast_capacity = 4 * 4096;
  c.slow_capacity = 4 * 4096;
  c.cache.l1_latency = 0;
  c.cache.llc_latency = 0;
  c.latencies = {0, 0, 0, 0, 0, 0, 0, 0, 0};
  c.policy.kind = PolicyKind::NoMigration;
  CoreTraces t(1);
  for (std::uint64_t i = 0; i < 100; ++i)
    t[0].push_back({0, i % 3 ? Op::Read : Op::Write, (i % 8) * 4096 + (i % 64) * 64, 1 + i % 5});
  const auto s = run(c, t);
  CHECK(s.instructions() > 0);
  CHECK(compute_ipc(s).aggregate == 1.0);
}

TEST_CASE("IPC arithmetic") {
  SimStats s;
  s.cores.resize(2);
  s.cores[0].instructions = 1000;
  s.cores[0].cycles = 2000;
  const auto r = compute_ipc(s);
  CHECK(r.per_core[0] == 0.5);
  CHECK(std::isnan(r.per_core[1]));
  CHECK(r.aggregate == 0.5);
  CHECK(normalized_ipc(0.5, 0.5) == 1.0);
  CHECK_THROWS_AS(normalized_ipc(0.5, 0), IpcError);
}

TEST_CASE("per-event cycle charges") {
  SimConfig c;
  c.cores = 1;
  c.fast_capacity = 2 * 4096;
  c.slow_capacity = 8 * 4096;
  c.alloc_order = AllocOrder::Sequential;
  c.policy.kind = PolicyKind::NoMigration;
  CoreTraces t(1);
  const std::uint64_t slow_page = 2;  // ua 2 is slow frame 0
  t[0] = {{0, Op::Read, 0, 1},
          {0, Op::Read, 0, 7},
          {0, Op::Read, 4096, 1},
          {0, Op::Read, slow_page * 4096, 1},
          {0, Op::Read, slow_page * 4096 + 64, 9}};
  Simulator sim(c, t);
  auto cycles = [&] { return sim.stats().cores[0].cycles; };
  sim.step();
  auto before = cycles();
  sim.step();
  CHECK(cycles() - before == 7 + 2);  // L1 hit
  sim.step();
  sim.step();
  before = cycles();
  sim.step();
  const auto& l = c.latencies;
  CHECK(cycles() - before == 9 + 2 + 21 + l.ext_lookup + l.slow_read);
  CHECK(sim.stats().cores[0].ledger_balanced());
}

TEST_CASE("reads see the last write, unwritten lines read zero") {
  SimConfig c = small(PolicyKind::NoMigration, true);
  c.cores = 2;
  CoreTraces t(2);
  t[0] = {{0, Op::Write, 0x5000, 1}, {0, Op::Read, 0x5000, 1}, {0, Op::Read, 0x6040, 1}};
  t[1] = {{1, Op::Read, 0x5000, 50}};
  Simulator sim(c, t);
  const auto s = sim.run();
  CHECK(s.oracle_reads_checked == 3);
  CHECK(sim.observe({5}, 0) == write_value(0, 0));
  CHECK(sim.observe({6}, 1) == 0);
}

TEST_CASE("write values follow the documented mix") {
  auto ref = [](std::uint64_t x) {
    std::uint64_t z = x + 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  };
  CHECK(write_value(0, 0) == ref(0));
  CHECK(write_value(3, 17) == ref((std::uint64_t{3} << 48) | 17));
  CHECK(write_value(1, 0x1000000000000ull) == ref(std::uint64_t{1} << 48));
}

TEST_CASE("traces for more cores than configured are rejected") {
  auto c = small(PolicyKind::Threshold, true);
  CHECK_THROWS_AS(Simulator(c, CoreTraces(5)), std::invalid_argument);
}

TEST_CASE("every mode: ledger, determinism, oracle end state") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const auto traces = zipf_traces(seed, 3000);
    for (auto kind : kAllKinds)
      for (bool duon : {false, true}) {
        CAPTURE(seed);
        CAPTURE(to_string(kind));
        CAPTURE(duon);
        auto cfg = small(kind, duon, seed);
        cfg.record_order = true;
        Simulator sim(cfg, traces);
        const auto s = sim.run();
        for (const auto& core : s.cores) CHECK(core.ledger_balanced());
        CHECK(fingerprint(s) == fingerprint(run(cfg, traces)));

        const auto flat = oracle_replay(traces, s.issue_order, 4096, 64);
        for (const auto& [key, value] : flat)
          REQUIRE(sim.observe({key / 64}, static_cast<std::uint32_t>(key % 64)) == value);

        std::uint64_t epochs = (s.max_cycles() + cfg.epoch_cycles() - 1) / cfg.epoch_cycles();
        CHECK(s.overhead_per_epoch.size() == epochs);

        if (duon) {
          CHECK(s.shootdown_events == 0);
          CHECK(s.lines_invalidated == 0);
          CHECK(s.reconciliations == 0);
        }
        if (kind == PolicyKind::NoMigration) CHECK(s.migrations == 0);
      }
  }
}

TEST_CASE("baseline reconciliation produces shootdowns and invalidations") {
  const auto traces = zipf_traces(3, 4000);
  for (auto kind : {PolicyKind::Threshold, PolicyKind::Epoch, PolicyKind::AdaptThold}) {
    CAPTURE(to_string(kind));
    const auto s = run(small(kind, false), traces);
    REQUIRE(s.migrations > 0);
    REQUIRE(s.reconciliations > 0);
    CHECK(s.shootdown_events > 0);
    CHECK(s.lines_invalidated > 0);
    CHECK(s.tcm_broadcasts == 0);
  }
}

TEST_CASE("Duon runs broadcast and check coherence at every completion") {
  const auto traces = zipf_traces(4, 4000);
  const auto s = run(small(PolicyKind::Threshold, true), traces);
  REQUIRE(s.migrations > 0);
  CHECK(s.coherence_checks == s.migrations + s.pair_migrations);
  CHECK(s.tcm_broadcasts > 0);
}

TEST_CASE("re-migrations happen and keep the oracle happy") {
  std::uint64_t remig = 0;
  for (std::uint64_t seed = 1; seed <= 4; ++seed)
    for (bool duon : {false, true}) {
      const auto s = run(small(PolicyKind::Threshold, duon, seed), zipf_traces(seed, 5000));
      remig += s.remigrations;
      CHECK(s.oracle_reads_checked > 0);
    }
  CHECK(remig > 0);
}

TEST_CASE("issue order picks the lowest next cycle, then lowest core") {
  SimConfig c = small(PolicyKind::NoMigration, true);
  c.cores = 3;
  c.record_order = true;
  CoreTraces t(3);
  t[0] = {{0, Op::Read, 0, 100}};
  t[1] = {{1, Op::Read, 4096, 5}, {1, Op::Read, 4096, 5}};
  t[2] = {{2, Op::Read, 8192, 5}};
  const auto s = run(c, t);
  // Core 1's first access page-faults, so core 0 (ready at 100) goes before
  // core 1's second event.
  CHECK(s.issue_order == std::vector<std::uint32_t>{1, 2, 0, 1});
}

TEST_CASE("trace log has one line per event") {
  const auto traces = zipf_traces(2, 200);
  std::ostringstream log;
  run(small(PolicyKind::Threshold, true), traces, &log);
  std::istringstream in(log.str());
  std::string line;
  std::uint64_t n = 0;
  while (std::getline(in, line)) {
    const auto f = scenario::parse_log_line(line);
    CHECK(f.at("event") == std::to_string(n));
    CHECK(f.count("served") == 1);
    ++n;
  }
  CHECK(n == total_events(traces));
}

TEST_CASE("epoch blocking charges every core") {
  const auto traces = zipf_traces(5, 3000);
  auto cfg = small(PolicyKind::Epoch, true);
  const auto free_run = run(cfg, traces);
  cfg.epoch_blocking = true;
  const auto blocked = run(cfg, traces);
  REQUIRE(blocked.migrations > 0);
  std::uint64_t overhead = 0;
  for (const auto& c : blocked.cores) {
    CHECK(c.ledger_balanced());
    overhead += c.overhead_cycles;
  }
  std::uint64_t base = 0;
  for (const auto& c : free_run.cores) base += c.overhead_cycles;
  CHECK(overhead > base);
}
