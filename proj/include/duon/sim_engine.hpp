#pragma once

// Trace-driven multi-core simulation loop with per-core cycle ledgers and a
// shadow functional oracle.
//
// Each core issues its next reference after executing its icount
// instructions at one instruction per cycle; the core whose next issue cycle
// is lowest goes first (lowest core id on ties). Accesses block: a core's
// clock advances by the full access latency before its next event.

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "duon/address_space.hpp"
#include "duon/cache_model.hpp"
#include "duon/migration_engine.hpp"
#include "duon/policy.hpp"
#include "duon/tlb_coherence.hpp"
#include "duon/translation.hpp"
#include "duon/workload.hpp"

namespace duon {

// Device access time in nanoseconds (array latency, no queuing).
struct DeviceTiming {
  const char* name;
  double read_ns;
  double write_ns;
};

// tCAS + tRCD for the DRAM parts; PCM uses its read/write latencies.
inline constexpr DeviceTiming kHbm{"HBM", 28.0, 28.0};
inline constexpr DeviceTiming kDdr4{"DDR4", 32.0, 32.0};
inline constexpr DeviceTiming kPcm{"PCM", 80.0, 250.0};

// Rounds up so no device is modeled faster than its datasheet.
std::uint64_t ns_to_cycles(double ns, double freq_ghz);

struct LatencyTable {
  std::uint64_t fast_read = 90;
  std::uint64_t fast_write = 90;
  std::uint64_t slow_read = 256;
  std::uint64_t slow_write = 800;
  std::uint64_t buffer_access = 10;
  std::uint64_t page_walk = 100;
  std::uint64_t ext_lookup = 1;
  std::uint64_t page_fault = 1000;
  std::uint64_t line_invalidate = 20;

  static LatencyTable from_devices(const DeviceTiming& fast,
                                   const DeviceTiming& slow, double freq_ghz);
  std::uint64_t read(Tier t) const {
    return t == Tier::Fast ? fast_read : slow_read;
  }
  std::uint64_t write(Tier t) const {
    return t == Tier::Fast ? fast_write : slow_write;
  }
};

struct SimConfig {
  std::uint32_t cores = 16;
  double freq_ghz = 3.2;
  std::uint64_t fast_capacity = 1ull << 30;
  std::uint64_t slow_capacity = 16ull << 30;
  std::uint64_t page_size = 4096;
  CacheConfig cache;
  PolicyConfig policy;
  LatencyTable latencies;
  TcmConfig tcm;
  std::size_t tlb_entries = 4096;
  std::size_t remap_capacity = 4096;
  bool charge_absent_lines = false;
  // Every core waits for an epoch's batch of migrations to finish.
  bool epoch_blocking = false;
  bool contend = true;
  std::size_t queue_capacity = 64;
  AllocOrder alloc_order = AllocOrder::Shuffled;
  std::uint64_t seed = 0;
  // Compare every read with the shadow oracle and check the end state.
  bool verify = true;
  // Record the global issue order (core ids) for oracle_replay.
  bool record_order = false;

  MemoryGeometry geometry() const {
    return MemoryGeometry(fast_capacity, slow_capacity, page_size);
  }
  std::uint32_t lines_per_page() const {
    return static_cast<std::uint32_t>(page_size / cache.line_size);
  }
  std::uint64_t epoch_cycles() const;
  // Throws std::invalid_argument naming the field.
  void validate() const;
};

struct CoreStats {
  std::uint64_t events = 0;
  std::uint64_t reads = 0;
  std::uint64_t writes = 0;
  std::uint64_t instructions = 0;
  std::uint64_t cycles = 0;
  // Ledger: cycles == issue + cache + memory + stall + overhead.
  std::uint64_t issue_cycles = 0;
  std::uint64_t cache_cycles = 0;
  std::uint64_t memory_cycles = 0;
  std::uint64_t stall_cycles = 0;
  std::uint64_t overhead_cycles = 0;
  std::uint64_t l1_hits = 0;
  std::uint64_t llc_hits = 0;
  std::uint64_t llc_misses = 0;
  std::uint64_t tlb_hits = 0;
  std::uint64_t tlb_misses = 0;
  std::uint64_t page_faults = 0;

  bool ledger_balanced() const {
    return cycles ==
           issue_cycles + cache_cycles + memory_cycles + stall_cycles + overhead_cycles;
  }
};

struct SimStats {
  std::vector<CoreStats> cores;
  std::uint64_t migrations = 0;  // retired jobs
  std::uint64_t migrations_started = 0;
  std::uint64_t pair_migrations = 0;
  std::uint64_t one_way_migrations = 0;
  std::uint64_t remigrations = 0;
  std::uint64_t migration_requests = 0;
  std::uint64_t migrations_dropped = 0;
  std::uint64_t migration_stall_cycles = 0;
  std::uint64_t buffer_served = 0;
  std::uint64_t redirected = 0;
  std::uint64_t wait_enqueued = 0;
  std::uint64_t line_transfers = 0;
  std::uint64_t shootdown_events = 0;
  std::uint64_t shootdown_cycles = 0;
  std::uint64_t tlb_shootdowns = 0;
  std::uint64_t reconciliations = 0;
  std::uint64_t remap_full_stalls = 0;
  // Migration-attributed (reconciliation) cache invalidations.
  std::uint64_t lines_invalidated = 0;
  std::uint64_t invalidation_cycles = 0;
  std::uint64_t page_faults = 0;
  std::uint64_t fault_lines_invalidated = 0;
  std::uint64_t fault_tlb_invalidations = 0;
  std::uint64_t tcm_broadcasts = 0;
  std::uint64_t tcm_entry_updates = 0;
  std::uint64_t coherence_checks = 0;
  std::uint64_t oracle_reads_checked = 0;
  std::uint64_t llc_writebacks = 0;
  std::uint64_t final_threshold = 0;
  std::vector<std::uint64_t> threshold_changes;  // epoch index of each change
  std::vector<std::uint64_t> overhead_per_epoch;
  std::vector<JobRecord> jobs;
  std::vector<std::uint32_t> issue_order;

  std::uint64_t instructions() const;
  std::uint64_t max_cycles() const;
};

struct IpcReport {
  std::vector<double> per_core;  // NaN for a core with zero cycles
  double aggregate = 0;
};

class IpcError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws IpcError when no core ran a cycle.
IpcReport compute_ipc(const SimStats& stats);
double normalized_ipc(double ipc, double baseline_ipc);

class OracleMismatch : public std::runtime_error {
 public:
  OracleMismatch(std::uint64_t event_index, std::uint32_t core,
                 VirtualPageId vpn, std::uint32_t line, std::uint64_t expected,
                 std::uint64_t got);
  std::uint64_t event_index;
  std::uint32_t core;
  VirtualPageId vpn;
  std::uint32_t line;
  std::uint64_t expected;
  std::uint64_t got;
};

class CoherenceViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Simulator {
 public:
  Simulator(const SimConfig& config, const CoreTraces& traces);
  ~Simulator();

  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  void set_trace_log(std::ostream* log) { log_ = log; }

  // Issues the next event; false once every trace is exhausted.
  bool step();
  // Runs to completion, drains migrations, audits, and returns the stats.
  SimStats run();

  // Value a virtual line currently holds in the simulated system.
  std::uint64_t observe(VirtualPageId vpn, std::uint32_t line) const;

  const SimConfig& config() const { return config_; }
  const Translation& translation() const { return *translation_; }
  const CacheHierarchy& caches() const { return *caches_; }
  const MigrationController& controller() const { return *controller_; }
  const FrameMap& frames() const { return *frames_; }
  const RemapTable* remap_table() const { return remap_.get(); }
  const MigrationPolicy& policy() const { return *policy_; }
  const SimStats& stats() const { return stats_; }

 private:
  struct Access {
    std::uint64_t cache = 0;
    std::uint64_t memory = 0;
    std::uint64_t stall = 0;
    std::uint64_t overhead = 0;
  };

  std::optional<std::uint32_t> next_core() const;
  void process_epochs(std::uint64_t now);
  void epoch_boundary(std::uint64_t index, std::uint64_t at);
  void submit(UnifiedPageId ua, std::uint64_t now);
  void on_retire(const JobRecord& rec);
  void charge_all(std::uint64_t cycles, std::uint64_t at);
  void attribute(std::uint64_t cycles, std::uint64_t at);
  std::uint64_t fault_in(std::uint32_t core, VirtualPageId vpn,
                         std::uint64_t now);
  void baseline_record(const std::vector<UnifiedPageId>& uas, std::uint64_t at);
  void run_reconcile(std::uint64_t at);
  void writeback(std::uint64_t line_addr, std::uint64_t value);
  void audit_end_state() const;
  void finalize();

  SimConfig config_;
  CoreTraces traces_;
  MemoryGeometry geom_;
  std::uint32_t lpp_;
  std::unique_ptr<FrameMap> frames_;
  std::unique_ptr<PhysicalMemory> memory_;
  std::unique_ptr<Translation> translation_;
  std::unique_ptr<CacheHierarchy> caches_;
  std::unique_ptr<MigrationController> controller_;
  std::unique_ptr<MigrationPolicy> policy_;
  std::unique_ptr<RemapTable> remap_;
  FaultHooks hooks_;

  std::vector<std::size_t> cursor_;
  std::uint64_t event_index_ = 0;
  std::uint64_t epoch_cycles_;
  std::uint64_t next_epoch_ = 1;
  std::uint64_t window_instructions_ = 0;
  std::uint64_t clock_ = 0;  // latest issue cycle seen
  std::unordered_map<std::uint64_t, std::uint64_t> shadow_;
  std::unordered_map<std::uint64_t, std::vector<std::uint64_t>> backing_;
  std::ostream* log_ = nullptr;
  bool finished_ = false;
  bool reconcile_pending_ = false;
  BitVector empty_bits_;
  SimStats stats_;
};

SimStats run(const SimConfig& config, const CoreTraces& traces,
             std::ostream* trace_log = nullptr);

// Flat, migration-free functional model: replays the traces in the given
// global order and returns the final value of every written line, keyed by
// vpn * lines_per_page + line.
std::unordered_map<std::uint64_t, std::uint64_t> oracle_replay(
    const CoreTraces& traces, const std::vector<std::uint32_t>& order,
    std::uint64_t page_size, std::uint32_t line_size);

}  // namespace duon
