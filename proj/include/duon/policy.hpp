#pragma once

// Hotness tracking, migration-candidate selection, and the baseline
// remap table with address reconciliation.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "duon/address_space.hpp"
#include "duon/cache_model.hpp"
#include "duon/translation.hpp"

namespace duon {

enum class PolicyKind : std::uint8_t { NoMigration, Threshold, Epoch, AdaptThold };

const char* to_string(PolicyKind k);
// Accepts the names printed by to_string; throws std::invalid_argument.
PolicyKind parse_policy_kind(const std::string& s);

struct PolicyConfig {
  PolicyKind kind = PolicyKind::Threshold;
  std::uint64_t threshold = 64;
  double epoch_us = 10000.0;
  bool duon = true;
  std::uint32_t adapt_period = 4;
  std::uint64_t adapt_min = 16;
  std::uint64_t adapt_max = 512;
  // Relative IPC change below which the adaptive threshold stays put.
  double adapt_dead_zone = 0.005;

  void validate() const;
};

class AccessCounters {
 public:
  explicit AccessCounters(std::uint64_t total_pages);

  // Returns the count after this access.
  std::uint64_t record(UnifiedPageId ua, std::uint64_t now);
  std::uint64_t count(UnifiedPageId ua) const { return count_.at(ua.ua); }
  std::uint64_t last_access(UnifiedPageId ua) const { return last_.at(ua.ua); }
  void reset(UnifiedPageId ua) { count_.at(ua.ua) = 0; }
  void reset_all();
  // Follows a unified-page rename.
  void swap(UnifiedPageId a, UnifiedPageId b);
  // Pages with a non-zero count, ascending.
  std::vector<UnifiedPageId> nonzero() const;

 private:
  std::vector<std::uint64_t> count_;
  std::vector<std::uint64_t> last_;
  std::vector<std::uint64_t> touched_;
  std::vector<std::uint8_t> in_touched_;
};

class MigrationPolicy {
 public:
  using TierOf = std::function<Tier(UnifiedPageId)>;

  MigrationPolicy(const PolicyConfig& config, std::uint64_t total_pages);

  // Threshold and AdaptThold: a candidate exactly when this access brings
  // the count to the threshold and the page sits in the slow tier.
  std::optional<UnifiedPageId> record_access(UnifiedPageId ua, bool write,
                                             std::uint64_t now, Tier tier);

  // Epoch: slow-tier pages with count >= threshold, hottest first (lower ua
  // on ties); counters are cleared. Other kinds return nothing.
  std::vector<UnifiedPageId> epoch_boundary(std::uint64_t now,
                                            const TierOf& tier_of);

  // AdaptThold rule over successive windows' IPC. Returns the threshold.
  std::uint64_t adapt(double window_ipc);

  void on_migrated(UnifiedPageId ua) { counters_.reset(ua); }

  std::uint64_t threshold() const { return threshold_; }
  const PolicyConfig& config() const { return config_; }
  AccessCounters& counters() { return counters_; }
  const AccessCounters& counters() const { return counters_; }

 private:
  PolicyConfig config_;
  std::uint64_t threshold_;
  std::optional<double> previous_ipc_;
  AccessCounters counters_;
};

// Baseline structure: unified pages whose data sits away from their
// canonical frame, awaiting reconciliation.
class RemapTable {
 public:
  explicit RemapTable(std::size_t capacity);

  // Throws CapacityError when full and ua is new.
  void insert(UnifiedPageId ua);
  bool contains(UnifiedPageId ua) const;
  bool can_insert(std::size_t n) const;
  bool needs_reconcile() const { return 2 * entries_.size() >= capacity_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::vector<UnifiedPageId> keys() const;
  void clear() { entries_.clear(); }

 private:
  std::size_t capacity_;
  std::vector<std::uint64_t> entries_;  // sorted
};

struct ReconcileCosts {
  std::uint64_t line_invalidate_cost = 20;
  // Charge every line of every entry instead of only the cached ones.
  bool charge_absent_lines = false;
};

struct ReconcileReport {
  std::uint64_t entries = 0;
  std::uint64_t shootdown_events = 0;
  std::uint64_t tlb_shootdowns = 0;  // TLB entries invalidated
  std::uint64_t lines_invalidated = 0;
  std::uint64_t lines_written_back = 0;
  std::uint64_t renames = 0;
  std::uint64_t shootdown_cycles = 0;
  std::uint64_t invalidation_cycles = 0;
  std::uint64_t overhead_cycles = 0;
};

struct ReconcileContext {
  Translation& translation;
  FrameMap& frames;
  CacheHierarchy& caches;
  PhysicalMemory& memory;
  // Called after each rename so other per-ua state can follow.
  std::function<void(UnifiedPageId, UnifiedPageId)> on_rename;
};

// Shoots down and flushes every entry, then renames unified pages until
// every page sits in its canonical frame, and empties the table.
ReconcileReport reconcile(RemapTable& table, ReconcileContext& ctx,
                          const ReconcileCosts& costs);

}  // namespace duon
