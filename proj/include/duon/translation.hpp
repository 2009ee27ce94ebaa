#pragma once

// Extended page table plus per-core extended TLBs.
//
// Cache tags are always derived from the unified address; the remapped
// address is consulted only on the LLC-miss path (resolve_memory_target).

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "duon/address_space.hpp"
#include "duon/bit_vector.hpp"
#include "duon/page_table.hpp"
#include "duon/tlb_coherence.hpp"

namespace duon {

class PageFault : public std::runtime_error {
 public:
  explicit PageFault(VirtualPageId vpn)
      : std::runtime_error("page fault on vpn " + std::to_string(vpn.vpn)),
        vpn_(vpn) {}
  VirtualPageId vpn() const { return vpn_; }

 private:
  VirtualPageId vpn_;
};

class ConflictError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FrameAccess {
  PhysicalFrame frame;
  std::uint32_t line = 0;
  bool operator==(const FrameAccess&) const = default;
};

struct BufferAccess {
  BufferKind which = BufferKind::Hot;
  std::uint32_t line = 0;
  bool operator==(const BufferAccess&) const = default;
};

struct StallUntilBuffered {
  bool operator==(const StallUntilBuffered&) const = default;
};

using MemoryTarget = std::variant<FrameAccess, BufferAccess, StallUntilBuffered>;

// The remap fields shared by EPT and extended TLB entries.
struct RemapState {
  UnifiedPageId ua;
  std::optional<PhysicalFrame> ra;
  bool migrated = false;
  bool ongoing_migration = false;

  static RemapState of(const EptEntry& e) {
    return {e.ua, e.ra, e.migrated, e.ongoing_migration};
  }
  static RemapState of(const TlbEntry& e) {
    return {e.ua, e.ra, e.migrated, e.ongoing_migration};
  }
};

// What the migration controller knows about one line of an in-flight page.
struct InFlightLine {
  PhysicalFrame destination;
  BufferKind buffer = BufferKind::Hot;
  bool buffer_holds_line = false;
};

MemoryTarget resolve_memory_target(const RemapState& entry, std::uint32_t line,
                                   const BitVector& bitvec,
                                   const MemoryGeometry& geom,
                                   const InFlightLine* in_flight = nullptr);

enum class MigrationRole : std::uint8_t { Incoming, Victim };

enum class AllocOrder : std::uint8_t { Sequential, Shuffled };

struct TranslationConfig {
  std::uint32_t cores = 16;
  std::size_t tlb_entries = 4096;
  bool remap_aware = true;
  TcmConfig tcm;
  AllocOrder alloc_order = AllocOrder::Shuffled;
  std::uint64_t alloc_seed = 0;
};

struct LineInvalidation {
  std::uint64_t invalidated = 0;
  std::uint64_t written_back = 0;
};

// Callbacks that let the page-fault handler reach caches and page data.
struct FaultHooks {
  std::function<bool(UnifiedPageId)> pinned;
  std::function<LineInvalidation(UnifiedPageId)> invalidate_lines;
  std::function<void(VirtualPageId, UnifiedPageId)> save_page;
  std::function<void(VirtualPageId, UnifiedPageId)> load_page;
};

struct PageFaultResult {
  EptEntry entry;
  bool allocated = false;
  std::optional<VirtualPageId> evicted;
  bool evicted_dirty = false;
  std::uint64_t tlb_invalidations = 0;
  LineInvalidation lines;
};

struct TranslationStats {
  std::uint64_t tlb_hits = 0;
  std::uint64_t tlb_misses = 0;
  std::uint64_t page_walks = 0;
  std::uint64_t page_faults = 0;
  std::uint64_t fault_tlb_invalidations = 0;
};

class Translation {
 public:
  Translation(const MemoryGeometry& geom, FrameMap& frames,
              TranslationConfig config);

  Translation(const Translation&) = delete;
  Translation& operator=(const Translation&) = delete;

  std::optional<TlbEntry> tlb_lookup(std::uint32_t core, VirtualPageId vpn);
  const EptEntry& ept_lookup(VirtualPageId vpn);
  const EptEntry* find(VirtualPageId vpn) const;
  std::optional<VirtualPageId> owner_of(UnifiedPageId ua) const;

  struct CacheTranslation {
    UnifiedPageId ua;
    bool tlb_hit = false;
  };
  // Never returns a remapped address. Fills the TLB after a walk.
  CacheTranslation translate_for_cache(std::uint32_t core, VirtualPageId vpn);

  // The "second access" on an LLC miss. Does not touch recency.
  std::optional<TlbEntry> extended_tlb_probe(std::uint32_t core,
                                             VirtualPageId vpn) const;

  std::uint64_t mark_migration_start(VirtualPageId vpn, MigrationRole role,
                                     bool pair);
  // Makes the destination visible in the EPT ahead of completion.
  void assign_remapped(VirtualPageId vpn, PhysicalFrame ra);
  std::uint64_t mark_migration_complete(VirtualPageId vpn, PhysicalFrame ra,
                                        bool pair);
  bool migrating(VirtualPageId vpn) const {
    return migrating_.contains(vpn.vpn);
  }

  PageFaultResult handle_page_fault(VirtualPageId vpn, std::uint64_t now,
                                    const FaultHooks& hooks);

  // Baseline reconciliation: exchange the unified pages of their owners.
  // Either page may be unallocated.
  void swap_unified(UnifiedPageId a, UnifiedPageId b);

  void touch(VirtualPageId vpn, std::uint64_t now);
  void set_dirty(std::uint32_t core, VirtualPageId vpn);

  // Withholds a free unified page from allocation while a migration job
  // writes into its frame.
  void reserve_free(UnifiedPageId ua);
  void release_reserved(UnifiedPageId ua);

  std::uint64_t free_pages() const { return free_uas_.size(); }
  std::uint64_t resident_pages() const { return ept_.size(); }
  bool allocated(UnifiedPageId ua) const {
    return ua_owner_.at(ua.ua) != kNoOwner;
  }

  std::vector<EptEntry> dump() const;

  Tlb& tlb(std::uint32_t core) { return tlbs_.at(core); }
  const Tlb& tlb(std::uint32_t core) const { return tlbs_.at(core); }
  std::uint32_t cores() const { return static_cast<std::uint32_t>(tlbs_.size()); }
  TlbCoherence& coherence() { return tcm_; }
  const TlbCoherence& coherence() const { return tcm_; }
  const TranslationStats& stats() const { return stats_; }
  bool remap_aware() const { return config_.remap_aware; }
  const MemoryGeometry& geometry() const { return geom_; }

 private:
  static constexpr std::uint64_t kNoOwner = ~std::uint64_t{0};

  EptEntry& entry(VirtualPageId vpn);

  MemoryGeometry geom_;
  FrameMap& frames_;
  TranslationConfig config_;
  std::vector<Tlb> tlbs_;
  TlbCoherence tcm_;
  std::unordered_map<std::uint64_t, EptEntry> ept_;
  std::vector<std::uint64_t> ua_owner_;
  std::vector<std::uint64_t> free_uas_;  // popped from the back
  std::vector<std::uint64_t> free_pos_;  // ua -> index in free_uas_
  std::unordered_set<std::uint64_t> migrating_;
  TranslationStats stats_;
};

std::string ept_csv_header();
std::string ept_csv_row(const EptEntry& e);

}  // namespace duon
