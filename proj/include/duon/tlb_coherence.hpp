#pragma once

// TLB Coherence Module. In remap-aware mode it pushes the ongoing/complete
// migration state into every core's extended TLB; in baseline mode it models
// IPI-driven shootdowns instead.

#include <cstdint>
#include <span>
#include <stdexcept>

#include "duon/page_table.hpp"

namespace duon {

struct TcmConfig {
  std::uint64_t broadcast_cost = 10;
  std::uint64_t per_core_cost = 1;
  std::uint64_t shootdown_cost = 4000;
};

struct TcmStats {
  std::uint64_t broadcasts = 0;
  std::uint64_t entry_updates = 0;
  std::uint64_t acks = 0;
  std::uint64_t shootdown_events = 0;
  std::uint64_t shootdown_invalidations = 0;
  std::uint64_t shootdown_cycles = 0;
};

class ModeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class TlbCoherence {
 public:
  TlbCoherence(std::span<Tlb> tlbs, TcmConfig config, bool remap_aware);

  // Sets ongoing_migration on every holder of ua. Returns ack latency.
  std::uint64_t broadcast_start(UnifiedPageId ua);
  // Installs (ra, migrated=1, ongoing=0) on every holder of ua.
  std::uint64_t broadcast_complete(UnifiedPageId ua, PhysicalFrame ra);
  // Baseline only: invalidates ua in every TLB, charged as one event.
  std::uint64_t shootdown(UnifiedPageId ua);

  // True when no TLB holds ua with ongoing=1 and all holders carry ra.
  bool agrees(UnifiedPageId ua, PhysicalFrame ra) const;
  std::uint32_t holders(UnifiedPageId ua) const;

  std::uint64_t ack_latency() const {
    return config_.broadcast_cost + config_.per_core_cost * tlbs_.size();
  }

  const TcmStats& stats() const { return stats_; }
  const TcmConfig& config() const { return config_; }

 private:
  std::span<Tlb> tlbs_;
  TcmConfig config_;
  bool remap_aware_;
  TcmStats stats_;
};

}  // namespace duon
