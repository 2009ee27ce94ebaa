#include "duon/tlb_coherence.hpp"

namespace duon {

TlbCoherence::TlbCoherence(std::span<Tlb> tlbs, TcmConfig config,
                           bool remap_aware)
    : tlbs_(tlbs), config_(config), remap_aware_(remap_aware) {}

std::uint64_t TlbCoherence::broadcast_start(UnifiedPageId ua) {
  if (!remap_aware_) throw ModeError("TCM broadcast in baseline mode");
  ++stats_.broadcasts;
  for (auto& tlb : tlbs_) {
    if (auto* e = tlb.find_by_ua(ua); e && e->valid && !e->ongoing_migration) {
      e->ongoing_migration = true;
      ++stats_.entry_updates;
    }
    ++stats_.acks;
  }
  return ack_latency();
}

std::uint64_t TlbCoherence::broadcast_complete(UnifiedPageId ua,
                                               PhysicalFrame ra) {
  if (!remap_aware_) throw ModeError("TCM broadcast in baseline mode");
  ++stats_.broadcasts;
  for (auto& tlb : tlbs_) {
    if (auto* e = tlb.find_by_ua(ua); e && e->valid) {
      if (e->ra != ra || !e->migrated || e->ongoing_migration) {
        e->ra = ra;
        e->migrated = true;
        e->ongoing_migration = false;
        ++stats_.entry_updates;
      }
    }
    ++stats_.acks;
  }
  return ack_latency();
}

std::uint64_t TlbCoherence::shootdown(UnifiedPageId ua) {
  if (remap_aware_) throw ModeError("TLB shootdown requested in remap-aware mode");
  ++stats_.shootdown_events;
  for (auto& tlb : tlbs_) {
    if (auto* e = tlb.find_by_ua(ua)) {
      tlb.invalidate(e->vpn);
      ++stats_.shootdown_invalidations;
    }
  }
  stats_.shootdown_cycles += config_.shootdown_cost;
  return config_.shootdown_cost;
}

bool TlbCoherence::agrees(UnifiedPageId ua, PhysicalFrame ra) const {
  for (const auto& tlb : tlbs_) {
    if (const auto* e = tlb.find_by_ua(ua); e && e->valid) {
      if (e->ongoing_migration || !e->migrated || e->ra != ra) return false;
    }
  }
  return true;
}

std::uint32_t TlbCoherence::holders(UnifiedPageId ua) const {
  std::uint32_t n = 0;
  for (const auto& tlb : tlbs_)
    if (tlb.find_by_ua(ua)) ++n;
  return n;
}

}  // namespace duon
