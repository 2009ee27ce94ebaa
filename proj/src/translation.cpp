#include "duon/translation.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include "duon/rng.hpp"

namespace duon {

MemoryTarget resolve_memory_target(const RemapState& entry, std::uint32_t line,
                                   const BitVector& bitvec,
                                   const MemoryGeometry& geom,
                                   const InFlightLine* in_flight) {
  if (entry.ongoing_migration) {
    if (!in_flight)
      throw StateError("ongoing migration without controller state");
    if (bitvec.test(line)) return FrameAccess{in_flight->destination, line};
    if (in_flight->buffer_holds_line)
      return BufferAccess{in_flight->buffer, line};
    return StallUntilBuffered{};
  }
  if (entry.migrated) {
    if (!entry.ra) throw StateError("migrated entry without remapped address");
    return FrameAccess{*entry.ra, line};
  }
  return FrameAccess{default_frame_of(entry.ua, geom), line};
}

Translation::Translation(const MemoryGeometry& geom, FrameMap& frames,
                         TranslationConfig config)
    : geom_(geom),
      frames_(frames),
      config_(config),
      tlbs_(config.cores, Tlb(config.tlb_entries)),
      tcm_(std::span<Tlb>(tlbs_), config.tcm, config.remap_aware),
      ua_owner_(geom.total_pages(), kNoOwner) {
  if (config.cores == 0) throw std::invalid_argument("cores must be >= 1");
  const auto n = geom.total_pages();
  free_uas_.resize(n);
  // Back of the vector is allocated first.
  for (std::uint64_t i = 0; i < n; ++i) free_uas_[i] = n - 1 - i;
  if (config.alloc_order == AllocOrder::Shuffled && n > 1) {
    SplitMix64 rng(config.alloc_seed);
    for (std::uint64_t i = n - 1; i > 0; --i)
      std::swap(free_uas_[i], free_uas_[rng.below(i + 1)]);
  }
  free_pos_.assign(n, kNoOwner);
  for (std::uint64_t i = 0; i < n; ++i) free_pos_[free_uas_[i]] = i;
}

EptEntry& Translation::entry(VirtualPageId vpn) {
  auto it = ept_.find(vpn.vpn);
  if (it == ept_.end() || !it->second.valid) throw PageFault(vpn);
  return it->second;
}

const EptEntry* Translation::find(VirtualPageId vpn) const {
  auto it = ept_.find(vpn.vpn);
  return it == ept_.end() ? nullptr : &it->second;
}

std::optional<VirtualPageId> Translation::owner_of(UnifiedPageId ua) const {
  const auto o = ua_owner_.at(ua.ua);
  if (o == kNoOwner) return std::nullopt;
  return VirtualPageId{o};
}

std::optional<TlbEntry> Translation::tlb_lookup(std::uint32_t core,
                                                VirtualPageId vpn) {
  if (const auto* e = tlbs_.at(core).lookup(vpn); e && e->valid) {
    ++stats_.tlb_hits;
    return *e;
  }
  ++stats_.tlb_misses;
  return std::nullopt;
}

const EptEntry& Translation::ept_lookup(VirtualPageId vpn) {
  auto& e = entry(vpn);
  ++stats_.page_walks;
  return e;
}

Translation::CacheTranslation Translation::translate_for_cache(
    std::uint32_t core, VirtualPageId vpn) {
  if (auto hit = tlb_lookup(core, vpn)) return {hit->ua, true};
  const auto& e = ept_lookup(vpn);
  tlbs_[core].fill(TlbEntry::from(e));
  return {e.ua, false};
}

std::optional<TlbEntry> Translation::extended_tlb_probe(
    std::uint32_t core, VirtualPageId vpn) const {
  if (const auto* e = tlbs_.at(core).peek(vpn); e && e->valid) return *e;
  return std::nullopt;
}

std::uint64_t Translation::mark_migration_start(VirtualPageId vpn,
                                                MigrationRole role, bool pair) {
  if (!config_.remap_aware)
    throw ModeError("migration flags are not used in baseline mode");
  auto& e = entry(vpn);
  if (migrating_.contains(vpn.vpn))
    throw ConflictError("vpn " + std::to_string(vpn.vpn) +
                        " is already migrating");
  migrating_.insert(vpn.vpn);
  bool raise = false;
  if (role == MigrationRole::Victim) {
    // Displaced page: held while its lines pass through the hot buffer.
    raise = true;
    e.pair = pair;
    e.residency = Residency::Hot;
  } else {
    // Incoming page keeps serving from its source until lines move; only a
    // re-migration (its old remapped address is being replaced) raises the
    // ongoing flag.
    raise = e.migrated;
    e.pair = false;
    e.residency = Residency::Cold;
  }
  if (!raise) return 0;
  e.ongoing_migration = true;
  return tcm_.broadcast_start(e.ua);
}

void Translation::assign_remapped(VirtualPageId vpn, PhysicalFrame ra) {
  auto& e = entry(vpn);
  if (!migrating_.contains(vpn.vpn))
    throw StateError("vpn " + std::to_string(vpn.vpn) + " is not migrating");
  e.ra = ra;
}

std::uint64_t Translation::mark_migration_complete(VirtualPageId vpn,
                                                   PhysicalFrame ra,
                                                   bool pair) {
  if (!config_.remap_aware)
    throw ModeError("migration flags are not used in baseline mode");
  auto& e = entry(vpn);
  if (!migrating_.contains(vpn.vpn))
    throw StateError("vpn " + std::to_string(vpn.vpn) + " is not migrating");
  migrating_.erase(vpn.vpn);
  e.ra = ra;
  e.migrated = true;
  e.ongoing_migration = false;
  e.pair = pair;
  e.residency = Residency::Cold;
  return tcm_.broadcast_complete(e.ua, ra);
}

PageFaultResult Translation::handle_page_fault(VirtualPageId vpn,
                                               std::uint64_t now,
                                               const FaultHooks& hooks) {
  PageFaultResult result;
  if (auto it = ept_.find(vpn.vpn); it != ept_.end() && it->second.valid) {
    result.entry = it->second;
    return result;
  }
  ++stats_.page_faults;
  UnifiedPageId ua;
  if (!free_uas_.empty()) {
    ua = {free_uas_.back()};
    free_uas_.pop_back();
    free_pos_[ua.ua] = kNoOwner;
  } else {
    // Global LRU over resident pages that no migration job holds.
    const EptEntry* victim = nullptr;
    for (const auto& [v, e] : ept_) {
      if (migrating_.contains(v)) continue;
      if (hooks.pinned && hooks.pinned(e.ua)) continue;
      if (!victim || e.last_access < victim->last_access ||
          (e.last_access == victim->last_access && v < victim->vpn.vpn))
        victim = &e;
    }
    if (!victim) throw CapacityError("no evictable page for fault");
    const auto victim_vpn = victim->vpn;
    ua = victim->ua;
    result.evicted = victim_vpn;
    result.evicted_dirty = victim->dirty;
    for (auto& tlb : tlbs_)
      if (tlb.invalidate(victim_vpn)) ++result.tlb_invalidations;
    stats_.fault_tlb_invalidations += result.tlb_invalidations;
    if (hooks.invalidate_lines) result.lines = hooks.invalidate_lines(ua);
    if (hooks.save_page) hooks.save_page(victim_vpn, ua);
    ept_.erase(victim_vpn.vpn);
    ua_owner_[ua.ua] = kNoOwner;
  }
  EptEntry e;
  e.vpn = vpn;
  e.ua = ua;
  e.valid = true;
  e.last_access = now;
  // The new page lands in whatever frame the unified page currently owns.
  if (config_.remap_aware && !frames_.is_identity(ua)) {
    e.ra = frames_.frame_of(ua);
    e.migrated = true;
  }
  ept_[vpn.vpn] = e;
  ua_owner_[ua.ua] = vpn.vpn;
  if (hooks.load_page) hooks.load_page(vpn, ua);
  result.entry = e;
  result.allocated = true;
  return result;
}

void Translation::swap_unified(UnifiedPageId a, UnifiedPageId b) {
  if (config_.remap_aware)
    throw ModeError("unified pages are never renamed in remap-aware mode");
  const auto oa = ua_owner_.at(a.ua);
  const auto ob = ua_owner_.at(b.ua);
  if (oa != kNoOwner) ept_.at(oa).ua = b;
  if (ob != kNoOwner) ept_.at(ob).ua = a;
  ua_owner_[a.ua] = ob;
  ua_owner_[b.ua] = oa;
  // Keep the free list pointing at names that are still free.
  std::swap(free_pos_[a.ua], free_pos_[b.ua]);
  if (free_pos_[a.ua] != kNoOwner) free_uas_[free_pos_[a.ua]] = a.ua;
  if (free_pos_[b.ua] != kNoOwner) free_uas_[free_pos_[b.ua]] = b.ua;
}

void Translation::reserve_free(UnifiedPageId ua) {
  const auto pos = free_pos_.at(ua.ua);
  if (pos == kNoOwner)
    throw StateError("ua " + std::to_string(ua.ua) + " is not free");
  const auto last = free_uas_.back();
  free_uas_[pos] = last;
  free_pos_[last] = pos;
  free_uas_.pop_back();
  free_pos_[ua.ua] = kNoOwner;
}

void Translation::release_reserved(UnifiedPageId ua) {
  if (allocated(ua) || free_pos_.at(ua.ua) != kNoOwner)
    throw StateError("ua " + std::to_string(ua.ua) + " is not reserved");
  free_pos_[ua.ua] = free_uas_.size();
  free_uas_.push_back(ua.ua);
}

void Translation::touch(VirtualPageId vpn, std::uint64_t now) {
  auto it = ept_.find(vpn.vpn);
  if (it != ept_.end()) it->second.last_access = now;
}

void Translation::set_dirty(std::uint32_t core, VirtualPageId vpn) {
  entry(vpn).dirty = true;
  if (auto* t = tlbs_.at(core).find(vpn)) t->dirty = true;
}

std::vector<EptEntry> Translation::dump() const {
  std::vector<EptEntry> out;
  out.reserve(ept_.size());
  for (const auto& [v, e] : ept_) out.push_back(e);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.vpn < b.vpn;
  });
  return out;
}

std::string ept_csv_header() {
  return "vpn,ua,ra,migrated,ongoing,pair,residency";
}

std::string ept_csv_row(const EptEntry& e) {
  std::ostringstream os;
  os << e.vpn.vpn << ',' << e.ua.ua << ','
     << (e.ra ? to_string(*e.ra) : std::string("-")) << ','
     << int(e.migrated) << ',' << int(e.ongoing_migration) << ','
     << int(e.pair) << ',' << to_string(e.residency);
  return os.str();
}

}  // namespace duon
