#include "duon/policy.hpp"

#include <algorithm>
#include <stdexcept>

namespace duon {

const char* to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::NoMigration: return "NoMigration";
    case PolicyKind::Threshold: return "Threshold";
    case PolicyKind::Epoch: return "Epoch";
    case PolicyKind::AdaptThold: return "AdaptThold";
  }
  return "?";
}

PolicyKind parse_policy_kind(const std::string& s) {
  for (auto k : {PolicyKind::NoMigration, PolicyKind::Threshold,
                 PolicyKind::Epoch, PolicyKind::AdaptThold})
    if (s == to_string(k)) return k;
  throw std::invalid_argument(
      "policy.kind: expected NoMigration, Threshold, Epoch or AdaptThold, got '" +
      s + "'");
}

void PolicyConfig::validate() const {
  if (threshold < 1)
    throw std::invalid_argument("policy.threshold: must be >= 1");
  if (!(epoch_us > 0))
    throw std::invalid_argument("policy.epoch_us: must be positive");
  if (adapt_period < 1)
    throw std::invalid_argument("policy.adapt_period: must be >= 1");
  if (adapt_min < 1 || adapt_min > adapt_max)
    throw std::invalid_argument(
        "policy.adapt_min: must satisfy 1 <= adapt_min <= adapt_max");
  if (!(adapt_dead_zone >= 0))
    throw std::invalid_argument("policy.adapt_dead_zone: must be >= 0");
}

AccessCounters::AccessCounters(std::uint64_t total_pages)
    : count_(total_pages, 0), last_(total_pages, 0), in_touched_(total_pages, 0) {}

std::uint64_t AccessCounters::record(UnifiedPageId ua, std::uint64_t now) {
  auto& c = count_.at(ua.ua);
  last_[ua.ua] = now;
  if (!in_touched_[ua.ua]) {
    in_touched_[ua.ua] = 1;
    touched_.push_back(ua.ua);
  }
  return ++c;
}

void AccessCounters::reset_all() {
  for (auto u : touched_) {
    count_[u] = 0;
    in_touched_[u] = 0;
  }
  touched_.clear();
}

void AccessCounters::swap(UnifiedPageId a, UnifiedPageId b) {
  std::swap(count_.at(a.ua), count_.at(b.ua));
  std::swap(last_[a.ua], last_[b.ua]);
  for (auto u : {a.ua, b.ua})
    if (!in_touched_[u]) {
      in_touched_[u] = 1;
      touched_.push_back(u);
    }
}

std::vector<UnifiedPageId> AccessCounters::nonzero() const {
  std::vector<UnifiedPageId> out;
  for (auto u : touched_)
    if (count_[u] != 0) out.push_back({u});
  std::sort(out.begin(), out.end());
  return out;
}

MigrationPolicy::MigrationPolicy(const PolicyConfig& config,
                                 std::uint64_t total_pages)
    : config_(config), threshold_(config.threshold), counters_(total_pages) {
  config_.validate();
  if (config_.kind == PolicyKind::AdaptThold)
    threshold_ = std::clamp(threshold_, config_.adapt_min, config_.adapt_max);
}

std::optional<UnifiedPageId> MigrationPolicy::record_access(UnifiedPageId ua,
                                                            bool,
                                                            std::uint64_t now,
                                                            Tier tier) {
  const auto n = counters_.record(ua, now);
  if (config_.kind != PolicyKind::Threshold &&
      config_.kind != PolicyKind::AdaptThold)
    return std::nullopt;
  if (n == threshold_ && tier == Tier::Slow) return ua;
  return std::nullopt;
}

std::vector<UnifiedPageId> MigrationPolicy::epoch_boundary(
    std::uint64_t, const TierOf& tier_of) {
  if (config_.kind != PolicyKind::Epoch) return {};
  std::vector<std::pair<std::uint64_t, UnifiedPageId>> hot;
  for (auto ua : counters_.nonzero()) {
    const auto c = counters_.count(ua);
    if (c >= threshold_ && tier_of(ua) == Tier::Slow) hot.emplace_back(c, ua);
  }
  std::sort(hot.begin(), hot.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  counters_.reset_all();
  std::vector<UnifiedPageId> out;
  out.reserve(hot.size());
  for (const auto& h : hot) out.push_back(h.second);
  return out;
}

std::uint64_t MigrationPolicy::adapt(double window_ipc) {
  if (config_.kind != PolicyKind::AdaptThold) return threshold_;
  const auto previous = previous_ipc_;
  previous_ipc_ = window_ipc;
  if (!previous || *previous <= 0) return threshold_;
  const double change = (window_ipc - *previous) / *previous;
  auto next = threshold_;
  if (change > config_.adapt_dead_zone)
    next = threshold_ / 2;
  else if (change < -config_.adapt_dead_zone)
    next = threshold_ * 2;
  next = std::clamp(next, config_.adapt_min, config_.adapt_max);
  if (next != threshold_) {
    threshold_ = next;
    // Counts gathered under the old threshold would never hit the new one
    // exactly.
    counters_.reset_all();
  }
  return threshold_;
}

RemapTable::RemapTable(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0)
    throw std::invalid_argument("baseline.remap_capacity: must be positive");
}

void RemapTable::insert(UnifiedPageId ua) {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), ua.ua);
  if (it != entries_.end() && *it == ua.ua) return;
  if (entries_.size() >= capacity_) throw CapacityError("remap table full");
  entries_.insert(it, ua.ua);
}

bool RemapTable::contains(UnifiedPageId ua) const {
  return std::binary_search(entries_.begin(), entries_.end(), ua.ua);
}

bool RemapTable::can_insert(std::size_t n) const {
  return entries_.size() + n <= capacity_;
}

std::vector<UnifiedPageId> RemapTable::keys() const {
  std::vector<UnifiedPageId> out;
  out.reserve(entries_.size());
  for (auto u : entries_) out.push_back({u});
  return out;
}

ReconcileReport reconcile(RemapTable& table, ReconcileContext& ctx,
                          const ReconcileCosts& costs) {
  if (ctx.translation.remap_aware())
    throw ModeError("reconciliation runs only in baseline mode");
  ReconcileReport rep;
  const auto keys = table.keys();
  rep.entries = keys.size();
  const auto& geom = ctx.frames.geometry();
  auto& tcm = ctx.translation.coherence();
  const std::uint32_t lpp = ctx.memory.lines_per_page();
  for (auto ua : keys) {
    const auto before = tcm.stats().shootdown_invalidations;
    rep.shootdown_cycles += tcm.shootdown(ua);
    ++rep.shootdown_events;
    rep.tlb_shootdowns += tcm.stats().shootdown_invalidations - before;
    const auto [inv, wb] = ctx.caches.invalidate_page_lines(
        ua, [&](std::uint64_t addr, std::uint64_t value) {
          const auto page = ctx.caches.page_of(addr);
          ctx.memory.write(ctx.frames.frame_of(page), ctx.caches.offset_of(addr),
                           value);
        });
    rep.lines_invalidated += inv;
    rep.lines_written_back += wb;
    rep.invalidation_cycles +=
        costs.line_invalidate_cost * (costs.charge_absent_lines ? lpp : inv);
  }
  for (auto ua : keys) {
    while (!ctx.frames.is_identity(ua)) {
      const auto target = unified_of(ctx.frames.frame_of(ua), geom);
      if (ctx.translation.allocated(target) && !table.contains(target))
        throw StateError("unrecorded remapped page " + std::to_string(target.ua));
      ctx.translation.swap_unified(ua, target);
      ctx.frames.swap(ua, target);
      if (ctx.on_rename) ctx.on_rename(ua, target);
      ++rep.renames;
    }
  }
  table.clear();
  rep.overhead_cycles = rep.shootdown_cycles + rep.invalidation_cycles;
  return rep;
}

}  // namespace duon
