#include "duon/cache_model.hpp"

#include <stdexcept>
#include <string>

namespace duon {

void CacheConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("cache." + field + ": " + why);
  };
  if (line_size == 0) fail("line_size", "must be positive");
  if (l1_assoc == 0) fail("l1_assoc", "must be positive");
  if (llc_assoc == 0) fail("llc_assoc", "must be positive");
  if (l1_size == 0 || l1_size % (std::uint64_t{l1_assoc} * line_size) != 0)
    fail("l1_size", "must be a positive multiple of l1_assoc * line_size");
  if (llc_size == 0 || llc_size % (std::uint64_t{llc_assoc} * line_size) != 0)
    fail("llc_size", "must be a positive multiple of llc_assoc * line_size");
}

SetAssocCache::SetAssocCache(std::uint64_t size, std::uint32_t assoc,
                             std::uint32_t line_size)
    : sets_(size / (std::uint64_t{assoc} * line_size)),
      assoc_(assoc),
      tags_(sets_ * assoc, 0),
      stamps_(sets_ * assoc, 0),
      valid_(sets_ * assoc, 0) {}

std::optional<std::size_t> SetAssocCache::probe(std::uint64_t line_addr,
                                                bool touch) {
  const std::size_t base = (line_addr % sets_) * assoc_;
  for (std::size_t w = base; w < base + assoc_; ++w) {
    if (valid_[w] && tags_[w] == line_addr) {
      if (touch) stamps_[w] = ++clock_;
      return w;
    }
  }
  return std::nullopt;
}

std::size_t SetAssocCache::install(std::uint64_t line_addr,
                                   std::optional<std::uint64_t>& displaced) {
  displaced.reset();
  const std::size_t base = (line_addr % sets_) * assoc_;
  std::size_t slot = base;
  bool found_free = false;
  for (std::size_t w = base; w < base + assoc_; ++w) {
    if (!valid_[w]) {
      slot = w;
      found_free = true;
      break;
    }
    if (stamps_[w] < stamps_[slot]) slot = w;
  }
  if (!found_free) displaced = tags_[slot];
  tags_[slot] = line_addr;
  valid_[slot] = 1;
  stamps_[slot] = ++clock_;
  return slot;
}

std::optional<std::size_t> SetAssocCache::find(std::uint64_t line_addr) const {
  const std::size_t base = (line_addr % sets_) * assoc_;
  for (std::size_t w = base; w < base + assoc_; ++w)
    if (valid_[w] && tags_[w] == line_addr) return w;
  return std::nullopt;
}

bool SetAssocCache::has(std::uint64_t line_addr) const {
  return find(line_addr).has_value();
}

bool SetAssocCache::remove(std::uint64_t line_addr) {
  if (auto w = probe(line_addr, false)) {
    valid_[*w] = 0;
    return true;
  }
  return false;
}

CacheHierarchy::CacheHierarchy(const CacheConfig& config, std::uint32_t cores,
                               std::uint32_t lines_per_page)
    : config_(config),
      lines_per_page_(lines_per_page),
      llc_(config.llc_size, config.llc_assoc, config.line_size),
      core_stats_(cores) {
  config_.validate();
  l1_.reserve(cores);
  for (std::uint32_t c = 0; c < cores; ++c)
    l1_.emplace_back(config.l1_size, config.l1_assoc, config.line_size);
  llc_values_.assign(llc_.slots(), 0);
  llc_dirty_.assign(llc_.slots(), 0);
}

CacheAccess CacheHierarchy::access(std::uint32_t core, std::uint64_t line_addr) {
  auto& cs = core_stats_[core];
  if (l1_[core].probe(line_addr, true)) {
    ++stats_.l1_hits;
    ++cs.l1_hits;
    return {AccessLevel::L1Hit, config_.l1_latency};
  }
  ++stats_.l1_misses;
  ++cs.l1_misses;
  const std::uint64_t latency =
      std::uint64_t{config_.l1_latency} + config_.llc_latency;
  if (llc_.probe(line_addr, true)) {
    ++stats_.llc_hits;
    ++cs.llc_hits;
    std::optional<std::uint64_t> displaced;
    l1_[core].install(line_addr, displaced);
    return {AccessLevel::LlcHit, latency};
  }
  ++stats_.llc_misses;
  ++cs.llc_misses;
  return {AccessLevel::Miss, latency};
}

std::optional<EvictedLine> CacheHierarchy::fill(std::uint32_t core,
                                                std::uint64_t line_addr,
                                                std::uint64_t value) {
  std::optional<EvictedLine> evicted;
  std::optional<std::uint64_t> displaced;
  std::size_t slot;
  if (auto w = llc_.probe(line_addr, true)) {
    slot = *w;
  } else {
    slot = llc_.install(line_addr, displaced);
    // The slot still holds the displaced line's data and dirty bit.
    if (displaced) {
      evicted = EvictedLine{*displaced, llc_values_[slot], llc_dirty_[slot] != 0};
      if (evicted->dirty) ++stats_.llc_writebacks;
      for (auto& l1 : l1_)
        if (l1.remove(*displaced)) ++stats_.back_invalidations;
    }
    llc_dirty_[slot] = 0;
  }
  llc_values_[slot] = value;
  if (!l1_[core].probe(line_addr, true)) {
    std::optional<std::uint64_t> l1_displaced;
    l1_[core].install(line_addr, l1_displaced);
  }
  return evicted;
}

std::uint64_t CacheHierarchy::read(std::uint64_t line_addr) {
  auto w = llc_.probe(line_addr, false);
  if (!w) throw std::logic_error("read of line absent from LLC");
  return llc_values_[*w];
}

void CacheHierarchy::write(std::uint64_t line_addr, std::uint64_t value) {
  auto w = llc_.probe(line_addr, false);
  if (!w) throw std::logic_error("write of line absent from LLC");
  llc_values_[*w] = value;
  llc_dirty_[*w] = 1;
}

bool CacheHierarchy::contains(std::uint64_t line_addr) const {
  return llc_.has(line_addr);
}

std::optional<std::uint64_t> CacheHierarchy::peek(std::uint64_t line_addr) const {
  if (auto w = llc_.find(line_addr)) return llc_values_[*w];
  return std::nullopt;
}

bool CacheHierarchy::in_l1(std::uint32_t core, std::uint64_t line_addr) const {
  return l1_.at(core).has(line_addr);
}

std::pair<std::uint64_t, std::uint64_t> CacheHierarchy::invalidate_page_lines(
    UnifiedPageId ua,
    const std::function<void(std::uint64_t, std::uint64_t)>& writeback) {
  std::uint64_t invalidated = 0;
  std::uint64_t written = 0;
  for (std::uint32_t off = 0; off < lines_per_page_; ++off) {
    const auto addr = line_addr(ua, off);
    for (auto& l1 : l1_) l1.remove(addr);
    if (auto w = llc_.probe(addr, false)) {
      if (llc_dirty_[*w]) {
        if (writeback) writeback(addr, llc_values_[*w]);
        ++written;
      }
      llc_.remove(addr);
      llc_dirty_[*w] = 0;
      ++invalidated;
    }
  }
  return {invalidated, written};
}

bool CacheHierarchy::inclusive() const {
  for (const auto& l1 : l1_)
    for (std::size_t s = 0; s < l1.slots(); ++s)
      if (l1.valid_at(s) && !contains(l1.tag_at(s))) return false;
  return true;
}

}  // namespace duon
