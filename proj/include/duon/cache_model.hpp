#pragma once

// Private L1 data caches plus a shared inclusive LLC, all tagged by
// unified-address line numbers (ua * lines_per_page + offset).
//
// L1s are write-through into the LLC and keep tags only; line data lives in
// the LLC, which is write-back. Evicting an LLC line back-invalidates every
// L1 copy.

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "duon/address_space.hpp"

namespace duon {

struct CacheConfig {
  std::uint64_t l1_size = 32 * 1024;
  std::uint32_t l1_assoc = 4;
  std::uint32_t l1_latency = 2;
  std::uint64_t llc_size = 16 * 1024 * 1024;
  std::uint32_t llc_assoc = 16;
  std::uint32_t llc_latency = 21;
  std::uint32_t line_size = 64;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

enum class AccessLevel : std::uint8_t { L1Hit, LlcHit, Miss };

struct CacheAccess {
  AccessLevel level = AccessLevel::Miss;
  std::uint64_t latency = 0;
};

struct EvictedLine {
  std::uint64_t line_addr = 0;
  std::uint64_t value = 0;
  bool dirty = false;
};

struct CacheStats {
  std::uint64_t l1_hits = 0;
  std::uint64_t l1_misses = 0;
  std::uint64_t llc_hits = 0;
  std::uint64_t llc_misses = 0;
  std::uint64_t llc_writebacks = 0;
  std::uint64_t back_invalidations = 0;
};

class SetAssocCache {
 public:
  SetAssocCache(std::uint64_t size, std::uint32_t assoc,
                std::uint32_t line_size);

  // Index of the way holding line_addr, refreshing recency when found.
  std::optional<std::size_t> probe(std::uint64_t line_addr, bool touch);
  // Installs line_addr; returns the slot used and the displaced tag if any.
  std::size_t install(std::uint64_t line_addr,
                      std::optional<std::uint64_t>& displaced);
  bool remove(std::uint64_t line_addr);
  bool has(std::uint64_t line_addr) const;
  std::optional<std::size_t> find(std::uint64_t line_addr) const;

  std::uint64_t tag_at(std::size_t slot) const { return tags_[slot]; }
  bool valid_at(std::size_t slot) const { return valid_[slot]; }
  std::size_t slots() const { return tags_.size(); }
  std::uint64_t sets() const { return sets_; }

 private:
  std::uint64_t sets_;
  std::uint32_t assoc_;
  std::vector<std::uint64_t> tags_;
  std::vector<std::uint64_t> stamps_;
  std::vector<std::uint8_t> valid_;
  std::uint64_t clock_ = 0;
};

class CacheHierarchy {
 public:
  CacheHierarchy(const CacheConfig& config, std::uint32_t cores,
                 std::uint32_t lines_per_page);

  // Lookup with LRU update. An LLC hit fills the requesting L1. A miss
  // leaves the caches untouched; the caller fetches and calls fill().
  CacheAccess access(std::uint32_t core, std::uint64_t line_addr);

  // Installs a fetched line in the LLC and the core's L1. Returns the LLC
  // line displaced, if any (dirty ones must be written back by the caller).
  std::optional<EvictedLine> fill(std::uint32_t core, std::uint64_t line_addr,
                                  std::uint64_t value);

  // Data of a line present in the LLC.
  std::uint64_t read(std::uint64_t line_addr);
  void write(std::uint64_t line_addr, std::uint64_t value);
  bool contains(std::uint64_t line_addr) const;
  std::optional<std::uint64_t> peek(std::uint64_t line_addr) const;
  bool in_l1(std::uint32_t core, std::uint64_t line_addr) const;

  // Removes every line of the page from all levels; dirty lines go through
  // writeback first. Returns (lines invalidated in the LLC, lines written).
  std::pair<std::uint64_t, std::uint64_t> invalidate_page_lines(
      UnifiedPageId ua,
      const std::function<void(std::uint64_t line_addr, std::uint64_t value)>&
          writeback);

  std::uint64_t line_addr(UnifiedPageId ua, std::uint32_t offset) const {
    return ua.ua * lines_per_page_ + offset;
  }
  UnifiedPageId page_of(std::uint64_t line_addr) const {
    return {line_addr / lines_per_page_};
  }
  std::uint32_t offset_of(std::uint64_t line_addr) const {
    return static_cast<std::uint32_t>(line_addr % lines_per_page_);
  }

  // Every valid L1 line is present in the LLC.
  bool inclusive() const;

  const CacheStats& stats() const { return stats_; }
  const CacheStats& core_stats(std::uint32_t core) const {
    return core_stats_.at(core);
  }
  const CacheConfig& config() const { return config_; }

 private:
  CacheConfig config_;
  std::uint32_t lines_per_page_;
  std::vector<SetAssocCache> l1_;
  SetAssocCache llc_;
  std::vector<std::uint64_t> llc_values_;
  std::vector<std::uint8_t> llc_dirty_;
  CacheStats stats_;
  std::vector<CacheStats> core_stats_;
};

}  // namespace duon
