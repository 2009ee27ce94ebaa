#pragma once

// Extended page table and extended TLB entry types, plus the per-core
// fully associative LRU TLB.

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "duon/address_space.hpp"

namespace duon {

// Buffer residency flag. None renders as "-" (no migration has touched the
// entry yet); Cold is 0 and Hot is 1.
enum class Residency : std::uint8_t { None, Cold, Hot };

enum class BufferKind : std::uint8_t { Hot, Cold };

const char* to_string(Residency r);

struct EptEntry {
  VirtualPageId vpn;
  UnifiedPageId ua;
  bool valid = false;
  bool dirty = false;
  std::optional<PhysicalFrame> ra;
  bool migrated = false;
  bool ongoing_migration = false;
  bool pair = false;
  Residency residency = Residency::None;
  std::uint64_t last_access = 0;
};

struct TlbEntry {
  VirtualPageId vpn;
  UnifiedPageId ua;
  bool valid = false;
  bool dirty = false;
  std::optional<PhysicalFrame> ra;
  bool migrated = false;
  bool ongoing_migration = false;

  static TlbEntry from(const EptEntry& e) {
    return {e.vpn, e.ua, e.valid, e.dirty, e.ra, e.migrated,
            e.ongoing_migration};
  }
};

class Tlb {
 public:
  explicit Tlb(std::size_t capacity);

  // Refreshes recency on hit.
  const TlbEntry* lookup(VirtualPageId vpn);
  const TlbEntry* peek(VirtualPageId vpn) const;
  TlbEntry* find_by_ua(UnifiedPageId ua);
  const TlbEntry* find_by_ua(UnifiedPageId ua) const;
  TlbEntry* find(VirtualPageId vpn);

  // Inserts or replaces; evicts the least recently used entry when full.
  // Returns the evicted vpn, if any.
  std::optional<VirtualPageId> fill(const TlbEntry& entry);
  bool invalidate(VirtualPageId vpn);
  void clear();

  std::size_t size() const { return by_vpn_.size(); }
  std::size_t capacity() const { return capacity_; }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (auto i = head_; i != kNil; i = nodes_[i].next) fn(nodes_[i].entry);
  }

 private:
  static constexpr std::uint32_t kNil = 0xffffffffu;
  struct Node {
    TlbEntry entry;
    std::uint32_t prev = kNil;
    std::uint32_t next = kNil;
  };

  void unlink(std::uint32_t i);
  void push_front(std::uint32_t i);
  void remove(std::uint32_t i);

  std::size_t capacity_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> free_;
  std::uint32_t head_ = kNil;  // most recent
  std::uint32_t tail_ = kNil;  // least recent
  std::unordered_map<std::uint64_t, std::uint32_t> by_vpn_;
  std::unordered_map<std::uint64_t, std::uint32_t> by_ua_;
};

}  // namespace duon
