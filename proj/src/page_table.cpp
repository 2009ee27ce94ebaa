#include "duon/page_table.hpp"

namespace duon {

const char* to_string(Residency r) {
  switch (r) {
    case Residency::None: return "-";
    case Residency::Cold: return "0";
    case Residency::Hot: return "1";
  }
  return "?";
}

Tlb::Tlb(std::size_t capacity) : capacity_(capacity) {
  nodes_.reserve(capacity);
  by_vpn_.reserve(capacity);
  by_ua_.reserve(capacity);
}

void Tlb::unlink(std::uint32_t i) {
  auto& n = nodes_[i];
  if (n.prev != kNil) nodes_[n.prev].next = n.next; else head_ = n.next;
  if (n.next != kNil) nodes_[n.next].prev = n.prev; else tail_ = n.prev;
  n.prev = n.next = kNil;
}

void Tlb::push_front(std::uint32_t i) {
  auto& n = nodes_[i];
  n.prev = kNil;
  n.next = head_;
  if (head_ != kNil) nodes_[head_].prev = i;
  head_ = i;
  if (tail_ == kNil) tail_ = i;
}

void Tlb::remove(std::uint32_t i) {
  unlink(i);
  by_vpn_.erase(nodes_[i].entry.vpn.vpn);
  by_ua_.erase(nodes_[i].entry.ua.ua);
  nodes_[i].entry = TlbEntry{};
  free_.push_back(i);
}

const TlbEntry* Tlb::lookup(VirtualPageId vpn) {
  auto it = by_vpn_.find(vpn.vpn);
  if (it == by_vpn_.end()) return nullptr;
  if (head_ != it->second) {
    unlink(it->second);
    push_front(it->second);
  }
  return &nodes_[it->second].entry;
}

const TlbEntry* Tlb::peek(VirtualPageId vpn) const {
  auto it = by_vpn_.find(vpn.vpn);
  return it == by_vpn_.end() ? nullptr : &nodes_[it->second].entry;
}

TlbEntry* Tlb::find(VirtualPageId vpn) {
  auto it = by_vpn_.find(vpn.vpn);
  return it == by_vpn_.end() ? nullptr : &nodes_[it->second].entry;
}

TlbEntry* Tlb::find_by_ua(UnifiedPageId ua) {
  auto it = by_ua_.find(ua.ua);
  return it == by_ua_.end() ? nullptr : &nodes_[it->second].entry;
}

const TlbEntry* Tlb::find_by_ua(UnifiedPageId ua) const {
  auto it = by_ua_.find(ua.ua);
  return it == by_ua_.end() ? nullptr : &nodes_[it->second].entry;
}

std::optional<VirtualPageId> Tlb::fill(const TlbEntry& entry) {
  if (capacity_ == 0) return std::nullopt;
  if (auto it = by_vpn_.find(entry.vpn.vpn); it != by_vpn_.end()) {
    auto i = it->second;
    by_ua_.erase(nodes_[i].entry.ua.ua);
    nodes_[i].entry = entry;
    by_ua_[entry.ua.ua] = i;
    unlink(i);
    push_front(i);
    return std::nullopt;
  }
  std::optional<VirtualPageId> evicted;
  if (by_vpn_.size() >= capacity_) {
    evicted = nodes_[tail_].entry.vpn;
    remove(tail_);
  }
  std::uint32_t i;
  if (!free_.empty()) {
    i = free_.back();
    free_.pop_back();
  } else {
    i = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({});
  }
  nodes_[i].entry = entry;
  by_vpn_[entry.vpn.vpn] = i;
  by_ua_[entry.ua.ua] = i;
  push_front(i);
  return evicted;
}

bool Tlb::invalidate(VirtualPageId vpn) {
  auto it = by_vpn_.find(vpn.vpn);
  if (it == by_vpn_.end()) return false;
  remove(it->second);
  return true;
}

void Tlb::clear() {
  nodes_.clear();
  free_.clear();
  by_vpn_.clear();
  by_ua_.clear();
  head_ = tail_ = kNil;
}

}  // namespace duon
