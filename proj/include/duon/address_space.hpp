#pragma once

// Flat unified address space shared by the fast and slow memory tiers.
//
// Unified pages [0, fast_pages) map by default onto fast frames, the rest
// onto slow frames in order. FrameMap tracks where each unified page's data
// actually lives once migrations start permuting frames; PhysicalMemory holds
// one 64-bit value per cache line of every frame.

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace duon {

enum class Tier : std::uint8_t { Fast, Slow };

const char* to_string(Tier tier);

struct UnifiedPageId {
  std::uint64_t ua = 0;
  auto operator<=>(const UnifiedPageId&) const = default;
};

struct VirtualPageId {
  std::uint64_t vpn = 0;
  auto operator<=>(const VirtualPageId&) const = default;
};

struct PhysicalFrame {
  Tier tier = Tier::Fast;
  std::uint64_t frame = 0;
  auto operator<=>(const PhysicalFrame&) const = default;
};

std::string to_string(const PhysicalFrame& f);

class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

unsigned ceil_log2(std::uint64_t n);

class MemoryGeometry {
 public:
  MemoryGeometry() = default;
  // Capacities may be zero (used by the storage calculator); simulation
  // requires both tiers non-empty, see require_nonempty().
  MemoryGeometry(std::uint64_t fast_capacity, std::uint64_t slow_capacity,
                 std::uint64_t page_size = 4096);

  std::uint64_t fast_capacity() const { return fast_capacity_; }
  std::uint64_t slow_capacity() const { return slow_capacity_; }
  std::uint64_t page_size() const { return page_size_; }
  std::uint64_t fast_pages() const { return fast_capacity_ / page_size_; }
  std::uint64_t slow_pages() const { return slow_capacity_ / page_size_; }
  std::uint64_t total_pages() const { return fast_pages() + slow_pages(); }
  unsigned ra_bits_fast() const { return ceil_log2(fast_pages()); }
  unsigned ra_bits_slow() const { return ceil_log2(slow_pages()); }

  bool contains(UnifiedPageId ua) const { return ua.ua < total_pages(); }
  std::uint64_t pages_in(Tier t) const {
    return t == Tier::Fast ? fast_pages() : slow_pages();
  }

  void require_nonempty() const;

 private:
  std::uint64_t fast_capacity_ = 0;
  std::uint64_t slow_capacity_ = 0;
  std::uint64_t page_size_ = 4096;
};

PhysicalFrame default_frame_of(UnifiedPageId ua, const MemoryGeometry& geom);
UnifiedPageId unified_of(PhysicalFrame frame, const MemoryGeometry& geom);

struct OverheadReport {
  std::uint64_t ept_extension_bytes = 0;
  std::uint64_t tlb_extension_bytes = 0;
  double ept_fraction_of_memory = 0.0;
  // 12.5 KB against the 30.5 KB conventional TLB can be read either way.
  double tlb_ratio_vs_conventional = 0.0;
  double tlb_ratio_of_extended_total = 0.0;
};

// Extra EPT bits per page: remapped address sized for the page's own tier
// plus migrated, ongoing, pair and buffer-residency flags.
std::uint64_t ept_storage_overhead(const MemoryGeometry& geom);

// Extra TLB bits per entry: slow-tier remapped address plus migrated,
// ongoing and remapped-address-valid bits.
std::uint64_t tlb_storage_overhead(std::uint64_t entries,
                                   const MemoryGeometry& geom);

inline constexpr std::uint64_t kConventionalTlbBytes = 31232;  // 30.5 KB

OverheadReport overhead_report(const MemoryGeometry& geom,
                               std::uint64_t tlb_entries);

// Permutation of frames over unified pages. Every unified page, allocated
// or not, owns exactly one frame at all times.
class FrameMap {
 public:
  explicit FrameMap(const MemoryGeometry& geom);

  PhysicalFrame frame_of(UnifiedPageId ua) const;
  UnifiedPageId owner_of(PhysicalFrame frame) const;
  bool is_identity(UnifiedPageId ua) const;

  // Exchanges the frames owned by two unified pages.
  void swap(UnifiedPageId a, UnifiedPageId b);

  const MemoryGeometry& geometry() const { return geom_; }

 private:
  std::size_t frame_index(PhysicalFrame f) const;

  MemoryGeometry geom_;
  std::vector<std::uint64_t> frame_of_;  // ua -> global frame index
  std::vector<std::uint64_t> owner_of_;  // global frame index -> ua
};

// Line-granular backing contents of both tiers. Lines never written read 0.
class PhysicalMemory {
 public:
  PhysicalMemory(const MemoryGeometry& geom, std::uint32_t lines_per_page);

  std::uint64_t read(PhysicalFrame f, std::uint32_t line) const;
  void write(PhysicalFrame f, std::uint32_t line, std::uint64_t value);

  std::uint32_t lines_per_page() const { return lines_per_page_; }

 private:
  std::uint64_t key(PhysicalFrame f, std::uint32_t line) const;

  MemoryGeometry geom_;
  std::uint32_t lines_per_page_;
  bool dense_;
  std::vector<std::uint64_t> dense_data_;
  std::unordered_map<std::uint64_t, std::uint64_t> sparse_data_;
};

}  // namespace duon
