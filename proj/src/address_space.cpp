#include "duon/address_space.hpp"

#include <bit>

namespace duon {

const char* to_string(Tier tier) { return tier == Tier::Fast ? "F" : "S"; }

std::string to_string(const PhysicalFrame& f) {
  return std::string(to_string(f.tier)) + std::to_string(f.frame);
}

unsigned ceil_log2(std::uint64_t n) {
  if (n <= 1) return 0;
  return 64u - static_cast<unsigned>(std::countl_zero(n - 1));
}

MemoryGeometry::MemoryGeometry(std::uint64_t fast_capacity,
                               std::uint64_t slow_capacity,
                               std::uint64_t page_size)
    : fast_capacity_(fast_capacity),
      slow_capacity_(slow_capacity),
      page_size_(page_size) {
  if (page_size_ == 0) throw GeometryError("page_size must be positive");
  if (fast_capacity_ % page_size_ != 0)
    throw GeometryError("fast_capacity is not a multiple of page_size");
  if (slow_capacity_ % page_size_ != 0)
    throw GeometryError("slow_capacity is not a multiple of page_size");
}

void MemoryGeometry::require_nonempty() const {
  if (fast_pages() == 0) throw GeometryError("fast tier has no pages");
  if (slow_pages() == 0) throw GeometryError("slow tier has no pages");
}

PhysicalFrame default_frame_of(UnifiedPageId ua, const MemoryGeometry& geom) {
  if (!geom.contains(ua))
    throw RangeError("unified page " + std::to_string(ua.ua) +
                     " outside geometry");
  if (ua.ua < geom.fast_pages()) return {Tier::Fast, ua.ua};
  return {Tier::Slow, ua.ua - geom.fast_pages()};
}

UnifiedPageId unified_of(PhysicalFrame frame, const MemoryGeometry& geom) {
  if (frame.frame >= geom.pages_in(frame.tier))
    throw RangeError("frame " + to_string(frame) + " outside geometry");
  if (frame.tier == Tier::Fast) return {frame.frame};
  return {geom.fast_pages() + frame.frame};
}

std::uint64_t ept_storage_overhead(const MemoryGeometry& geom) {
  const std::uint64_t bits =
      geom.fast_pages() * (geom.ra_bits_fast() + 4) +
      geom.slow_pages() * (geom.ra_bits_slow() + 4);
  return bits / 8;
}

std::uint64_t tlb_storage_overhead(std::uint64_t entries,
                                   const MemoryGeometry& geom) {
  return entries * (geom.ra_bits_slow() + 3) / 8;
}

OverheadReport overhead_report(const MemoryGeometry& geom,
                               std::uint64_t tlb_entries) {
  OverheadReport r;
  r.ept_extension_bytes = ept_storage_overhead(geom);
  r.tlb_extension_bytes = tlb_storage_overhead(tlb_entries, geom);
  const auto total = geom.fast_capacity() + geom.slow_capacity();
  r.ept_fraction_of_memory =
      total == 0 ? 0.0
                 : static_cast<double>(r.ept_extension_bytes) /
                       static_cast<double>(total);
  // Conventional TLB size scales with entry count from the 4096-entry figure.
  const double conventional =
      static_cast<double>(kConventionalTlbBytes) *
      static_cast<double>(tlb_entries) / 4096.0;
  const double ext = static_cast<double>(r.tlb_extension_bytes);
  r.tlb_ratio_vs_conventional = conventional > 0 ? ext / conventional : 0.0;
  r.tlb_ratio_of_extended_total =
      conventional + ext > 0 ? ext / (conventional + ext) : 0.0;
  return r;
}

FrameMap::FrameMap(const MemoryGeometry& geom)
    : geom_(geom),
      frame_of_(geom.total_pages()),
      owner_of_(geom.total_pages()) {
  for (std::uint64_t i = 0; i < geom.total_pages(); ++i) {
    frame_of_[i] = i;
    owner_of_[i] = i;
  }
}

std::size_t FrameMap::frame_index(PhysicalFrame f) const {
  return f.tier == Tier::Fast ? f.frame : geom_.fast_pages() + f.frame;
}

PhysicalFrame FrameMap::frame_of(UnifiedPageId ua) const {
  if (!geom_.contains(ua))
    throw RangeError("unified page " + std::to_string(ua.ua) +
                     " outside geometry");
  const auto idx = frame_of_[ua.ua];
  if (idx < geom_.fast_pages()) return {Tier::Fast, idx};
  return {Tier::Slow, idx - geom_.fast_pages()};
}

UnifiedPageId FrameMap::owner_of(PhysicalFrame frame) const {
  if (frame.frame >= geom_.pages_in(frame.tier))
    throw RangeError("frame " + to_string(frame) + " outside geometry");
  return {owner_of_[frame_index(frame)]};
}

bool FrameMap::is_identity(UnifiedPageId ua) const {
  return frame_of_.at(ua.ua) == ua.ua;
}

void FrameMap::swap(UnifiedPageId a, UnifiedPageId b) {
  if (!geom_.contains(a) || !geom_.contains(b))
    throw RangeError("swap outside geometry");
  std::swap(frame_of_[a.ua], frame_of_[b.ua]);
  owner_of_[frame_of_[a.ua]] = a.ua;
  owner_of_[frame_of_[b.ua]] = b.ua;
}

namespace {
constexpr std::uint64_t kDenseLineLimit = std::uint64_t{1} << 22;
}

PhysicalMemory::PhysicalMemory(const MemoryGeometry& geom,
                               std::uint32_t lines_per_page)
    : geom_(geom),
      lines_per_page_(lines_per_page),
      dense_(geom.total_pages() * lines_per_page <= kDenseLineLimit) {
  if (dense_) dense_data_.assign(geom.total_pages() * lines_per_page, 0);
}

std::uint64_t PhysicalMemory::key(PhysicalFrame f, std::uint32_t line) const {
  if (f.frame >= geom_.pages_in(f.tier) || line >= lines_per_page_)
    throw RangeError("memory access outside " + to_string(f));
  const std::uint64_t page =
      f.tier == Tier::Fast ? f.frame : geom_.fast_pages() + f.frame;
  return page * lines_per_page_ + line;
}

std::uint64_t PhysicalMemory::read(PhysicalFrame f, std::uint32_t line) const {
  const auto k = key(f, line);
  if (dense_) return dense_data_[k];
  auto it = sparse_data_.find(k);
  return it == sparse_data_.end() ? 0 : it->second;
}

void PhysicalMemory::write(PhysicalFrame f, std::uint32_t line,
                           std::uint64_t value) {
  const auto k = key(f, line);
  if (dense_)
    dense_data_[k] = value;
  else
    sparse_data_[k] = value;
}

}  // namespace duon
