#pragma once

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace duon {

// Per-line migration status of one page: bit i set once line i has reached
// its destination frame.
class BitVector {
 public:
  explicit BitVector(std::uint32_t lines = 64)
      : lines_(lines), words_((lines + 63) / 64, 0) {}

  std::uint32_t size() const { return lines_; }

  bool test(std::uint32_t line) const {
    check(line);
    return (words_[line / 64] >> (line % 64)) & 1u;
  }

  void set(std::uint32_t line) {
    check(line);
    words_[line / 64] |= std::uint64_t{1} << (line % 64);
  }

  std::uint32_t popcount() const {
    std::uint32_t n = 0;
    for (auto w : words_) n += static_cast<std::uint32_t>(std::popcount(w));
    return n;
  }

  bool all() const { return popcount() == lines_; }
  bool none() const { return popcount() == 0; }

  void reset() {
    for (auto& w : words_) w = 0;
  }

 private:
  void check(std::uint32_t line) const {
    if (line >= lines_) throw std::out_of_range("bit vector line out of range");
  }

  std::uint32_t lines_;
  std::vector<std::uint64_t> words_;
};

}  // namespace duon
