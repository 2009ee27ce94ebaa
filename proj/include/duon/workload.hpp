#pragma once

// Synthetic trace generation and the text trace format.
//
// File format, LF line endings, no spaces:
//   #duon-trace v1
//   core,op,vaddr_hex,icount        e.g. 0,R,0x1F400,12
// op is R or W; icount is the number of instructions the core executes
// before issuing the reference.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace duon {

enum class Op : std::uint8_t { Read, Write };

struct TraceEvent {
  std::uint32_t core = 0;
  Op op = Op::Read;
  std::uint64_t vaddr = 0;
  std::uint64_t icount = 0;
  bool operator==(const TraceEvent&) const = default;
};

// Events of each core in program order; index = core id.
using CoreTraces = std::vector<std::vector<TraceEvent>>;

class TraceParseError : public std::runtime_error {
 public:
  TraceParseError(std::size_t line, const std::string& what)
      : std::runtime_error("trace line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class TraceVersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kTraceHeader = "#duon-trace v1";

struct TraceSpec;

struct UniformPattern {};
struct ZipfPattern {
  double s = 1.0;
};
struct HotSetPattern {
  std::uint64_t hot_pages = 10;
  double hot_prob = 0.9;
};
// One phase uses its own pattern and footprint but draws from the
// enclosing spec's per-core streams.
struct Phase {
  std::shared_ptr<TraceSpec> spec;
  std::uint64_t events = 0;
};
struct PhasedPattern {
  std::vector<Phase> phases;
};

using Pattern =
    std::variant<UniformPattern, ZipfPattern, HotSetPattern, PhasedPattern>;

struct TraceSpec {
  Pattern pattern = ZipfPattern{};
  std::uint64_t footprint_pages = 1024;
  std::uint64_t events_per_core = 10000;
  double write_ratio = 0.3;
  double mean_icount = 10.0;
  std::uint64_t seed = 0;
  std::uint64_t base_vpn = 0;
  std::uint64_t page_size = 4096;
  std::uint32_t line_size = 64;

  // Throws std::invalid_argument naming the field.
  void validate() const;
};

std::string pattern_name(const Pattern& p);

// Per-core stream c is SplitMix64 seeded with mix64(seed + (c + 1) * gamma).
// Page popularity ranks are mapped to vpns through a Fisher-Yates shuffle
// driven by SplitMix64(seed). Each event draws, in order: page rank, line
// offset, op, icount.
CoreTraces generate(const TraceSpec& spec, std::uint32_t cores);

void write_trace(const CoreTraces& traces, std::ostream& out);
void write_trace(const CoreTraces& traces, const std::filesystem::path& path);
// `cores` pads the result to at least that many cores.
CoreTraces read_trace(std::istream& in, std::uint32_t cores = 0);
CoreTraces read_trace(const std::filesystem::path& path, std::uint32_t cores = 0);
// Parses one data line; `line_no` is used in errors.
TraceEvent parse_trace_line(const std::string& line, std::size_t line_no);

std::uint64_t total_events(const CoreTraces& traces);

}  // namespace duon
