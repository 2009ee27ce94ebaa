#include "duon/workload.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "duon/rng.hpp"

namespace duon {

namespace {

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw std::invalid_argument("trace." + field + ": " + why);
}

class PageSampler {
 public:
  explicit PageSampler(const TraceSpec& spec) : spec_(spec) {
    const auto n = spec.footprint_pages;
    perm_.resize(n);
    std::iota(perm_.begin(), perm_.end(), std::uint64_t{0});
    SplitMix64 shuffle(spec.seed);
    for (std::uint64_t i = n - 1; i > 0; --i)
      std::swap(perm_[i], perm_[shuffle.below(i + 1)]);
    if (const auto* z = std::get_if<ZipfPattern>(&spec.pattern)) {
      cdf_.resize(n);
      double sum = 0;
      for (std::uint64_t r = 0; r < n; ++r) {
        sum += 1.0 / std::pow(static_cast<double>(r + 1), z->s);
        cdf_[r] = sum;
      }
      for (auto& c : cdf_) c /= sum;
    }
  }

  std::uint64_t vpn(SplitMix64& rng) const {
    return spec_.base_vpn + perm_[rank(rng)];
  }

 private:
  std::uint64_t rank(SplitMix64& rng) const {
    const auto n = spec_.footprint_pages;
    if (std::holds_alternative<ZipfPattern>(spec_.pattern)) {
      const double u = rng.uniform();
      const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
      return std::min<std::uint64_t>(it - cdf_.begin(), n - 1);
    }
    if (const auto* h = std::get_if<HotSetPattern>(&spec_.pattern)) {
      const auto hot = std::min(h->hot_pages, n);
      if (hot == 0 || hot == n) return rng.below(n);
      if (rng.uniform() < h->hot_prob) return rng.below(hot);
      return hot + rng.below(n - hot);
    }
    return rng.below(n);
  }

  const TraceSpec& spec_;
  std::vector<std::uint64_t> perm_;
  std::vector<double> cdf_;
};

std::uint64_t geometric(SplitMix64& rng, double mean) {
  const double u = rng.uniform();
  if (mean <= 0) return 0;
  const double p = 1.0 / (mean + 1.0);
  return static_cast<std::uint64_t>(std::floor(std::log1p(-u) / std::log1p(-p)));
}

void emit(const TraceSpec& spec, const PageSampler& pages, SplitMix64& rng,
          std::uint32_t core, std::uint64_t count,
          std::vector<TraceEvent>& out) {
  const auto lines = spec.page_size / spec.line_size;
  for (std::uint64_t i = 0; i < count; ++i) {
    TraceEvent e;
    e.core = core;
    const auto vpn = pages.vpn(rng);
    const auto line = rng.below(lines);
    e.vaddr = vpn * spec.page_size + line * spec.line_size;
    e.op = rng.uniform() < spec.write_ratio ? Op::Write : Op::Read;
    e.icount = geometric(rng, spec.mean_icount);
    out.push_back(e);
  }
}

}  // namespace

void TraceSpec::validate() const {
  require(footprint_pages >= 1, "footprint_pages", "must be >= 1");
  require(write_ratio >= 0 && write_ratio <= 1, "write_ratio",
          "must lie in [0, 1]");
  require(mean_icount >= 0, "mean_icount", "must be >= 0");
  require(line_size > 0 && page_size % line_size == 0 && page_size > 0,
          "page_size", "must be a positive multiple of line_size");
  if (const auto* z = std::get_if<ZipfPattern>(&pattern))
    require(z->s > 0, "zipf_s", "must be positive");
  if (const auto* h = std::get_if<HotSetPattern>(&pattern))
    require(h->hot_prob >= 0 && h->hot_prob <= 1, "hot_prob",
            "must lie in [0, 1]");
  if (const auto* p = std::get_if<PhasedPattern>(&pattern)) {
    require(!p->phases.empty(), "phases", "must not be empty");
    for (const auto& ph : p->phases) {
      require(ph.spec != nullptr, "phases", "phase without a spec");
      require(!std::holds_alternative<PhasedPattern>(ph.spec->pattern),
              "phases", "phases cannot nest");
      ph.spec->validate();
    }
  }
}

std::string pattern_name(const Pattern& p) {
  struct Visitor {
    std::string operator()(const UniformPattern&) const { return "uniform"; }
    std::string operator()(const ZipfPattern&) const { return "zipf"; }
    std::string operator()(const HotSetPattern&) const { return "hotset"; }
    std::string operator()(const PhasedPattern&) const { return "phased"; }
  };
  return std::visit(Visitor{}, p);
}

CoreTraces generate(const TraceSpec& spec, std::uint32_t cores) {
  spec.validate();
  CoreTraces out(cores);
  const auto* phased = std::get_if<PhasedPattern>(&spec.pattern);
  std::vector<PageSampler> samplers;
  if (phased) {
    for (const auto& ph : phased->phases) samplers.emplace_back(*ph.spec);
  } else {
    samplers.emplace_back(spec);
  }
  for (std::uint32_t c = 0; c < cores; ++c) {
    SplitMix64 rng(mix64(spec.seed + (std::uint64_t{c} + 1) * kGoldenGamma));
    if (phased) {
      for (std::size_t i = 0; i < phased->phases.size(); ++i)
        emit(*phased->phases[i].spec, samplers[i], rng, c,
             phased->phases[i].events, out[c]);
    } else {
      out[c].reserve(spec.events_per_core);
      emit(spec, samplers[0], rng, c, spec.events_per_core, out[c]);
    }
  }
  return out;
}

void write_trace(const CoreTraces& traces, std::ostream& out) {
  out << kTraceHeader << '\n';
  char buf[96];
  for (const auto& core : traces)
    for (const auto& e : core) {
      const int n = std::snprintf(buf, sizeof buf, "%u,%c,0x%llX,%llu\n", e.core,
                                  e.op == Op::Write ? 'W' : 'R',
                                  static_cast<unsigned long long>(e.vaddr),
                                  static_cast<unsigned long long>(e.icount));
      out.write(buf, n);
    }
}

void write_trace(const CoreTraces& traces, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_trace(traces, out);
  out.flush();
  if (!out) throw std::runtime_error("write to " + path.string() + " failed");
}

namespace {

template <typename T>
T parse_number(std::string_view field, int base, std::size_t line_no,
               const char* what) {
  T v{};
  const auto* end = field.data() + field.size();
  auto [p, ec] = std::from_chars(field.data(), end, v, base);
  if (field.empty() || ec != std::errc() || p != end)
    throw TraceParseError(line_no, std::string("bad ") + what + " '" +
                                       std::string(field) + "'");
  return v;
}

}  // namespace

TraceEvent parse_trace_line(const std::string& line, std::size_t line_no) {
  std::string_view rest(line);
  std::string_view fields[4];
  for (int i = 0; i < 4; ++i) {
    const auto comma = rest.find(',');
    if (i < 3) {
      if (comma == std::string_view::npos)
        throw TraceParseError(line_no, "expected 4 comma-separated fields");
      fields[i] = rest.substr(0, comma);
      rest.remove_prefix(comma + 1);
    } else {
      if (comma != std::string_view::npos)
        throw TraceParseError(line_no, "expected 4 comma-separated fields");
      fields[i] = rest;
    }
  }
  TraceEvent e;
  e.core = parse_number<std::uint32_t>(fields[0], 10, line_no, "core");
  if (fields[1] == "R") {
    e.op = Op::Read;
  } else if (fields[1] == "W") {
    e.op = Op::Write;
  } else {
    throw TraceParseError(line_no, "op must be R or W, got '" +
                                       std::string(fields[1]) + "'");
  }
  auto addr = fields[2];
  if (addr.size() < 3 || addr[0] != '0' || (addr[1] != 'x' && addr[1] != 'X'))
    throw TraceParseError(line_no, "vaddr must start with 0x");
  e.vaddr = parse_number<std::uint64_t>(addr.substr(2), 16, line_no, "vaddr");
  e.icount = parse_number<std::uint64_t>(fields[3], 10, line_no, "icount");
  return e;
}

CoreTraces read_trace(std::istream& in, std::uint32_t cores) {
  std::string line;
  if (!std::getline(in, line))
    throw TraceVersionError("empty trace; expected header '" +
                            std::string(kTraceHeader) + "'");
  if (line != kTraceHeader) {
    if (line.rfind("#duon-trace", 0) == 0)
      throw TraceVersionError("unsupported trace version '" + line + "'");
    throw TraceVersionError("missing header '" + std::string(kTraceHeader) + "'");
  }
  CoreTraces out(cores);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) throw TraceParseError(line_no, "empty line");
    const auto e = parse_trace_line(line, line_no);
    if (e.core >= out.size()) out.resize(e.core + 1);
    out[e.core].push_back(e);
  }
  return out;
}

CoreTraces read_trace(const std::filesystem::path& path, std::uint32_t cores) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trace " + path.string());
  return read_trace(in, cores);
}

std::uint64_t total_events(const CoreTraces& traces) {
  std::uint64_t n = 0;
  for (const auto& c : traces) n += c.size();
  return n;
}

}  // namespace duon
