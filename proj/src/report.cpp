#include "duon/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace duon {

const std::vector<std::string> kStatsColumns{
    "core",          "instructions",   "cycles",         "ipc",
    "issue_cycles",  "cache_cycles",   "memory_cycles",  "stall_cycles",
    "overhead_cycles", "events",       "reads",          "writes",
    "l1_hits",       "llc_hits",       "llc_misses",     "llc_miss_rate",
    "tlb_hits",      "tlb_misses",     "page_faults"};
const std::vector<std::string> kCountersColumns{"counter", "value"};
const std::vector<std::string> kMigrationsColumns{
    "id",          "hot_vpn",     "victim_vpn",       "hot_ua",
    "partner_ua",  "pair",        "remigration",      "start_cycle",
    "end_cycle",   "stalled_requests", "buffer_served", "redirected"};
const std::vector<std::string> kEpochsColumns{"epoch", "start_cycle",
                                              "overhead_cycles",
                                              "threshold_changed"};
const std::vector<std::string> kOverheadColumns{
    "ept_bytes", "tlb_bytes", "fraction", "tlb_ratio_conventional",
    "tlb_ratio_extended_total"};
const std::vector<std::string> kSweepHead{"point"};
const std::vector<std::string> kSweepTail{
    "aggregate_ipc",   "normalized_ipc", "baseline_point",  "instructions",
    "max_cycles",      "migrations",     "pair_migrations", "remigrations",
    "shootdown_events", "lines_invalidated", "migration_stall_cycles",
    "overhead_cycles"};

std::string format_ratio(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

namespace {

void header(std::ostream& out, const std::vector<std::string>& cols) {
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
}

double rate(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? std::nan("") : double(num) / double(den);
}

void stats_row(std::ostream& out, const std::string& name, const CoreStats& c,
               double ipc) {
  out << name << ',' << c.instructions << ',' << c.cycles << ','
      << format_ratio(ipc) << ',' << c.issue_cycles << ',' << c.cache_cycles
      << ',' << c.memory_cycles << ',' << c.stall_cycles << ','
      << c.overhead_cycles << ',' << c.events << ',' << c.reads << ','
      << c.writes << ',' << c.l1_hits << ',' << c.llc_hits << ','
      << c.llc_misses << ','
      << format_ratio(rate(c.llc_misses, c.llc_hits + c.llc_misses)) << ','
      << c.tlb_hits << ',' << c.tlb_misses << ',' << c.page_faults << '\n';
}

std::uint64_t total_overhead(const SimStats& s) {
  std::uint64_t n = 0;
  for (const auto& c : s.cores) n += c.overhead_cycles;
  return n;
}

}  // namespace

void write_stats_csv(std::ostream& out, const SimStats& stats) {
  header(out, kStatsColumns);
  CoreStats all;
  for (std::size_t i = 0; i < stats.cores.size(); ++i) {
    const auto& c = stats.cores[i];
    stats_row(out, std::to_string(i), c,
              c.cycles ? double(c.instructions) / double(c.cycles) : std::nan(""));
    all.instructions += c.instructions;
    all.issue_cycles += c.issue_cycles;
    all.cache_cycles += c.cache_cycles;
    all.memory_cycles += c.memory_cycles;
    all.stall_cycles += c.stall_cycles;
    all.overhead_cycles += c.overhead_cycles;
    all.events += c.events;
    all.reads += c.reads;
    all.writes += c.writes;
    all.l1_hits += c.l1_hits;
    all.llc_hits += c.llc_hits;
    all.llc_misses += c.llc_misses;
    all.tlb_hits += c.tlb_hits;
    all.tlb_misses += c.tlb_misses;
    all.page_faults += c.page_faults;
  }
  // The aggregate row's cycles column is the slowest core's cycle count.
  all.cycles = stats.max_cycles();
  stats_row(out, "all", all,
            all.cycles ? double(all.instructions) / double(all.cycles) : std::nan(""));
}

void write_counters_csv(std::ostream& out, const SimStats& s) {
  header(out, kCountersColumns);
  const std::pair<const char*, std::uint64_t> rows[] = {
      {"migrations", s.migrations},
      {"migrations_started", s.migrations_started},
      {"pair_migrations", s.pair_migrations},
      {"one_way_migrations", s.one_way_migrations},
      {"remigrations", s.remigrations},
      {"migration_requests", s.migration_requests},
      {"migrations_dropped", s.migrations_dropped},
      {"migration_stall_cycles", s.migration_stall_cycles},
      {"buffer_served", s.buffer_served},
      {"redirected", s.redirected},
      {"wait_enqueued", s.wait_enqueued},
      {"line_transfers", s.line_transfers},
      {"shootdown_events", s.shootdown_events},
      {"shootdown_cycles", s.shootdown_cycles},
      {"tlb_shootdowns", s.tlb_shootdowns},
      {"reconciliations", s.reconciliations},
      {"remap_full_stalls", s.remap_full_stalls},
      {"lines_invalidated", s.lines_invalidated},
      {"invalidation_cycles", s.invalidation_cycles},
      {"page_faults", s.page_faults},
      {"fault_lines_invalidated", s.fault_lines_invalidated},
      {"fault_tlb_invalidations", s.fault_tlb_invalidations},
      {"tcm_broadcasts", s.tcm_broadcasts},
      {"tcm_entry_updates", s.tcm_entry_updates},
      {"coherence_checks", s.coherence_checks},
      {"oracle_reads_checked", s.oracle_reads_checked},
      {"llc_writebacks", s.llc_writebacks},
      {"final_threshold", s.final_threshold},
      {"threshold_changes", s.threshold_changes.size()},
      {"overhead_cycles", total_overhead(s)},
  };
  for (const auto& [k, v] : rows) out << k << ',' << v << '\n';
}

void write_migrations_csv(std::ostream& out, const SimStats& stats) {
  header(out, kMigrationsColumns);
  for (const auto& j : stats.jobs) {
    out << j.id << ',' << j.hot_vpn.vpn << ',';
    if (j.victim_vpn) out << j.victim_vpn->vpn;
    out << ',' << j.hot_ua.ua << ',' << j.partner_ua.ua << ',' << int(j.pair)
        << ',' << int(j.remigration) << ',' << j.start_cycle << ','
        << j.end_cycle << ',' << j.stalled_requests << ',' << j.buffer_served
        << ',' << j.redirected << '\n';
  }
}

void write_epochs_csv(std::ostream& out, const SimStats& stats,
                      const ExperimentConfig& cfg) {
  header(out, kEpochsColumns);
  const auto len = cfg.sim.epoch_cycles();
  std::size_t next_change = 0;
  for (std::size_t e = 0; e < stats.overhead_per_epoch.size(); ++e) {
    // A change recorded at boundary index b takes effect from epoch b.
    bool changed = false;
    while (next_change < stats.threshold_changes.size() &&
           stats.threshold_changes[next_change] == e) {
      changed = true;
      ++next_change;
    }
    out << e << ',' << e * len << ',' << stats.overhead_per_epoch[e] << ','
        << int(changed) << '\n';
  }
}

void write_summary_md(std::ostream& out, const ExperimentConfig& cfg,
                      const SimStats& s, double wall_seconds) {
  const auto& p = cfg.sim.policy;
  out << "# Simulation summary\n\n";
  out << "| setting | value |\n|---|---|\n";
  out << "| preset | " << cfg.preset << " |\n";
  out << "| mode | " << (p.duon ? "duon" : "baseline") << " |\n";
  out << "| policy.kind | " << to_string(p.kind) << " |\n";
  out << "| policy.threshold | " << p.threshold << " |\n";
  out << "| policy.epoch_us | " << p.epoch_us << " |\n";
  out << "| system.cores | " << cfg.sim.cores << " |\n";
  out << "| geometry.fast_capacity | " << cfg.sim.fast_capacity << " |\n";
  out << "| geometry.slow_capacity | " << cfg.sim.slow_capacity << " |\n";
  out << "| latencies (fast r/w, slow r/w) | " << cfg.sim.latencies.fast_read
      << '/' << cfg.sim.latencies.fast_write << ", "
      << cfg.sim.latencies.slow_read << '/' << cfg.sim.latencies.slow_write
      << " |\n";
  out << "| trace | "
      << (cfg.trace_path ? cfg.trace_path->string()
                         : pattern_name(cfg.trace.pattern) + ", seed " +
                               std::to_string(cfg.trace.seed))
      << " |\n\n";

  double ipc = std::nan("");
  if (s.max_cycles() > 0) ipc = compute_ipc(s).aggregate;
  out << "| result | value |\n|---|---|\n";
  out << "| aggregate IPC | " << format_ratio(ipc) << " |\n";
  out << "| instructions | " << s.instructions() << " |\n";
  out << "| max core cycles | " << s.max_cycles() << " |\n";
  out << "| migrations (pair / one-way) | " << s.migrations << " ("
      << s.pair_migrations << " / " << s.one_way_migrations << ") |\n";
  out << "| re-migrations | " << s.remigrations << " |\n";
  out << "| migration stall cycles | " << s.migration_stall_cycles << " |\n";
  out << "| shootdown events | " << s.shootdown_events << " |\n";
  out << "| lines invalidated | " << s.lines_invalidated << " |\n";
  out << "| reconciliations | " << s.reconciliations << " |\n";
  out << "| overhead cycles (all cores) | " << total_overhead(s) << " |\n";
  out << "| TCM broadcasts | " << s.tcm_broadcasts << " |\n";
  out << "| final threshold | " << s.final_threshold << " |\n";
  out << "| oracle reads checked | " << s.oracle_reads_checked << " |\n";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", wall_seconds);
  out << "| wall time (s) | " << buf << " |\n";
}

void write_overhead_csv(std::ostream& out, const OverheadReport& r) {
  header(out, kOverheadColumns);
  char frac[64];
  std::snprintf(frac, sizeof frac, "%.8f", r.ept_fraction_of_memory);
  out << r.ept_extension_bytes << ',' << r.tlb_extension_bytes << ',' << frac
      << ',' << format_ratio(r.tlb_ratio_vs_conventional) << ','
      << format_ratio(r.tlb_ratio_of_extended_total) << '\n';
}

void write_sweep_csv(std::ostream& out, const std::vector<std::string>& axes,
                     const std::vector<SweepPoint>& points) {
  std::vector<std::string> cols = kSweepHead;
  cols.insert(cols.end(), axes.begin(), axes.end());
  cols.insert(cols.end(), kSweepTail.begin(), kSweepTail.end());
  header(out, cols);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    out << i;
    for (const auto& v : p.values) out << ',' << v;
    out << ',' << format_ratio(p.aggregate_ipc) << ','
        << format_ratio(p.normalized_ipc) << ',' << p.baseline_index << ','
        << p.stats.instructions() << ',' << p.stats.max_cycles() << ','
        << p.stats.migrations << ',' << p.stats.pair_migrations << ','
        << p.stats.remigrations << ',' << p.stats.shootdown_events << ','
        << p.stats.lines_invalidated << ',' << p.stats.migration_stall_cycles
        << ',' << total_overhead(p.stats) << '\n';
  }
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw CsvError(1, "no column '" + name + "'");
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw CsvError(1, "missing header");
  t.header = split(line);
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) throw CsvError(n, "empty line");
    auto row = split(line);
    if (row.size() != t.header.size())
      throw CsvError(n, "expected " + std::to_string(t.header.size()) +
                            " fields, got " + std::to_string(row.size()));
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string classify(const CsvTable& t) {
  if (t.header == kStatsColumns) return "stats";
  if (t.header == kCountersColumns) return "counters";
  if (t.header == kMigrationsColumns) return "migrations";
  if (t.header == kEpochsColumns) return "epochs";
  if (t.header == kOverheadColumns) return "overhead";
  const auto h = kSweepHead.size();
  const auto tail = kSweepTail.size();
  if (t.header.size() >= h + tail &&
      std::equal(kSweepHead.begin(), kSweepHead.end(), t.header.begin()) &&
      std::equal(kSweepTail.begin(), kSweepTail.end(),
                 t.header.end() - static_cast<std::ptrdiff_t>(tail)))
    return "sweep";
  throw CsvError(1, "unrecognized header");
}

}  // namespace duon
