#pragma once

// CSV and markdown writers for simulation results, and the reader the
// report subcommand uses to re-parse them. Column orders are frozen; see
// docs/interface.md.

#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "duon/config.hpp"
#include "duon/sim_engine.hpp"

namespace duon {

extern const std::vector<std::string> kStatsColumns;
extern const std::vector<std::string> kCountersColumns;
extern const std::vector<std::string> kMigrationsColumns;
extern const std::vector<std::string> kEpochsColumns;
extern const std::vector<std::string> kOverheadColumns;
// Sweep rows start with these, then one column per axis, then kSweepTail.
extern const std::vector<std::string> kSweepHead;
extern const std::vector<std::string> kSweepTail;

// IPC and other ratios print with six decimals; undefined values as "nan".
std::string format_ratio(double v);

void write_stats_csv(std::ostream& out, const SimStats& stats);
// name,value pairs, one per global counter.
void write_counters_csv(std::ostream& out, const SimStats& stats);
void write_migrations_csv(std::ostream& out, const SimStats& stats);
void write_epochs_csv(std::ostream& out, const SimStats& stats,
                      const ExperimentConfig& cfg);
void write_summary_md(std::ostream& out, const ExperimentConfig& cfg,
                      const SimStats& stats, double wall_seconds);
void write_overhead_csv(std::ostream& out, const OverheadReport& r);

struct SweepPoint {
  std::vector<std::string> values;  // one per axis
  ExperimentConfig config;
  SimStats stats;
  double aggregate_ipc = 0;
  double normalized_ipc = 0;
  std::size_t baseline_index = 0;
};

void write_sweep_csv(std::ostream& out, const std::vector<std::string>& axes,
                     const std::vector<SweepPoint>& points);

class CsvError : public std::runtime_error {
 public:
  CsvError(std::size_t line, const std::string& what)
      : std::runtime_error("csv line " + std::to_string(line) + ": " + what) {}
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};

// Comma-separated, no quoting; every row must match the header's width.
CsvTable read_csv(std::istream& in);

// Identifies which of the tool's outputs a header belongs to: "stats",
// "counters", "migrations", "epochs", "overhead" or "sweep". Throws CsvError.
std::string classify(const CsvTable& table);

}  // namespace duon
