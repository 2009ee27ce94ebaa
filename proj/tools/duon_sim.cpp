// duon-sim: command-line front end for the simulator.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "duon/config.hpp"
#include "duon/report.hpp"
#include "duon/sim_engine.hpp"
#include "duon/workload.hpp"

namespace fs = std::filesystem;
using namespace duon;

namespace {

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
  unsigned jobs = 1;
  std::optional<std::uint64_t> seed;
  bool trace_log = false;
};

// Exit codes: 0 success, 1 run failure, 2 usage or configuration error.
constexpr int kRunFailure = 1;
constexpr int kConfigError = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Json base_document(const Globals& g, fs::path& base_dir) {
  Json doc = Json::object();
  if (!g.config_path.empty()) {
    doc = load_json(g.config_path);
    base_dir = fs::path(g.config_path).parent_path();
  }
  for (const auto& o : g.overrides) apply_override(doc, o);
  if (g.seed) {
    apply_override(doc, "system.seed=" + std::to_string(*g.seed));
    const bool file_trace = doc.contains("trace") && doc["trace"].is_object() &&
                            doc["trace"].contains("path");
    if (!file_trace) apply_override(doc, "trace.seed=" + std::to_string(*g.seed));
  }
  if (!g.out.empty()) {
    if (!doc.contains("output") || !doc["output"].is_object()) doc["output"] = Json::object();
    doc["output"]["dir"] = g.out;
  }
  return doc;
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& fn) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  fn(out);
  out.flush();
  if (!out) throw std::runtime_error("write to " + path.string() + " failed");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_simulate(const Globals& g, const std::string& trace_file) {
  fs::path base;
  Json doc = base_document(g, base);
  if (!trace_file.empty())
    doc["trace"] = Json{{"path", fs::absolute(trace_file).string()}};
  const auto cfg = parse_config(doc, base);
  const auto traces = load_traces(cfg);
  fs::create_directories(cfg.output_dir);

  std::ofstream log;
  if (g.trace_log) {
    log.open(cfg.output_dir / "trace.log", std::ios::binary);
    if (!log) throw std::runtime_error("cannot open trace.log");
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto stats = run(cfg.sim, traces, g.trace_log ? &log : nullptr);
  const double wall = seconds_since(t0);

  const auto& dir = cfg.output_dir;
  write_file(dir / "stats.csv", [&](std::ostream& o) { write_stats_csv(o, stats); });
  write_file(dir / "counters.csv",
             [&](std::ostream& o) { write_counters_csv(o, stats); });
  write_file(dir / "migrations.csv",
             [&](std::ostream& o) { write_migrations_csv(o, stats); });
  write_file(dir / "epochs.csv",
             [&](std::ostream& o) { write_epochs_csv(o, stats, cfg); });
  write_file(dir / "summary.md",
             [&](std::ostream& o) { write_summary_md(o, cfg, stats, wall); });
  write_file(dir / "config.json",
             [&](std::ostream& o) { o << to_json(cfg).dump(2) << '\n'; });

  const double ipc =
      stats.max_cycles() ? compute_ipc(stats).aggregate : std::nan("");
  std::cout << "aggregate_ipc=" << format_ratio(ipc) << '\n';
  return 0;
}

int cmd_dump_ept(const Globals& g, const std::string& trace_file) {
  fs::path base;
  Json doc = base_document(g, base);
  if (!trace_file.empty())
    doc["trace"] = Json{{"path", fs::absolute(trace_file).string()}};
  const auto cfg = parse_config(doc, base);
  const auto traces = load_traces(cfg);
  Simulator sim(cfg.sim, traces);
  sim.run();
  std::cout << ept_csv_header() << '\n';
  for (const auto& e : sim.translation().dump()) std::cout << ept_csv_row(e) << '\n';
  return 0;
}

struct Axis {
  std::string key;
  std::vector<std::string> values;
};

Axis parse_axis(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == text.size())
    throw UsageError("--axis must look like KEY=V1,V2,...: '" + text + "'");
  Axis a{text.substr(0, eq), {}};
  std::string rest = text.substr(eq + 1);
  std::size_t start = 0;
  while (true) {
    const auto comma = rest.find(',', start);
    a.values.push_back(rest.substr(start, comma - start));
    if (a.values.back().empty()) throw UsageError("empty value in --axis " + a.key);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return a;
}

int cmd_sweep(const Globals& g, std::vector<std::string> axis_args,
              std::string baseline, bool comparison) {
  if (comparison) {
    if (!axis_args.empty()) throw UsageError("--comparison replaces --axis");
    axis_args = {"policy.kind=Threshold,Epoch", "policy.threshold=64,128",
                 "policy.duon=false,true"};
    if (baseline.empty()) baseline = "policy.duon=false";
  }
  if (axis_args.empty()) throw UsageError("sweep needs at least one --axis");
  std::vector<Axis> axes;
  for (const auto& a : axis_args) axes.push_back(parse_axis(a));

  std::optional<std::pair<std::size_t, std::string>> base_sel;
  if (!baseline.empty()) {
    const auto eq = baseline.find('=');
    if (eq == std::string::npos) throw UsageError("--baseline must look like KEY=VALUE");
    const auto key = baseline.substr(0, eq);
    const auto val = baseline.substr(eq + 1);
    std::size_t i = 0;
    while (i < axes.size() && axes[i].key != key) ++i;
    if (i == axes.size()) throw UsageError("--baseline key " + key + " is not an axis");
    if (std::find(axes[i].values.begin(), axes[i].values.end(), val) ==
        axes[i].values.end())
      throw UsageError("--baseline value " + val + " is not on axis " + key);
    base_sel = {i, val};
  }

  fs::path base;
  const Json doc = base_document(g, base);

  // Cross product, last axis fastest. Every point is validated before any
  // simulation starts.
  std::vector<SweepPoint> points;
  std::vector<std::size_t> idx(axes.size(), 0);
  for (bool more = true; more;) {
    SweepPoint p;
    Json d = doc;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      p.values.push_back(axes[a].values[idx[a]]);
      apply_override(d, axes[a].key + "=" + axes[a].values[idx[a]]);
    }
    p.config = parse_config(d, base);
    points.push_back(std::move(p));
    more = false;
    for (std::size_t a = axes.size(); a-- > 0;) {
      if (++idx[a] < axes[a].values.size()) {
        more = true;
        break;
      }
      idx[a] = 0;
    }
  }
  for (auto& p : points) {
    p.baseline_index = 0;
    if (!base_sel) continue;
    for (std::size_t q = 0; q < points.size(); ++q) {
      bool match = points[q].values[base_sel->first] == base_sel->second;
      for (std::size_t a = 0; match && a < axes.size(); ++a)
        if (a != base_sel->first && points[q].values[a] != p.values[a]) match = false;
      if (match) {
        p.baseline_index = q;
        break;
      }
    }
  }

  std::map<std::string, std::shared_ptr<const CoreTraces>> trace_cache;
  std::vector<std::shared_ptr<const CoreTraces>> traces;
  for (const auto& p : points) {
    const auto key = to_json(p.config)["trace"].dump() + "/" +
                     std::to_string(p.config.sim.cores) + "/" +
                     std::to_string(p.config.sim.page_size);
    auto& t = trace_cache[key];
    if (!t) t = std::make_shared<const CoreTraces>(load_traces(p.config));
    traces.push_back(t);
  }

  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::vector<std::string> errors(points.size());
  auto worker = [&] {
    while (true) {
      const auto i = next.fetch_add(1);
      if (i >= points.size()) return;
      try {
        points[i].stats = run(points[i].config.sim, *traces[i]);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(err_mu);
        errors[i] = e.what();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(g.jobs, points.size()));
  std::vector<std::thread> pool;
  for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  bool failed = false;
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) {
      std::cerr << "point " << i << ": " << errors[i] << '\n';
      failed = true;
    }
  if (failed) return kRunFailure;

  for (auto& p : points)
    p.aggregate_ipc = p.stats.max_cycles() ? compute_ipc(p.stats).aggregate : std::nan("");
  for (auto& p : points)
    p.normalized_ipc = p.aggregate_ipc / points[p.baseline_index].aggregate_ipc;

  std::vector<std::string> keys;
  for (const auto& a : axes) keys.push_back(a.key);
  const fs::path dir = g.out.empty() ? points.front().config.output_dir : fs::path(g.out);
  fs::create_directories(dir);
  write_file(dir / "sweep.csv",
             [&](std::ostream& o) { write_sweep_csv(o, keys, points); });
  std::cout << "points=" << points.size() << " sweep=" << (dir / "sweep.csv").string()
            << '\n';
  return 0;
}

int cmd_overhead(const std::string& fast, const std::string& slow,
                 const std::string& page, std::uint64_t tlb_entries) {
  std::uint64_t f, s, p;
  try {
    f = parse_size(fast);
    s = parse_size(slow);
    p = parse_size(page);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const MemoryGeometry geom(f, s, p);
  if (geom.total_pages() == 0) throw GeometryError("empty geometry: no pages in either tier");
  write_overhead_csv(std::cout, overhead_report(geom, tlb_entries));
  return 0;
}

int cmd_report(const std::vector<std::string>& paths) {
  static const char* known[] = {"stats.csv", "counters.csv", "migrations.csv",
                                "epochs.csv", "sweep.csv"};
  std::vector<fs::path> files;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      for (const auto* k : known)
        if (fs::exists(fs::path(p) / k)) files.push_back(fs::path(p) / k);
    } else {
      files.emplace_back(p);
    }
  }
  if (files.empty()) throw UsageError("report: no CSV files found");
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + f.string());
    CsvTable t;
    try {
      t = read_csv(in);
    } catch (const CsvError& e) {
      throw std::runtime_error(f.string() + ": " + e.what());
    }
    std::string kind;
    try {
      kind = classify(t);
    } catch (const CsvError& e) {
      throw std::runtime_error(f.string() + ": " + e.what());
    }
    std::cout << f.string() << ": " << kind << ", " << t.rows.size() << " rows";
    if (kind == "stats" && !t.rows.empty()) {
      std::cout << ", aggregate ipc " << t.rows.back()[t.column("ipc")];
    } else if (kind == "sweep") {
      const auto c = t.column("normalized_ipc");
      std::cout << ", normalized ipc:";
      for (const auto& r : t.rows) std::cout << ' ' << r[c];
    } else if (kind == "counters") {
      for (const auto& r : t.rows)
        if (r[0] == "migrations" || r[0] == "shootdown_events")
          std::cout << ", " << r[0] << ' ' << r[1];
    }
    std::cout << '\n';
  }
  return 0;
}

int cmd_gen_trace(const Globals& g, TraceSpec spec, const std::string& pattern,
                  double zipf_s, std::uint64_t hot_pages, double hot_prob,
                  std::uint32_t cores) {
  if (g.out.empty()) throw UsageError("gen-trace needs --out PATH");
  if (!g.seed) std::cerr << "note: --seed not given; using seed 0\n";
  spec.seed = g.seed.value_or(0);
  if (pattern == "uniform")
    spec.pattern = UniformPattern{};
  else if (pattern == "zipf")
    spec.pattern = ZipfPattern{zipf_s};
  else if (pattern == "hotset")
    spec.pattern = HotSetPattern{hot_pages, hot_prob};
  else
    throw UsageError("--pattern must be uniform, zipf or hotset");
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (cores == 0) throw UsageError("--cores must be >= 1");
  write_trace(generate(spec, cores), fs::path(g.out));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trace-driven simulator for flat-address heterogeneous memory"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "JSON experiment config");
  app.add_option("--override", g.overrides, "KEY=VALUE, applied after the config")
      ->take_all()
      ->allow_extra_args(false);
  app.add_option("--out", g.out, "Output directory (gen-trace: output file)");
  app.add_option("--jobs", g.jobs, "Concurrent sweep runs")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Seed for the run and the generated trace");
  app.add_flag("--trace-log", g.trace_log, "Write trace.log with one record per event");

  std::string trace_file;
  auto* sim = app.add_subcommand("simulate", "Run one simulation");
  sim->add_option("--trace", trace_file, "Trace file (overrides trace section)");

  std::string ept_trace;
  auto* dump = app.add_subcommand("dump-ept", "Run, then print the extended page table");
  dump->add_option("--trace", ept_trace, "Trace file (overrides trace section)");

  std::vector<std::string> axes;
  std::string baseline;
  bool comparison = false;
  auto* sweep = app.add_subcommand("sweep", "Cross-product sweep over config keys");
  sweep->add_option("--axis", axes, "KEY=V1,V2,... (repeatable)")->allow_extra_args(false);
  sweep->add_option("--baseline", baseline, "KEY=VALUE selecting the baseline rows");
  sweep->add_flag("--comparison", comparison,
                  "Threshold/Epoch x threshold 64/128 x baseline/duon (8 points)");

  std::string fast, slow, page = "4KiB";
  std::uint64_t tlb_entries = 4096;
  auto* overhead = app.add_subcommand("overhead", "Storage overhead of the extensions");
  overhead->add_option("--fast", fast, "Fast tier capacity, e.g. 1GiB")->required();
  overhead->add_option("--slow", slow, "Slow tier capacity, e.g. 16GiB")->required();
  overhead->add_option("--page", page, "Page size");
  overhead->add_option("--tlb-entries", tlb_entries, "TLB entries per core");

  TraceSpec spec;
  std::string pattern = "zipf";
  double zipf_s = 1.0;
  std::uint64_t hot_pages = 10;
  double hot_prob = 0.9;
  std::uint32_t cores = 16;
  auto* gen = app.add_subcommand("gen-trace", "Write a synthetic trace file");
  gen->add_option("--pattern", pattern, "uniform, zipf or hotset");
  gen->add_option("--zipf-s", zipf_s, "Zipf exponent");
  gen->add_option("--hot-pages", hot_pages, "Hot set size");
  gen->add_option("--hot-prob", hot_prob, "Probability of a hot-set access");
  gen->add_option("--footprint", spec.footprint_pages, "Pages touched");
  gen->add_option("--events", spec.events_per_core, "Events per core");
  gen->add_option("--cores", cores, "Cores");
  gen->add_option("--write-ratio", spec.write_ratio, "Fraction of writes");
  gen->add_option("--mean-icount", spec.mean_icount, "Mean instructions between events");
  gen->add_option("--base-vpn", spec.base_vpn, "First virtual page");
  gen->add_option("--page-size", spec.page_size, "Page size in bytes");
  gen->add_option("--line-size", spec.line_size, "Line size in bytes");

  std::vector<std::string> report_paths;
  auto* report = app.add_subcommand("report", "Re-parse and summarize result CSVs");
  report->add_option("paths", report_paths, "CSV files or output directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (sim->parsed()) return cmd_simulate(g, trace_file);
    if (dump->parsed()) return cmd_dump_ept(g, ept_trace);
    if (sweep->parsed()) return cmd_sweep(g, axes, baseline, comparison);
    if (overhead->parsed()) return cmd_overhead(fast, slow, page, tlb_entries);
    if (gen->parsed())
      return cmd_gen_trace(g, spec, pattern, zipf_s, hot_pages, hot_prob, cores);
    if (report->parsed()) return cmd_report(report_paths);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const GeometryError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRunFailure;
  }
  return kConfigError;
}
