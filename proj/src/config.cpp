#include "duon/config.hpp"

#include <charconv>
#include <fstream>
#include <limits>
#include <set>

namespace duon {

namespace {

class Section {
 public:
  Section(const Json& root, std::string name) : name_(std::move(name)) {
    if (!root.contains(name_)) return;
    obj_ = &root.at(name_);
    if (!obj_->is_object()) throw ConfigError(name_, "must be an object");
  }
  Section(const Json& obj, std::string name, bool) : name_(std::move(name)), obj_(&obj) {
    if (!obj_->is_object()) throw ConfigError(name_, "must be an object");
  }

  bool has(const char* key) const { return obj_ && obj_->contains(key); }
  std::string field(const std::string& key) const { return name_ + "." + key; }

  const Json* take(const char* key) {
    if (!has(key)) return nullptr;
    used_.insert(key);
    return &obj_->at(key);
  }

  void u64(const char* key, std::uint64_t& out) {
    if (const auto* v = take(key)) {
      if (v->is_number_unsigned()) {
        out = v->get<std::uint64_t>();
      } else if (v->is_number_integer()) {
        throw ConfigError(field(key), "must be a non-negative integer, got " +
                                          v->dump());
      } else {
        throw ConfigError(field(key), "must be a non-negative integer");
      }
    }
  }
  template <typename T>
  void uint(const char* key, T& out) {
    std::uint64_t v = out;
    u64(key, v);
    if (v > std::numeric_limits<T>::max())
      throw ConfigError(field(key), "out of range");
    out = static_cast<T>(v);
  }
  void size(const char* key, std::uint64_t& out) {
    if (const auto* v = take(key)) {
      if (v->is_string()) {
        try {
          out = parse_size(v->get<std::string>());
        } catch (const std::invalid_argument& e) {
          throw ConfigError(field(key), e.what());
        }
      } else if (v->is_number_unsigned()) {
        out = v->get<std::uint64_t>();
      } else {
        throw ConfigError(field(key),
                          "must be a non-negative byte count or size string");
      }
    }
  }
  void real(const char* key, double& out) {
    if (const auto* v = take(key)) {
      if (!v->is_number()) throw ConfigError(field(key), "must be a number");
      out = v->get<double>();
    }
  }
  void boolean(const char* key, bool& out) {
    if (const auto* v = take(key)) {
      if (!v->is_boolean()) throw ConfigError(field(key), "must be true or false");
      out = v->get<bool>();
    }
  }
  bool string(const char* key, std::string& out) {
    if (const auto* v = take(key)) {
      if (!v->is_string()) throw ConfigError(field(key), "must be a string");
      out = v->get<std::string>();
      return true;
    }
    return false;
  }

  void finish() const {
    if (!obj_) return;
    for (const auto& [k, v] : obj_->items())
      if (!used_.contains(k)) throw ConfigError(field(k), "unknown key");
  }

 private:
  std::string name_;
  const Json* obj_ = nullptr;
  std::set<std::string> used_;
};

void read_pattern_fields(Section& s, TraceSpec& t, bool allow_phases,
                         const Json* phases_json);

TraceSpec read_phase(const Json& obj, const std::string& name,
                     const TraceSpec& parent, std::uint64_t& events) {
  Section s(obj, name, true);
  TraceSpec t = parent;
  t.pattern = ZipfPattern{};
  read_pattern_fields(s, t, false, nullptr);
  s.u64("events", events);
  s.finish();
  return t;
}

void read_pattern_fields(Section& s, TraceSpec& t, bool allow_phases,
                         const Json* phases_json) {
  std::string pattern = pattern_name(t.pattern);
  s.string("pattern", pattern);
  double zipf_s = 1.0;
  std::uint64_t hot_pages = 10;
  double hot_prob = 0.9;
  s.real("zipf_s", zipf_s);
  s.u64("hot_pages", hot_pages);
  s.real("hot_prob", hot_prob);
  s.u64("footprint_pages", t.footprint_pages);
  s.u64("events_per_core", t.events_per_core);
  s.real("write_ratio", t.write_ratio);
  s.real("mean_icount", t.mean_icount);
  s.u64("base_vpn", t.base_vpn);
  if (pattern == "uniform") {
    t.pattern = UniformPattern{};
  } else if (pattern == "zipf") {
    t.pattern = ZipfPattern{zipf_s};
  } else if (pattern == "hotset") {
    t.pattern = HotSetPattern{hot_pages, hot_prob};
  } else if (pattern == "phased" && allow_phases) {
    if (!phases_json || !phases_json->is_array())
      throw ConfigError(s.field("phases"), "required array for pattern phased");
    PhasedPattern p;
    for (std::size_t i = 0; i < phases_json->size(); ++i) {
      Phase ph;
      ph.spec = std::make_shared<TraceSpec>(
          read_phase((*phases_json)[i], s.field("phases[" + std::to_string(i) + "]"),
                     t, ph.events));
      p.phases.push_back(std::move(ph));
    }
    t.pattern = std::move(p);
  } else {
    throw ConfigError(s.field("pattern"),
                      "unknown pattern '" + pattern +
                          "' (uniform, zipf, hotset" +
                          (allow_phases ? ", phased)" : ")"));
  }
}

void check_nonneg(const char* field, double v) {
  if (!(v >= 0)) throw ConfigError(field, "must be >= 0");
}

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"config1", "config2", "config3"};
  return names;
}

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig cfg;
  cfg.preset = name;
  auto& s = cfg.sim;
  if (name == "config1") {
    s.fast_capacity = 1ull << 30;
    s.slow_capacity = 16ull << 30;
    s.latencies = LatencyTable::from_devices(kHbm, kPcm, s.freq_ghz);
  } else if (name == "config2") {
    s.fast_capacity = 256ull << 20;
    s.slow_capacity = 16ull << 30;
    s.latencies = LatencyTable::from_devices(kHbm, kPcm, s.freq_ghz);
  } else if (name == "config3") {
    s.fast_capacity = 1ull << 30;
    s.slow_capacity = 16ull << 30;
    s.latencies = LatencyTable::from_devices(kHbm, kDdr4, s.freq_ghz);
  } else {
    throw ConfigError("preset", "unknown preset '" + name +
                                    "' (config1, config2, config3)");
  }
  return cfg;
}

std::uint64_t parse_size(const std::string& text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p == text.data())
    throw std::invalid_argument("bad size '" + text + "'");
  const std::string unit(p, end);
  unsigned shift = 0;
  if (unit.empty() || unit == "B") {
    shift = 0;
  } else if (unit == "K" || unit == "KiB" || unit == "KB") {
    shift = 10;
  } else if (unit == "M" || unit == "MiB" || unit == "MB") {
    shift = 20;
  } else if (unit == "G" || unit == "GiB" || unit == "GB") {
    shift = 30;
  } else if (unit == "T" || unit == "TiB" || unit == "TB") {
    shift = 40;
  } else {
    throw std::invalid_argument("bad size unit in '" + text + "'");
  }
  if (shift && v > (~std::uint64_t{0} >> shift))
    throw std::invalid_argument("size '" + text + "' overflows");
  return v << shift;
}

void apply_override(Json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError(assignment, "override must look like KEY=VALUE");
  const auto key = assignment.substr(0, eq);
  const auto text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const auto part = key.substr(start, dot - start);
    if (part.empty()) throw ConfigError(key, "empty key component");
    if (!node->is_object()) throw ConfigError(key, "parent is not an object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = Json::object();
    start = dot + 1;
  }
}

ExperimentConfig parse_config(const Json& doc,
                              const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("config", "must be a JSON object");
  static const std::set<std::string> sections{
      "preset", "geometry", "cache",    "policy", "latencies",
      "system", "tcm",      "baseline", "trace",  "output"};
  for (const auto& [k, v] : doc.items())
    if (!sections.contains(k)) throw ConfigError(k, "unknown section");

  std::string preset_name = "config1";
  if (doc.contains("preset")) {
    if (!doc.at("preset").is_string())
      throw ConfigError("preset", "must be a string");
    preset_name = doc.at("preset").get<std::string>();
  }
  ExperimentConfig cfg = preset(preset_name);
  auto& s = cfg.sim;

  Section system(doc, "system");
  system.uint("cores", s.cores);
  system.real("freq_ghz", s.freq_ghz);
  system.uint("tlb_entries", s.tlb_entries);
  system.uint("queue_capacity", s.queue_capacity);
  system.boolean("contend", s.contend);
  system.boolean("verify", s.verify);
  system.u64("seed", s.seed);
  std::string order = s.alloc_order == AllocOrder::Shuffled ? "shuffled" : "sequential";
  if (system.string("alloc_order", order)) {
    if (order == "shuffled")
      s.alloc_order = AllocOrder::Shuffled;
    else if (order == "sequential")
      s.alloc_order = AllocOrder::Sequential;
    else
      throw ConfigError("system.alloc_order", "must be shuffled or sequential");
  }
  system.finish();
  check_nonneg("system.freq_ghz", s.freq_ghz);

  Section geometry(doc, "geometry");
  geometry.size("fast_capacity", s.fast_capacity);
  geometry.size("slow_capacity", s.slow_capacity);
  geometry.size("page_size", s.page_size);
  geometry.finish();

  Section cache(doc, "cache");
  cache.size("l1_size", s.cache.l1_size);
  cache.uint("l1_assoc", s.cache.l1_assoc);
  cache.uint("l1_latency", s.cache.l1_latency);
  cache.size("llc_size", s.cache.llc_size);
  cache.uint("llc_assoc", s.cache.llc_assoc);
  cache.uint("llc_latency", s.cache.llc_latency);
  cache.uint("line_size", s.cache.line_size);
  cache.finish();

  Section policy(doc, "policy");
  std::string kind = to_string(s.policy.kind);
  if (policy.string("kind", kind)) {
    try {
      s.policy.kind = parse_policy_kind(kind);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("policy.kind", "unknown policy '" + kind +
                                           "' (NoMigration, Threshold, Epoch, AdaptThold)");
    }
  }
  policy.u64("threshold", s.policy.threshold);
  policy.real("epoch_us", s.policy.epoch_us);
  policy.boolean("duon", s.policy.duon);
  policy.boolean("epoch_blocking", s.epoch_blocking);
  policy.uint("adapt_period", s.policy.adapt_period);
  policy.u64("adapt_min", s.policy.adapt_min);
  policy.u64("adapt_max", s.policy.adapt_max);
  policy.real("adapt_dead_zone", s.policy.adapt_dead_zone);
  policy.finish();

  Section lat(doc, "latencies");
  auto& l = s.latencies;
  lat.u64("fast_read", l.fast_read);
  lat.u64("fast_write", l.fast_write);
  lat.u64("slow_read", l.slow_read);
  lat.u64("slow_write", l.slow_write);
  lat.u64("buffer_access", l.buffer_access);
  lat.u64("page_walk", l.page_walk);
  lat.u64("ext_lookup", l.ext_lookup);
  lat.u64("page_fault", l.page_fault);
  lat.u64("line_invalidate", l.line_invalidate);
  lat.finish();

  Section tcm(doc, "tcm");
  tcm.u64("broadcast_cost", s.tcm.broadcast_cost);
  tcm.u64("per_core_cost", s.tcm.per_core_cost);
  tcm.u64("shootdown_cost", s.tcm.shootdown_cost);
  tcm.finish();

  Section baseline(doc, "baseline");
  baseline.uint("remap_capacity", s.remap_capacity);
  baseline.boolean("charge_absent_lines", s.charge_absent_lines);
  baseline.finish();

  Section output(doc, "output");
  std::string dir;
  if (output.string("dir", dir)) cfg.output_dir = dir;
  output.finish();

  Section trace(doc, "trace");
  cfg.trace.seed = s.seed;
  std::string path;
  if (trace.string("path", path)) {
    std::filesystem::path p(path);
    cfg.trace_path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    trace.finish();
  } else {
    trace.u64("seed", cfg.trace.seed);
    const Json* phases = trace.take("phases");
    read_pattern_fields(trace, cfg.trace, true, phases);
    trace.finish();
  }
  cfg.trace.page_size = s.page_size;
  cfg.trace.line_size = s.cache.line_size;
  if (auto* p = std::get_if<PhasedPattern>(&cfg.trace.pattern))
    for (auto& ph : p->phases) {
      ph.spec->page_size = s.page_size;
      ph.spec->line_size = s.cache.line_size;
      ph.spec->seed = cfg.trace.seed;
    }

  auto rethrow = [](const std::invalid_argument& e) {
    const std::string msg = e.what();
    const auto colon = msg.find(": ");
    if (colon == std::string::npos) throw ConfigError("config", msg);
    throw ConfigError(msg.substr(0, colon), msg.substr(colon + 2));
  };
  try {
    s.validate();
    if (!cfg.trace_path) cfg.trace.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    rethrow(e);
  }
  return cfg;
}

Json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config", path.string() + ": " + e.what());
  }
}

Json to_json(const ExperimentConfig& cfg) {
  const auto& s = cfg.sim;
  Json j;
  j["preset"] = cfg.preset;
  j["geometry"] = {{"fast_capacity", s.fast_capacity},
                   {"slow_capacity", s.slow_capacity},
                   {"page_size", s.page_size}};
  j["cache"] = {{"l1_size", s.cache.l1_size},     {"l1_assoc", s.cache.l1_assoc},
                {"l1_latency", s.cache.l1_latency}, {"llc_size", s.cache.llc_size},
                {"llc_assoc", s.cache.llc_assoc}, {"llc_latency", s.cache.llc_latency},
                {"line_size", s.cache.line_size}};
  j["policy"] = {{"kind", to_string(s.policy.kind)},
                 {"threshold", s.policy.threshold},
                 {"epoch_us", s.policy.epoch_us},
                 {"duon", s.policy.duon},
                 {"epoch_blocking", s.epoch_blocking},
                 {"adapt_period", s.policy.adapt_period},
                 {"adapt_min", s.policy.adapt_min},
                 {"adapt_max", s.policy.adapt_max},
                 {"adapt_dead_zone", s.policy.adapt_dead_zone}};
  const auto& l = s.latencies;
  j["latencies"] = {{"fast_read", l.fast_read},         {"fast_write", l.fast_write},
                    {"slow_read", l.slow_read},         {"slow_write", l.slow_write},
                    {"buffer_access", l.buffer_access}, {"page_walk", l.page_walk},
                    {"ext_lookup", l.ext_lookup},       {"page_fault", l.page_fault},
                    {"line_invalidate", l.line_invalidate}};
  j["system"] = {{"cores", s.cores},
                 {"freq_ghz", s.freq_ghz},
                 {"tlb_entries", s.tlb_entries},
                 {"queue_capacity", s.queue_capacity},
                 {"contend", s.contend},
                 {"verify", s.verify},
                 {"seed", s.seed},
                 {"alloc_order",
                  s.alloc_order == AllocOrder::Shuffled ? "shuffled" : "sequential"}};
  j["tcm"] = {{"broadcast_cost", s.tcm.broadcast_cost},
              {"per_core_cost", s.tcm.per_core_cost},
              {"shootdown_cost", s.tcm.shootdown_cost}};
  j["baseline"] = {{"remap_capacity", s.remap_capacity},
                   {"charge_absent_lines", s.charge_absent_lines}};
  if (cfg.trace_path) {
    j["trace"] = {{"path", cfg.trace_path->string()}};
  } else {
    const auto& t = cfg.trace;
    Json tj;
    tj["pattern"] = pattern_name(t.pattern);
    if (const auto* z = std::get_if<ZipfPattern>(&t.pattern)) tj["zipf_s"] = z->s;
    if (const auto* h = std::get_if<HotSetPattern>(&t.pattern)) {
      tj["hot_pages"] = h->hot_pages;
      tj["hot_prob"] = h->hot_prob;
    }
    tj["footprint_pages"] = t.footprint_pages;
    tj["events_per_core"] = t.events_per_core;
    tj["write_ratio"] = t.write_ratio;
    tj["mean_icount"] = t.mean_icount;
    tj["seed"] = t.seed;
    tj["base_vpn"] = t.base_vpn;
    if (const auto* p = std::get_if<PhasedPattern>(&t.pattern)) {
      tj["phases"] = Json::array();
      for (const auto& ph : p->phases) {
        Json pj;
        pj["pattern"] = pattern_name(ph.spec->pattern);
        if (const auto* z = std::get_if<ZipfPattern>(&ph.spec->pattern))
          pj["zipf_s"] = z->s;
        if (const auto* h = std::get_if<HotSetPattern>(&ph.spec->pattern)) {
          pj["hot_pages"] = h->hot_pages;
          pj["hot_prob"] = h->hot_prob;
        }
        pj["footprint_pages"] = ph.spec->footprint_pages;
        pj["write_ratio"] = ph.spec->write_ratio;
        pj["mean_icount"] = ph.spec->mean_icount;
        pj["base_vpn"] = ph.spec->base_vpn;
        pj["events"] = ph.events;
        tj["phases"].push_back(pj);
      }
    }
    j["trace"] = tj;
  }
  j["output"] = {{"dir", cfg.output_dir.string()}};
  return j;
}

CoreTraces load_traces(const ExperimentConfig& cfg) {
  if (cfg.trace_path) return read_trace(*cfg.trace_path, cfg.sim.cores);
  return generate(cfg.trace, cfg.sim.cores);
}

}  // namespace duon
