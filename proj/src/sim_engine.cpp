#include "duon/sim_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "duon/rng.hpp"

namespace duon {

std::uint64_t ns_to_cycles(double ns, double freq_ghz) {
  if (ns < 0 || freq_ghz <= 0)
    throw std::invalid_argument("ns_to_cycles: negative time or frequency");
  return static_cast<std::uint64_t>(std::ceil(ns * freq_ghz - 1e-9));
}

LatencyTable LatencyTable::from_devices(const DeviceTiming& fast,
                                        const DeviceTiming& slow,
                                        double freq_ghz) {
  LatencyTable t;
  t.fast_read = ns_to_cycles(fast.read_ns, freq_ghz);
  t.fast_write = ns_to_cycles(fast.write_ns, freq_ghz);
  t.slow_read = ns_to_cycles(slow.read_ns, freq_ghz);
  t.slow_write = ns_to_cycles(slow.write_ns, freq_ghz);
  return t;
}

std::uint64_t SimConfig::epoch_cycles() const {
  const auto c = std::llround(policy.epoch_us * freq_ghz * 1000.0);
  return c < 1 ? 1 : static_cast<std::uint64_t>(c);
}

void SimConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument(field + ": " + why);
  };
  if (cores < 1) fail("system.cores", "must be >= 1");
  if (!(freq_ghz > 0)) fail("system.freq_ghz", "must be positive");
  cache.validate();
  if (page_size == 0 || page_size % cache.line_size != 0)
    fail("geometry.page_size", "must be a positive multiple of cache.line_size");
  if (fast_capacity == 0 || fast_capacity % page_size != 0)
    fail("geometry.fast_capacity", "must be a positive multiple of page_size");
  if (slow_capacity == 0 || slow_capacity % page_size != 0)
    fail("geometry.slow_capacity", "must be a positive multiple of page_size");
  policy.validate();
  if (remap_capacity == 0) fail("baseline.remap_capacity", "must be positive");
  if (tlb_entries == 0) fail("system.tlb_entries", "must be positive");
  if (queue_capacity == 0) fail("system.queue_capacity", "must be positive");
}

std::uint64_t SimStats::instructions() const {
  std::uint64_t n = 0;
  for (const auto& c : cores) n += c.instructions;
  return n;
}

std::uint64_t SimStats::max_cycles() const {
  std::uint64_t m = 0;
  for (const auto& c : cores) m = std::max(m, c.cycles);
  return m;
}

IpcReport compute_ipc(const SimStats& stats) {
  IpcReport r;
  const auto max = stats.max_cycles();
  if (max == 0) throw IpcError("IPC undefined: no core ran a cycle");
  for (const auto& c : stats.cores)
    r.per_core.push_back(c.cycles == 0 ? std::numeric_limits<double>::quiet_NaN()
                                       : double(c.instructions) / double(c.cycles));
  r.aggregate = double(stats.instructions()) / double(max);
  return r;
}

double normalized_ipc(double ipc, double baseline_ipc) {
  if (!(baseline_ipc > 0)) throw IpcError("baseline IPC must be positive");
  return ipc / baseline_ipc;
}

OracleMismatch::OracleMismatch(std::uint64_t event_index, std::uint32_t core,
                               VirtualPageId vpn, std::uint32_t line,
                               std::uint64_t expected, std::uint64_t got)
    : std::runtime_error("oracle mismatch at event " +
                         std::to_string(event_index) + " core " +
                         std::to_string(core) + " vpn " +
                         std::to_string(vpn.vpn) + " line " +
                         std::to_string(line) + ": expected " +
                         std::to_string(expected) + " got " +
                         std::to_string(got)),
      event_index(event_index),
      core(core),
      vpn(vpn),
      line(line),
      expected(expected),
      got(got) {}

Simulator::Simulator(const SimConfig& config, const CoreTraces& traces)
    : config_(config), traces_(traces) {
  config_.validate();
  if (traces.size() > config_.cores)
    throw std::invalid_argument("trace has events for core " +
                                std::to_string(traces.size() - 1) +
                                " but system.cores is " +
                                std::to_string(config_.cores));
  geom_ = config_.geometry();
  geom_.require_nonempty();
  lpp_ = config_.lines_per_page();
  const bool duon = config_.policy.duon;

  frames_ = std::make_unique<FrameMap>(geom_);
  memory_ = std::make_unique<PhysicalMemory>(geom_, lpp_);
  TranslationConfig tc;
  tc.cores = config_.cores;
  tc.tlb_entries = config_.tlb_entries;
  tc.remap_aware = duon;
  tc.tcm = config_.tcm;
  tc.alloc_order = config_.alloc_order;
  tc.alloc_seed = config_.seed;
  translation_ = std::make_unique<Translation>(geom_, *frames_, tc);
  caches_ = std::make_unique<CacheHierarchy>(config_.cache, config_.cores, lpp_);

  MigrationConfig mc;
  mc.lines_per_page = lpp_;
  mc.queue_capacity = config_.queue_capacity;
  mc.contend = config_.contend;
  const auto& l = config_.latencies;
  mc.latency = {l.fast_read, l.fast_write, l.slow_read, l.slow_write,
                l.buffer_access};
  controller_ = std::make_unique<MigrationController>(
      mc, geom_, *frames_, *memory_, *translation_, duon);
  controller_->on_retire([this](const JobRecord& r) { on_retire(r); });
  policy_ = std::make_unique<MigrationPolicy>(config_.policy, geom_.total_pages());
  if (!duon) remap_ = std::make_unique<RemapTable>(config_.remap_capacity);

  hooks_.pinned = [this](UnifiedPageId ua) { return controller_->owns(ua); };
  hooks_.invalidate_lines = [this](UnifiedPageId ua) {
    const auto [inv, wb] = caches_->invalidate_page_lines(
        ua, [this](std::uint64_t a, std::uint64_t v) { writeback(a, v); });
    return LineInvalidation{inv, wb};
  };
  hooks_.save_page = [this](VirtualPageId vpn, UnifiedPageId ua) {
    auto& lines = backing_[vpn.vpn];
    lines.resize(lpp_);
    const auto frame = frames_->frame_of(ua);
    for (std::uint32_t i = 0; i < lpp_; ++i) lines[i] = memory_->read(frame, i);
  };
  hooks_.load_page = [this](VirtualPageId vpn, UnifiedPageId ua) {
    const auto frame = frames_->frame_of(ua);
    auto it = backing_.find(vpn.vpn);
    for (std::uint32_t i = 0; i < lpp_; ++i)
      memory_->write(frame, i, it == backing_.end() ? 0 : it->second[i]);
  };

  cursor_.assign(config_.cores, 0);
  stats_.cores.resize(config_.cores);
  epoch_cycles_ = config_.epoch_cycles();
  empty_bits_ = BitVector(lpp_);
}

Simulator::~Simulator() = default;

std::optional<std::uint32_t> Simulator::next_core() const {
  std::optional<std::uint32_t> best;
  std::uint64_t best_t = 0;
  for (std::uint32_t c = 0; c < traces_.size(); ++c) {
    if (cursor_[c] >= traces_[c].size()) continue;
    const auto t = stats_.cores[c].cycles + traces_[c][cursor_[c]].icount;
    if (!best || t < best_t) {
      best = c;
      best_t = t;
    }
  }
  return best;
}

void Simulator::attribute(std::uint64_t cycles, std::uint64_t at) {
  if (cycles == 0) return;
  const auto idx = at / epoch_cycles_;
  if (stats_.overhead_per_epoch.size() <= idx)
    stats_.overhead_per_epoch.resize(idx + 1, 0);
  stats_.overhead_per_epoch[idx] += cycles;
}

void Simulator::charge_all(std::uint64_t cycles, std::uint64_t at) {
  if (cycles == 0) return;
  for (auto& c : stats_.cores) {
    c.cycles += cycles;
    c.overhead_cycles += cycles;
  }
  attribute(cycles * stats_.cores.size(), at);
}

void Simulator::process_epochs(std::uint64_t now) {
  while (now >= next_epoch_ * epoch_cycles_) {
    epoch_boundary(next_epoch_, next_epoch_ * epoch_cycles_);
    ++next_epoch_;
  }
}

void Simulator::epoch_boundary(std::uint64_t index, std::uint64_t at) {
  controller_->advance(at);
  if (reconcile_pending_ && !controller_->active_job()) run_reconcile(at);
  const auto candidates = policy_->epoch_boundary(
      at, [this](UnifiedPageId ua) { return frames_->frame_of(ua).tier; });
  for (auto ua : candidates) submit(ua, at);
  if (config_.epoch_blocking && !candidates.empty()) {
    const auto end = controller_->drain(at);
    charge_all(end - at, at);
  }
  if (config_.policy.kind == PolicyKind::AdaptThold &&
      index % config_.policy.adapt_period == 0) {
    const double window =
        double(config_.policy.adapt_period) * double(epoch_cycles_);
    const auto before = policy_->threshold();
    policy_->adapt(double(window_instructions_) / window);
    if (policy_->threshold() != before) stats_.threshold_changes.push_back(index);
    window_instructions_ = 0;
  }
}

void Simulator::submit(UnifiedPageId ua, std::uint64_t now) {
  ++stats_.migration_requests;
  if (controller_->request_migration(ua, now) == RequestOutcome::Dropped)
    policy_->counters().reset(ua);
}

void Simulator::on_retire(const JobRecord& rec) {
  policy_->on_migrated(rec.hot_ua);
  policy_->on_migrated(rec.partner_ua);
  stats_.jobs.push_back(rec);
  if (config_.policy.duon) {
    // Every completion broadcast must leave the TLBs in agreement.
    const auto& tcm = translation_->coherence();
    std::vector<UnifiedPageId> done{rec.hot_ua};
    if (rec.pair) done.push_back(rec.partner_ua);
    for (auto ua : done) {
      ++stats_.coherence_checks;
      if (!tcm.agrees(ua, frames_->frame_of(ua)))
        throw CoherenceViolation("TLBs disagree after completion of ua " +
                                 std::to_string(ua.ua));
    }
    return;
  }
  std::vector<UnifiedPageId> moved{rec.hot_ua};
  if (rec.pair) moved.push_back(rec.partner_ua);
  baseline_record(moved, rec.end_cycle);
}

void Simulator::baseline_record(const std::vector<UnifiedPageId>& uas,
                                std::uint64_t at) {
  if (!remap_->can_insert(uas.size())) {
    ++stats_.remap_full_stalls;
    run_reconcile(at);
  }
  for (auto ua : uas) remap_->insert(ua);
  if (remap_->needs_reconcile()) {
    if (controller_->active_job())
      reconcile_pending_ = true;
    else
      run_reconcile(at);
  }
}

void Simulator::run_reconcile(std::uint64_t at) {
  if (controller_->active_job())
    throw StateError("reconciliation while a migration is in flight");
  reconcile_pending_ = false;
  if (remap_->size() == 0) return;
  ReconcileContext ctx{*translation_, *frames_, *caches_, *memory_,
                       [this](UnifiedPageId a, UnifiedPageId b) {
                         policy_->counters().swap(a, b);
                         controller_->rename_queued(a, b);
                       }};
  ReconcileCosts costs;
  costs.line_invalidate_cost = config_.latencies.line_invalidate;
  costs.charge_absent_lines = config_.charge_absent_lines;
  const auto rep = reconcile(*remap_, ctx, costs);
  ++stats_.reconciliations;
  stats_.shootdown_events += rep.shootdown_events;
  stats_.shootdown_cycles += rep.shootdown_cycles;
  stats_.tlb_shootdowns += rep.tlb_shootdowns;
  stats_.lines_invalidated += rep.lines_invalidated;
  stats_.invalidation_cycles += rep.invalidation_cycles;
  // Shootdown interrupts stop every core.
  charge_all(rep.overhead_cycles, at);
}

void Simulator::writeback(std::uint64_t line_addr, std::uint64_t value) {
  const auto ua = caches_->page_of(line_addr);
  const auto off = caches_->offset_of(line_addr);
  if (controller_->owns(ua))
    controller_->write_line(ua, off, value);
  else
    memory_->write(frames_->frame_of(ua), off, value);
}

std::uint64_t Simulator::fault_in(std::uint32_t core, VirtualPageId vpn,
                                  std::uint64_t now) {
  const auto res = translation_->handle_page_fault(vpn, now, hooks_);
  if (!res.allocated) return 0;
  ++stats_.page_faults;
  ++stats_.cores[core].page_faults;
  const auto ua = res.entry.ua;
  std::uint64_t cost = config_.latencies.page_fault;
  if (res.evicted) {
    stats_.fault_lines_invalidated += res.lines.invalidated;
    stats_.fault_tlb_invalidations += res.tlb_invalidations;
    cost += res.lines.invalidated * config_.latencies.line_invalidate;
    if (res.evicted_dirty)
      cost += std::uint64_t{lpp_} *
              config_.latencies.write(frames_->frame_of(ua).tier);
  }
  policy_->counters().reset(ua);
  if (remap_ && !frames_->is_identity(ua)) {
    if (!remap_->can_insert(1)) {
      // Table full: the faulting core waits for the in-flight job, then for
      // reconciliation.
      const auto end = controller_->drain(now);
      cost += end - now;
      ++stats_.remap_full_stalls;
      run_reconcile(end);
    }
    remap_->insert(ua);
  }
  return cost;
}

bool Simulator::step() {
  const auto next = next_core();
  if (!next) return false;
  const std::uint32_t c = *next;
  const auto& ev = traces_[c][cursor_[c]];
  const std::uint64_t local_index = cursor_[c]++;
  const std::uint64_t global_index = event_index_++;
  auto& cs = stats_.cores[c];

  const std::uint64_t now = cs.cycles + ev.icount;
  clock_ = std::max(clock_, now);
  process_epochs(now);
  controller_->advance(now);
  if (reconcile_pending_ && !controller_->active_job()) run_reconcile(now);

  cs.cycles += ev.icount;
  cs.issue_cycles += ev.icount;
  cs.instructions += ev.icount;
  window_instructions_ += ev.icount;
  ++cs.events;
  const bool write = ev.op == Op::Write;
  ++(write ? cs.writes : cs.reads);

  const VirtualPageId vpn{ev.vaddr / config_.page_size};
  const auto line = static_cast<std::uint32_t>((ev.vaddr % config_.page_size) /
                                               config_.cache.line_size);
  const auto& lat = config_.latencies;
  Access a;

  if (!translation_->find(vpn)) a.overhead += fault_in(c, vpn, now);
  const auto tr = translation_->translate_for_cache(c, vpn);
  if (tr.tlb_hit) {
    ++cs.tlb_hits;
  } else {
    ++cs.tlb_misses;
    a.cache += lat.page_walk;
  }
  const auto ua = tr.ua;
  translation_->touch(vpn, now);
  std::optional<UnifiedPageId> candidate;

  const auto la = caches_->line_addr(ua, line);
  const auto acc = caches_->access(c, la);
  a.cache += acc.latency;
  std::uint64_t value = 0;
  const char* served = "L1";
  PhysicalFrame target{};
  if (acc.level == AccessLevel::L1Hit) {
    ++cs.l1_hits;
    value = *caches_->peek(la);
  } else if (acc.level == AccessLevel::LlcHit) {
    ++cs.llc_hits;
    served = "LLC";
    value = *caches_->peek(la);
  } else {
    ++cs.llc_misses;
    // Second access to the extended TLB (or page table) for the memory-side
    // address.
    const auto probe = translation_->extended_tlb_probe(c, vpn);
    a.cache += probe ? lat.ext_lookup : lat.page_walk;
    const std::uint64_t arrival = now + a.overhead + a.cache;
    if (controller_->owns(ua)) {
      const auto ic = controller_->intercept_access(c, vpn, line, write, arrival);
      switch (ic.kind) {
        case Intercept::Kind::Enqueued:
          a.stall += ic.ready_cycle - arrival;
          a.memory += lat.buffer_access;
          served = "WAIT";
          break;
        case Intercept::Kind::ServedFromBuffer:
          a.memory += lat.buffer_access;
          served = "BUF";
          break;
        case Intercept::Kind::RedirectedToFrame:
          a.stall += controller_->contention_delay(ic.frame.tier, arrival);
          a.memory += lat.read(ic.frame.tier);
          served = "MEM";
          target = ic.frame;
          break;
      }
      value = controller_->read_line(ua, line);
    } else {
      if (config_.policy.duon) {
        const auto state = probe ? RemapState::of(*probe)
                                 : RemapState::of(*translation_->find(vpn));
        const auto t = resolve_memory_target(state, line, empty_bits_, geom_);
        const auto* fa = std::get_if<FrameAccess>(&t);
        if (!fa) throw StateError("page outside a job resolved to a buffer");
        target = fa->frame;
        if (target != frames_->frame_of(ua))
          throw StateError("extended entry for vpn " + std::to_string(vpn.vpn) +
                           " points away from the page's frame");
      } else {
        target = frames_->frame_of(ua);
        if (!frames_->is_identity(ua) && !remap_->contains(ua))
          throw StateError("remapped page missing from the remap table");
      }
      a.stall += controller_->contention_delay(target.tier, arrival);
      a.memory += lat.read(target.tier);
      value = memory_->read(target, line);
      served = "MEM";
    }
    if (const auto ev_line = caches_->fill(c, la, value); ev_line && ev_line->dirty)
      writeback(ev_line->line_addr, ev_line->value);
    // Hotness counters sit at the memory side and see LLC misses only.
    candidate =
        policy_->record_access(ua, write, now, frames_->frame_of(ua).tier);
  }

  const std::uint64_t key = vpn.vpn * lpp_ + line;
  if (write) {
    const auto v = write_value(c, local_index);
    caches_->write(la, v);
    translation_->set_dirty(c, vpn);
    if (config_.verify) shadow_[key] = v;
  } else if (config_.verify) {
    const auto it = shadow_.find(key);
    const std::uint64_t expected = it == shadow_.end() ? 0 : it->second;
    ++stats_.oracle_reads_checked;
    if (value != expected)
      throw OracleMismatch(global_index, c, vpn, line, expected, value);
  }

  cs.cache_cycles += a.cache;
  cs.memory_cycles += a.memory;
  cs.stall_cycles += a.stall;
  cs.overhead_cycles += a.overhead;
  cs.cycles += a.cache + a.memory + a.stall + a.overhead;
  stats_.migration_stall_cycles += a.stall;
  attribute(a.stall + a.overhead, now);

  if (config_.record_order) stats_.issue_order.push_back(c);
  if (log_) {
    *log_ << "event=" << global_index << " core=" << c << " issue=" << now
          << " op=" << (write ? 'W' : 'R') << " vpn=" << vpn.vpn
          << " line=" << line << " ua=" << ua.ua << " tlb=" << (tr.tlb_hit ? "hit" : "miss")
          << " served=" << served;
    if (std::string_view(served) == "MEM") *log_ << " frame=" << to_string(target);
    *log_ << " cache=" << a.cache << " memory=" << a.memory
          << " stall=" << a.stall << " overhead=" << a.overhead << '\n';
  }
  if (candidate) submit(*candidate, now);
  return true;
}

std::uint64_t Simulator::observe(VirtualPageId vpn, std::uint32_t line) const {
  const auto* e = translation_->find(vpn);
  if (!e) {
    auto it = backing_.find(vpn.vpn);
    return it == backing_.end() ? 0 : it->second.at(line);
  }
  if (auto v = caches_->peek(caches_->line_addr(e->ua, line))) return *v;
  if (controller_->owns(e->ua)) return controller_->read_line(e->ua, line);
  return memory_->read(frames_->frame_of(e->ua), line);
}

void Simulator::audit_end_state() const {
  for (const auto& [key, expected] : shadow_) {
    const VirtualPageId vpn{key / lpp_};
    const auto line = static_cast<std::uint32_t>(key % lpp_);
    const auto got = observe(vpn, line);
    if (got != expected)
      throw OracleMismatch(event_index_, 0, vpn, line, expected, got);
  }
}

void Simulator::finalize() {
  if (finished_) return;
  finished_ = true;
  controller_->drain(clock_);
  if (reconcile_pending_) run_reconcile(clock_);
  for (std::size_t c = 0; c < stats_.cores.size(); ++c)
    if (!stats_.cores[c].ledger_balanced())
      throw std::logic_error("cycle ledger out of balance on core " +
                             std::to_string(c));
  if (config_.verify) audit_end_state();

  const auto& ms = controller_->stats();
  stats_.migrations = ms.retired;
  stats_.migrations_started = ms.started;
  stats_.pair_migrations = ms.pair;
  stats_.one_way_migrations = ms.one_way;
  stats_.remigrations = ms.remigrations;
  stats_.migrations_dropped = ms.dropped;
  stats_.buffer_served = ms.buffer_served;
  stats_.redirected = ms.redirected;
  stats_.wait_enqueued = ms.wait_enqueued;
  stats_.line_transfers = ms.line_transfers;
  const auto& ts = translation_->coherence().stats();
  stats_.tcm_broadcasts = ts.broadcasts;
  stats_.tcm_entry_updates = ts.entry_updates;
  stats_.llc_writebacks = caches_->stats().llc_writebacks;
  stats_.final_threshold = policy_->threshold();

  const auto max = stats_.max_cycles();
  const auto epochs = (max + epoch_cycles_ - 1) / epoch_cycles_;
  auto& series = stats_.overhead_per_epoch;
  if (series.size() > epochs && epochs > 0) {
    // Charges landing after the last core finished belong to the last epoch.
    for (std::size_t i = epochs; i < series.size(); ++i)
      series[epochs - 1] += series[i];
  }
  series.resize(epochs, 0);
}

SimStats Simulator::run() {
  while (step()) {
  }
  finalize();
  return stats_;
}

SimStats run(const SimConfig& config, const CoreTraces& traces,
             std::ostream* trace_log) {
  Simulator sim(config, traces);
  sim.set_trace_log(trace_log);
  return sim.run();
}

std::unordered_map<std::uint64_t, std::uint64_t> oracle_replay(
    const CoreTraces& traces, const std::vector<std::uint32_t>& order,
    std::uint64_t page_size, std::uint32_t line_size) {
  std::unordered_map<std::uint64_t, std::uint64_t> mem;
  std::vector<std::size_t> cursor(traces.size(), 0);
  const std::uint64_t lpp = page_size / line_size;
  for (auto c : order) {
    const auto idx = cursor.at(c)++;
    const auto& e = traces[c].at(idx);
    if (e.op != Op::Write) continue;
    const auto key = (e.vaddr / page_size) * lpp + (e.vaddr % page_size) / line_size;
    mem[key] = write_value(c, idx);
  }
  return mem;
}

}  // namespace duon
