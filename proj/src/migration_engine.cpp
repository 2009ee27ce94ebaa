#include "duon/migration_engine.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace duon {

const char* to_string(MigrationStep s) {
  switch (s) {
    case MigrationStep::S1_Decide: return "S1";
    case MigrationStep::S2_VictimToHotBuffer: return "S2";
    case MigrationStep::S3_HotPageToFast: return "S3";
    case MigrationStep::S4_BufferToSlow: return "S4";
    case MigrationStep::S5_Complete: return "S5";
  }
  return "?";
}

const char* to_string(RequestOutcome o) {
  switch (o) {
    case RequestOutcome::Started: return "started";
    case RequestOutcome::Queued: return "queued";
    case RequestOutcome::RejectedAlreadyFast: return "rejected-already-fast";
    case RequestOutcome::RejectedInFlight: return "rejected-in-flight";
    case RequestOutcome::RejectedNotResident: return "rejected-not-resident";
    case RequestOutcome::Dropped: return "dropped";
  }
  return "?";
}

TransferBuffer::TransferBuffer(BufferKind which, std::uint32_t lines)
    : which_(which), data_(lines, 0), held_(lines, 0) {}

void TransferBuffer::assign(VirtualPageId owner) {
  clear();
  owner_ = owner;
}

void TransferBuffer::clear() {
  owner_.reset();
  std::fill(data_.begin(), data_.end(), 0);
  std::fill(held_.begin(), held_.end(), 0);
  held_count_ = 0;
}

void TransferBuffer::hold(std::uint32_t line, std::uint64_t value) {
  if (!held_.at(line)) ++held_count_;
  held_[line] = 1;
  data_[line] = value;
}

void TransferBuffer::release(std::uint32_t line) {
  if (held_.at(line)) --held_count_;
  held_[line] = 0;
}

void TransferBuffer::write(std::uint32_t line, std::uint64_t value) {
  if (!held_.at(line))
    throw StateError("write to a buffer line that is not held");
  data_[line] = value;
}

std::uint64_t WaitQueue::drain_until(std::uint64_t now) {
  const auto before = pending_.size();
  std::erase_if(pending_, [now](const WaitEntry& e) { return e.ready_cycle <= now; });
  return before - pending_.size();
}

std::size_t WaitQueue::pending_for(VirtualPageId vpn) const {
  return static_cast<std::size_t>(std::count_if(
      pending_.begin(), pending_.end(),
      [vpn](const WaitEntry& e) { return e.vpn == vpn; }));
}

void MigrationQueue::issue(Tier tier, const MigrationQueueEntry& e) {
  queues_[static_cast<int>(tier)].push_back(e);
}

MigrationQueueEntry MigrationQueue::service(Tier tier) {
  auto& q = queues_[static_cast<int>(tier)];
  if (q.empty()) throw StateError("service of an empty migration queue");
  auto e = q.front();
  q.pop_front();
  ++serviced_[static_cast<int>(tier)];
  return e;
}

std::size_t MigrationQueue::size(Tier tier) const {
  return queues_[static_cast<int>(tier)].size();
}

std::uint64_t MigrationQueue::serviced(Tier tier) const {
  return serviced_[static_cast<int>(tier)];
}

MigrationController::MigrationController(MigrationConfig config,
                                         const MemoryGeometry& geom,
                                         FrameMap& frames,
                                         PhysicalMemory& memory,
                                         Translation& translation,
                                         bool remap_aware)
    : config_(config),
      geom_(geom),
      frames_(frames),
      memory_(memory),
      translation_(translation),
      remap_aware_(remap_aware),
      hot_buffer_(BufferKind::Hot, config.lines_per_page),
      cold_buffer_(BufferKind::Cold, config.lines_per_page) {
  if (config.lines_per_page == 0)
    throw std::invalid_argument("lines_per_page must be positive");
  if (remap_aware != translation.remap_aware())
    throw ModeError("controller and translation disagree on remap mode");
}

RequestOutcome MigrationController::request_migration(UnifiedPageId hot_ua,
                                                      std::uint64_t now) {
  advance(now);
  if (!geom_.contains(hot_ua))
    throw RangeError("ua " + std::to_string(hot_ua.ua) + " outside memory");
  if (!translation_.owner_of(hot_ua)) {
    ++stats_.rejected;
    return RequestOutcome::RejectedNotResident;
  }
  if (frames_.frame_of(hot_ua).tier == Tier::Fast) {
    ++stats_.rejected;
    return RequestOutcome::RejectedAlreadyFast;
  }
  if (owns(hot_ua) ||
      std::find(queue_.begin(), queue_.end(), hot_ua) != queue_.end()) {
    ++stats_.rejected;
    return RequestOutcome::RejectedInFlight;
  }
  if (active_) {
    if (queue_.size() >= config_.queue_capacity) {
      ++stats_.dropped;
      return RequestOutcome::Dropped;
    }
    queue_.push_back(hot_ua);
    ++stats_.queued;
    return RequestOutcome::Queued;
  }
  start_job(hot_ua, std::max(now, clock_));
  return RequestOutcome::Started;
}

VirtualPageId MigrationController::select_victim(std::uint64_t) const {
  const EptEntry* best = nullptr;
  for (std::uint64_t f = 0; f < geom_.fast_pages(); ++f) {
    const auto ua = frames_.owner_of({Tier::Fast, f});
    const auto vpn = translation_.owner_of(ua);
    if (!vpn) continue;
    const auto* e = translation_.find(*vpn);
    if (!best || e->last_access < best->last_access ||
        (e->last_access == best->last_access && e->vpn < best->vpn))
      best = e;
  }
  if (!best) throw CapacityError("no resident page in the fast tier");
  return best->vpn;
}

std::optional<UnifiedPageId> MigrationController::free_fast_owner() {
  while (fast_scan_ < geom_.fast_pages()) {
    const auto ua = frames_.owner_of({Tier::Fast, fast_scan_});
    if (!translation_.allocated(ua)) return ua;
    ++fast_scan_;
  }
  return std::nullopt;
}

void MigrationController::start_job(UnifiedPageId hot_ua, std::uint64_t now) {
  MigrationJob job;
  job.id = next_id_++;
  job.hot_ua = hot_ua;
  job.hot_vpn = *translation_.owner_of(hot_ua);
  job.lines_per_page = config_.lines_per_page;
  job.bitvec_in = BitVector(config_.lines_per_page);
  job.bitvec_out = BitVector(config_.lines_per_page);
  job.remigration = !frames_.is_identity(hot_ua);

  if (auto free_ua = free_fast_owner()) {
    job.partner_ua = *free_ua;
    job.pair = false;
    translation_.reserve_free(*free_ua);
  } else {
    job.victim_vpn = select_victim(now);
    job.partner_ua = translation_.find(*job.victim_vpn)->ua;
    job.pair = true;
  }
  job.hot_source = frames_.frame_of(job.hot_ua);
  job.hot_destination = frames_.frame_of(job.partner_ua);

  std::uint64_t tcm_start = 0;
  if (remap_aware_) {
    if (job.pair)
      tcm_start += translation_.mark_migration_start(
          *job.victim_vpn, MigrationRole::Victim, true);
    tcm_start += translation_.mark_migration_start(
        job.hot_vpn, MigrationRole::Incoming, job.pair);
  }

  const auto& lat = config_.latency;
  const std::uint64_t n = config_.lines_per_page;
  job.s2_line = lat.read(job.hot_destination.tier) + lat.buffer_access;
  job.s3_read = lat.read(job.hot_source.tier);
  job.s3_line = job.s3_read + lat.write(job.hot_destination.tier);
  job.s4_line = lat.buffer_access + lat.write(job.hot_source.tier);

  job.start_cycle = now;
  job.s2_start = now + tcm_start;
  job.s3_start = job.s2_start + (job.pair ? n * job.s2_line : 0);
  job.s4_start = job.s3_start + n * job.s3_line;
  job.data_done = job.s4_start + (job.pair ? n * job.s4_line : 0);
  const std::uint64_t completions = job.pair ? 2 : 1;
  job.retire_cycle =
      job.data_done +
      (remap_aware_ ? completions * translation_.coherence().ack_latency() : 0);
  job.step = job.pair ? MigrationStep::S2_VictimToHotBuffer
                      : MigrationStep::S3_HotPageToFast;

  if (job.pair) hot_buffer_.assign(*job.victim_vpn);
  cold_buffer_.assign(job.hot_vpn);

  ++stats_.started;
  ++(job.pair ? stats_.pair : stats_.one_way);
  if (job.remigration) ++stats_.remigrations;
  clock_ = std::max(clock_, now);
  active_ = std::move(job);
}

void MigrationController::start_next(std::uint64_t now) {
  while (!active_ && !queue_.empty()) {
    const auto ua = queue_.front();
    queue_.pop_front();
    if (!translation_.owner_of(ua) || frames_.frame_of(ua).tier == Tier::Fast) {
      ++stats_.cancelled;
      continue;
    }
    start_job(ua, now);
  }
}

std::optional<std::uint64_t> MigrationController::next_event_time() const {
  if (!active_) return std::nullopt;
  const auto& j = *active_;
  switch (j.step) {
    case MigrationStep::S2_VictimToHotBuffer:
      return j.s2_start + (j.s2_done + 1) * j.s2_line;
    case MigrationStep::S3_HotPageToFast:
      if (!j.s3_in_buffer) return j.s3_start + j.s3_done * j.s3_line + j.s3_read;
      return j.s3_start + (j.s3_done + 1) * j.s3_line;
    case MigrationStep::S4_BufferToSlow:
      return j.s4_start + (j.s4_done + 1) * j.s4_line;
    case MigrationStep::S5_Complete:
      return j.retire_cycle;
    case MigrationStep::S1_Decide:
      break;
  }
  throw StateError("job in an undefined step");
}

void MigrationController::apply_next_event() {
  auto& j = *active_;
  const auto t = *next_event_time();
  const std::uint32_t n = config_.lines_per_page;
  switch (j.step) {
    case MigrationStep::S2_VictimToHotBuffer: {
      const auto i = j.s2_done;
      migration_queue_.issue(j.hot_destination.tier, {*j.victim_vpn, i, t});
      migration_queue_.service(j.hot_destination.tier);
      hot_buffer_.hold(i, memory_.read(j.hot_destination, i));
      ++stats_.line_transfers;
      if (++j.s2_done == n) j.step = MigrationStep::S3_HotPageToFast;
      break;
    }
    case MigrationStep::S3_HotPageToFast: {
      const auto i = j.s3_done;
      if (!j.s3_in_buffer) {
        migration_queue_.issue(j.hot_source.tier, {j.hot_vpn, i, t});
        migration_queue_.service(j.hot_source.tier);
        cold_buffer_.hold(i, memory_.read(j.hot_source, i));
        j.s3_in_buffer = true;
        break;
      }
      memory_.write(j.hot_destination, i, cold_buffer_.value(i));
      cold_buffer_.release(i);
      j.bitvec_in.set(i);
      j.s3_in_buffer = false;
      ++stats_.line_transfers;
      if (++j.s3_done == n) {
        if (remap_aware_) {
          translation_.assign_remapped(j.hot_vpn, j.hot_destination);
          if (j.pair) translation_.assign_remapped(*j.victim_vpn, j.hot_source);
        }
        j.step = j.pair ? MigrationStep::S4_BufferToSlow
                        : MigrationStep::S5_Complete;
      }
      break;
    }
    case MigrationStep::S4_BufferToSlow: {
      const auto i = j.s4_done;
      memory_.write(j.hot_source, i, hot_buffer_.value(i));
      hot_buffer_.release(i);
      j.bitvec_out.set(i);
      ++stats_.line_transfers;
      if (++j.s4_done == n) j.step = MigrationStep::S5_Complete;
      break;
    }
    case MigrationStep::S5_Complete:
      retire();
      break;
    case MigrationStep::S1_Decide:
      throw StateError("job in an undefined step");
  }
  clock_ = std::max(clock_, t);
}

void MigrationController::retire() {
  const auto j = std::move(*active_);
  active_.reset();
  frames_.swap(j.hot_ua, j.partner_ua);
  if (remap_aware_) {
    if (j.pair)
      translation_.mark_migration_complete(*j.victim_vpn, j.hot_source, true);
    translation_.mark_migration_complete(j.hot_vpn, j.hot_destination, j.pair);
  }
  if (!j.pair) translation_.release_reserved(j.partner_ua);
  stats_.wait_served += wait_queue_.drain_until(j.retire_cycle);
  if (wait_queue_.pending_for(j.hot_vpn) != 0 ||
      (j.victim_vpn && wait_queue_.pending_for(*j.victim_vpn) != 0))
    throw StateError("job retired with requests still waiting");
  hot_buffer_.clear();
  cold_buffer_.clear();
  ++stats_.retired;

  JobRecord rec;
  rec.id = j.id;
  rec.hot_vpn = j.hot_vpn;
  rec.victim_vpn = j.victim_vpn;
  rec.hot_ua = j.hot_ua;
  rec.partner_ua = j.partner_ua;
  rec.pair = j.pair;
  rec.remigration = j.remigration;
  rec.start_cycle = j.start_cycle;
  rec.end_cycle = j.retire_cycle;
  rec.stalled_requests = j.stalled_requests;
  rec.buffer_served = j.buffer_served;
  rec.redirected = j.redirected;
  if (retire_hook_) retire_hook_(rec);
  start_next(j.retire_cycle);
}

void MigrationController::advance(std::uint64_t now) {
  while (auto t = next_event_time()) {
    if (*t > now) break;
    apply_next_event();
  }
  stats_.wait_served += wait_queue_.drain_until(now);
  clock_ = std::max(clock_, now);
}

std::uint64_t MigrationController::drain(std::uint64_t now) {
  advance(now);
  while (active_) apply_next_event();
  stats_.wait_served += wait_queue_.drain_until(clock_);
  return clock_;
}

bool MigrationController::owns(UnifiedPageId ua) const {
  return active_ && (ua == active_->hot_ua || ua == active_->partner_ua);
}

void MigrationController::rename_queued(UnifiedPageId a, UnifiedPageId b) {
  if (owns(a) || owns(b)) throw StateError("rename of a page in flight");
  for (auto& q : queue_) {
    if (q == a)
      q = b;
    else if (q == b)
      q = a;
  }
}

bool MigrationController::is_victim(UnifiedPageId ua) const {
  return active_ && active_->pair && ua == active_->partner_ua;
}

Intercept MigrationController::intercept_access(std::uint32_t core,
                                                VirtualPageId vpn,
                                                std::uint32_t line, bool write,
                                                std::uint64_t arrival) {
  if (!active_) throw StateError("no migration in flight");
  auto& j = *active_;
  if (line >= config_.lines_per_page)
    throw RangeError("line " + std::to_string(line) + " outside page");
  Intercept out;
  if (j.victim_vpn && vpn == *j.victim_vpn) {
    const auto landed = j.s2_start + (std::uint64_t{line} + 1) * j.s2_line;
    const auto drained = j.s4_start + (std::uint64_t{line} + 1) * j.s4_line;
    out.buffer = BufferKind::Hot;
    if (arrival < landed) {
      out.kind = Intercept::Kind::Enqueued;
      out.ready_cycle = landed;
      wait_queue_.push({core, vpn, line, write, arrival, landed});
      ++j.stalled_requests;
      ++stats_.wait_enqueued;
    } else if (arrival < drained) {
      out.kind = Intercept::Kind::ServedFromBuffer;
      ++j.buffer_served;
      ++stats_.buffer_served;
    } else {
      out.kind = Intercept::Kind::RedirectedToFrame;
      out.frame = j.hot_source;
      ++j.redirected;
      ++stats_.redirected;
    }
    return out;
  }
  if (vpn != j.hot_vpn)
    throw StateError("vpn " + std::to_string(vpn.vpn) + " is not in flight");
  const auto mid = j.s3_start + std::uint64_t{line} * j.s3_line + j.s3_read;
  const auto end = j.s3_start + (std::uint64_t{line} + 1) * j.s3_line;
  out.buffer = BufferKind::Cold;
  if (arrival < mid) {
    out.kind = Intercept::Kind::RedirectedToFrame;
    out.frame = j.hot_source;
    ++j.redirected;
    ++stats_.redirected;
  } else if (arrival < end) {
    out.kind = Intercept::Kind::ServedFromBuffer;
    ++j.buffer_served;
    ++stats_.buffer_served;
  } else {
    out.kind = Intercept::Kind::RedirectedToFrame;
    out.frame = j.hot_destination;
    ++j.redirected;
    ++stats_.redirected;
  }
  return out;
}

std::uint64_t MigrationController::read_line(UnifiedPageId ua,
                                             std::uint32_t line) const {
  if (!owns(ua)) throw StateError("page is not in flight");
  const auto& j = *active_;
  if (ua == j.hot_ua) {
    if (j.bitvec_in.test(line)) return memory_.read(j.hot_destination, line);
    if (cold_buffer_.holds(line)) return cold_buffer_.value(line);
    return memory_.read(j.hot_source, line);
  }
  if (!is_victim(ua)) throw StateError("reserved frame has no data");
  if (hot_buffer_.holds(line)) return hot_buffer_.value(line);
  if (j.bitvec_out.test(line)) return memory_.read(j.hot_source, line);
  return memory_.read(j.hot_destination, line);
}

void MigrationController::write_line(UnifiedPageId ua, std::uint32_t line,
                                     std::uint64_t value) {
  if (!owns(ua)) throw StateError("page is not in flight");
  const auto& j = *active_;
  if (ua == j.hot_ua) {
    if (j.bitvec_in.test(line)) return memory_.write(j.hot_destination, line, value);
    if (cold_buffer_.holds(line)) return cold_buffer_.write(line, value);
    return memory_.write(j.hot_source, line, value);
  }
  if (!is_victim(ua)) throw StateError("reserved frame has no data");
  if (hot_buffer_.holds(line)) return hot_buffer_.write(line, value);
  if (j.bitvec_out.test(line)) return memory_.write(j.hot_source, line, value);
  memory_.write(j.hot_destination, line, value);
}

const BitVector& MigrationController::bitvec_for(UnifiedPageId ua) const {
  if (!owns(ua)) throw StateError("page is not in flight");
  return ua == active_->hot_ua ? active_->bitvec_in : active_->bitvec_out;
}

std::uint64_t MigrationController::contention_delay(
    Tier tier, std::uint64_t arrival) const {
  if (!config_.contend || !active_) return 0;
  const auto& j = *active_;
  // Only the controller's own reads go through the migration queue; a
  // demand read waits out the one in service on its tier.
  auto wait = [arrival](std::uint64_t start, std::uint64_t slot,
                        std::uint64_t read) {
    if (slot == 0 || arrival < start) return std::uint64_t{0};
    const auto into = (arrival - start) % slot;
    return into < read ? read - into : 0;
  };
  if (arrival >= j.s2_start && arrival < j.s3_start)
    return tier == j.hot_destination.tier
               ? wait(j.s2_start, j.s2_line,
                      config_.latency.read(j.hot_destination.tier))
               : 0;
  if (arrival >= j.s3_start && arrival < j.s4_start)
    return tier == j.hot_source.tier ? wait(j.s3_start, j.s3_line, j.s3_read)
                                     : 0;
  return 0;
}

std::optional<InFlightLine> MigrationController::in_flight_line(
    UnifiedPageId ua, std::uint32_t line) const {
  if (!owns(ua)) return std::nullopt;
  const auto& j = *active_;
  if (ua == j.hot_ua)
    return InFlightLine{j.hot_destination, BufferKind::Cold,
                        cold_buffer_.holds(line)};
  if (!is_victim(ua)) return std::nullopt;
  return InFlightLine{j.hot_source, BufferKind::Hot, hot_buffer_.holds(line)};
}

}  // namespace duon
