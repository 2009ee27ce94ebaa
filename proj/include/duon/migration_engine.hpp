#pragma once

// Migration controller: hot/cold transfer buffers, per-job bit vectors, the
// wait queue for LLC requests to in-flight pages, per-tier migration queues,
// and the five-step job state machine.
//
// Job timeline (pair migration, L = per-line transfer latency):
//   start                 flags raised, start broadcasts (ack latency)
//   S2  victim line i     fast frame -> hot buffer       L2 = fast read + buffer
//   S3  hot-page line i   slow frame -> cold buffer -> fast frame
//                                                        L3 = slow read + fast write
//   S4  victim line i     hot buffer -> slow frame       L4 = buffer + slow write
//   S5  frames swapped, completion broadcasts, job retires
// A one-way migration into a free fast frame runs only S3 then S5.
//
// Line transfers are serialized, one at a time, so every transfer time is
// known when the job starts. Functional state (which copy is authoritative)
// is applied lazily by advance(); timing questions are answered from the
// schedule directly.

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <vector>

#include "duon/address_space.hpp"
#include "duon/bit_vector.hpp"
#include "duon/page_table.hpp"
#include "duon/translation.hpp"

namespace duon {

enum class MigrationStep : std::uint8_t {
  S1_Decide,
  S2_VictimToHotBuffer,
  S3_HotPageToFast,
  S4_BufferToSlow,
  S5_Complete,
};

const char* to_string(MigrationStep s);

struct DeviceLatencies {
  std::uint64_t fast_read = 90;
  std::uint64_t fast_write = 90;
  std::uint64_t slow_read = 256;
  std::uint64_t slow_write = 800;
  std::uint64_t buffer_access = 10;

  std::uint64_t read(Tier t) const {
    return t == Tier::Fast ? fast_read : slow_read;
  }
  std::uint64_t write(Tier t) const {
    return t == Tier::Fast ? fast_write : slow_write;
  }
};

struct MigrationConfig {
  std::uint32_t lines_per_page = 64;
  std::size_t queue_capacity = 64;
  // Demand accesses wait for the line transfer occupying their tier.
  bool contend = true;
  DeviceLatencies latency;
};

class TransferBuffer {
 public:
  TransferBuffer(BufferKind which, std::uint32_t lines);

  BufferKind which() const { return which_; }
  std::optional<VirtualPageId> owner() const { return owner_; }
  void assign(VirtualPageId owner);
  void clear();

  void hold(std::uint32_t line, std::uint64_t value);
  void release(std::uint32_t line);
  bool holds(std::uint32_t line) const { return held_.at(line) != 0; }
  std::uint64_t value(std::uint32_t line) const { return data_.at(line); }
  void write(std::uint32_t line, std::uint64_t value);
  std::uint32_t held_count() const { return held_count_; }

 private:
  BufferKind which_;
  std::optional<VirtualPageId> owner_;
  std::vector<std::uint64_t> data_;
  std::vector<std::uint8_t> held_;
  std::uint32_t held_count_ = 0;
};

struct WaitEntry {
  std::uint32_t core = 0;
  VirtualPageId vpn;
  std::uint32_t line = 0;
  bool write = false;
  std::uint64_t enqueue_cycle = 0;
  std::uint64_t ready_cycle = 0;
};

class WaitQueue {
 public:
  void push(const WaitEntry& e) { pending_.push_back(e); }
  // Serves every entry whose line has become available by `now`.
  std::uint64_t drain_until(std::uint64_t now);
  std::size_t pending_for(VirtualPageId vpn) const;
  std::size_t size() const { return pending_.size(); }
  const std::deque<WaitEntry>& entries() const { return pending_; }

 private:
  std::deque<WaitEntry> pending_;
};

struct MigrationQueueEntry {
  VirtualPageId vpn;
  std::uint32_t line = 0;
  std::uint64_t issue_cycle = 0;
};

// Controller-issued line reads, FIFO per tier.
class MigrationQueue {
 public:
  void issue(Tier tier, const MigrationQueueEntry& e);
  MigrationQueueEntry service(Tier tier);
  std::size_t size(Tier tier) const;
  std::uint64_t serviced(Tier tier) const;

 private:
  std::deque<MigrationQueueEntry> queues_[2];
  std::uint64_t serviced_[2] = {0, 0};
};

struct MigrationJob {
  std::uint64_t id = 0;
  VirtualPageId hot_vpn;
  UnifiedPageId hot_ua;
  std::optional<VirtualPageId> victim_vpn;
  // Victim's unified page, or the unallocated owner of the free fast frame.
  UnifiedPageId partner_ua;
  bool pair = false;
  bool remigration = false;
  PhysicalFrame hot_source;       // victim's destination too
  PhysicalFrame hot_destination;  // victim's source in a pair
  MigrationStep step = MigrationStep::S1_Decide;
  BitVector bitvec_in;
  BitVector bitvec_out;
  std::uint32_t lines_per_page = 64;

  std::uint64_t start_cycle = 0;
  std::uint64_t s2_start = 0;
  std::uint64_t s3_start = 0;
  std::uint64_t s4_start = 0;
  std::uint64_t data_done = 0;
  std::uint64_t retire_cycle = 0;
  std::uint64_t s2_line = 0;
  std::uint64_t s3_line = 0;
  std::uint64_t s3_read = 0;
  std::uint64_t s4_line = 0;

  std::uint32_t s2_done = 0;
  std::uint32_t s3_done = 0;
  bool s3_in_buffer = false;
  std::uint32_t s4_done = 0;

  std::uint64_t stalled_requests = 0;
  std::uint64_t buffer_served = 0;
  std::uint64_t redirected = 0;
};

struct JobRecord {
  std::uint64_t id = 0;
  VirtualPageId hot_vpn;
  std::optional<VirtualPageId> victim_vpn;
  UnifiedPageId hot_ua;
  UnifiedPageId partner_ua;
  bool pair = false;
  bool remigration = false;
  std::uint64_t start_cycle = 0;
  std::uint64_t end_cycle = 0;
  std::uint64_t stalled_requests = 0;
  std::uint64_t buffer_served = 0;
  std::uint64_t redirected = 0;
};

enum class RequestOutcome : std::uint8_t {
  Started,
  Queued,
  RejectedAlreadyFast,
  RejectedInFlight,
  RejectedNotResident,
  Dropped,
};

const char* to_string(RequestOutcome o);

struct Intercept {
  enum class Kind : std::uint8_t { ServedFromBuffer, RedirectedToFrame, Enqueued };
  Kind kind = Kind::RedirectedToFrame;
  BufferKind buffer = BufferKind::Hot;
  PhysicalFrame frame;
  // For Enqueued: when the line lands in the buffer and the request is served.
  std::uint64_t ready_cycle = 0;
};

struct MigrationStats {
  std::uint64_t started = 0;
  std::uint64_t retired = 0;
  std::uint64_t pair = 0;
  std::uint64_t one_way = 0;
  std::uint64_t remigrations = 0;
  std::uint64_t queued = 0;
  std::uint64_t dropped = 0;
  std::uint64_t rejected = 0;
  std::uint64_t cancelled = 0;
  std::uint64_t line_transfers = 0;
  std::uint64_t wait_enqueued = 0;
  std::uint64_t wait_served = 0;
  std::uint64_t buffer_served = 0;
  std::uint64_t redirected = 0;
};

class MigrationController {
 public:
  using RetireHook = std::function<void(const JobRecord&)>;

  MigrationController(MigrationConfig config, const MemoryGeometry& geom,
                      FrameMap& frames, PhysicalMemory& memory,
                      Translation& translation, bool remap_aware);

  MigrationController(const MigrationController&) = delete;
  MigrationController& operator=(const MigrationController&) = delete;

  void on_retire(RetireHook hook) { retire_hook_ = std::move(hook); }

  RequestOutcome request_migration(UnifiedPageId hot_ua, std::uint64_t now);
  // Least recently accessed resident fast-tier page; lowest vpn on ties.
  VirtualPageId select_victim(std::uint64_t now) const;

  // Applies every transfer and retirement scheduled at or before `now`.
  void advance(std::uint64_t now);
  // Runs the active job and everything queued behind it to completion.
  // Returns the cycle at which the last job retired (or `now`).
  std::uint64_t drain(std::uint64_t now);

  bool owns(UnifiedPageId ua) const;
  // Follows a unified-page rename in the admission queue.
  void rename_queued(UnifiedPageId a, UnifiedPageId b);
  Intercept intercept_access(std::uint32_t core, VirtualPageId vpn,
                             std::uint32_t line, bool write,
                             std::uint64_t arrival);

  // Functional access to the authoritative copy of a line of a page that
  // belongs to the active job.
  std::uint64_t read_line(UnifiedPageId ua, std::uint32_t line) const;
  void write_line(UnifiedPageId ua, std::uint32_t line, std::uint64_t value);

  // Bit vector tracking `ua` in the active job (in for the hot page, out for
  // the victim).
  const BitVector& bitvec_for(UnifiedPageId ua) const;

  // Extra wait for a demand access to `tier` arriving at `arrival`.
  std::uint64_t contention_delay(Tier tier, std::uint64_t arrival) const;

  // Controller view of one in-flight line for resolve_memory_target.
  std::optional<InFlightLine> in_flight_line(UnifiedPageId ua,
                                             std::uint32_t line) const;

  const MigrationJob* active_job() const {
    return active_ ? &*active_ : nullptr;
  }
  std::size_t queued() const { return queue_.size(); }
  bool idle() const { return !active_ && queue_.empty(); }
  const TransferBuffer& hot_buffer() const { return hot_buffer_; }
  const TransferBuffer& cold_buffer() const { return cold_buffer_; }
  const WaitQueue& wait_queue() const { return wait_queue_; }
  const MigrationQueue& migration_queue() const { return migration_queue_; }
  const MigrationStats& stats() const { return stats_; }
  const MigrationConfig& config() const { return config_; }

 private:
  void start_job(UnifiedPageId hot_ua, std::uint64_t now);
  void start_next(std::uint64_t now);
  std::optional<std::uint64_t> next_event_time() const;
  void apply_next_event();
  void retire();
  bool is_victim(UnifiedPageId ua) const;
  std::optional<UnifiedPageId> free_fast_owner();

  MigrationConfig config_;
  MemoryGeometry geom_;
  FrameMap& frames_;
  PhysicalMemory& memory_;
  Translation& translation_;
  bool remap_aware_;
  TransferBuffer hot_buffer_;
  TransferBuffer cold_buffer_;
  WaitQueue wait_queue_;
  MigrationQueue migration_queue_;
  std::optional<MigrationJob> active_;
  std::deque<UnifiedPageId> queue_;
  std::uint64_t next_id_ = 0;
  // Fast frames below this index are owned by allocated pages for good:
  // allocated unified pages are never freed, only reused.
  std::uint64_t fast_scan_ = 0;
  std::uint64_t clock_ = 0;
  RetireHook retire_hook_;
  MigrationStats stats_;
};

}  // namespace duon
