#include "dolma/fabric/sim_fabric.hpp"

#include <algorithm>

#include "dolma/error.hpp"
#include "dolma/util/bytes.hpp"

namespace dolma {

SimFabric::SimFabric(std::uint64_t capacity, LatencyModel model)
    : model_(std::move(model)), region_(capacity) {}

ChannelId SimFabric::open_channel() {
  std::lock_guard lock(mu_);
  channels_.emplace_back();
  return static_cast<ChannelId>(channels_.size() - 1);
}

OpId SimFabric::submit(ChannelId channel, const FabricOp& op) {
  std::lock_guard lock(mu_);
  if (channel >= channels_.size()) throw Error(ErrorCode::ConfigInvalid, "unknown channel");
  validate_op(op, region_.capacity(), model_.max_transfer_bytes());
  Channel& ch = channels_[channel];
  const OpId op_id = ch.next_op++;
  const double start = std::max(now_, ch.busy_until);
  const double done = start + model_.estimate_us(op.kind, op.pattern, op.length);
  ch.busy_until = done;
  const bool failed = error_injector_ && error_injector_(op);
  pending_.push(Pending{done, seq_++, channel, op_id, op, failed});
  return op_id;
}

void SimFabric::apply_effects_locked(double up_to) {
  while (!pending_.empty() && pending_.top().done_at <= up_to) {
    Pending p = pending_.top();
    pending_.pop();
    CompletionStatus status = CompletionStatus::Ok;
    if (p.failed) {
      status = CompletionStatus::RemoteError;
    } else {
      const FabricOp& op = p.op;
      switch (op.kind) {
        case OpKind::Read:
          region_.read(op.remote.offset, {op.local_dst, op.length});
          break;
        case OpKind::Write:
          region_.write(op.remote.offset, {op.local_src, op.length});
          break;
        case OpKind::AtomicCas: {
          const std::uint64_t prev =
              region_.cas(op.remote.offset, op.atomic_expected, op.atomic_operand);
          if (op.local_dst) store_le64(op.local_dst, prev);
          break;
        }
        case OpKind::AtomicFadd: {
          const std::uint64_t prev = region_.fadd(op.remote.offset, op.atomic_operand);
          if (op.local_dst) store_le64(op.local_dst, prev);
          break;
        }
      }
    }
    if (p.op.signaled) channels_[p.channel].ready.push_back({p.op_id, status, p.done_at});
  }
}

void SimFabric::advance_to_locked(double t) {
  if (t > now_) now_ = t;
  apply_effects_locked(now_);
}

std::vector<Completion> SimFabric::poll(ChannelId channel, std::size_t max) {
  std::lock_guard lock(mu_);
  if (channel >= channels_.size()) throw Error(ErrorCode::ConfigInvalid, "unknown channel");
  apply_effects_locked(now_);
  Channel& ch = channels_[channel];
  std::vector<Completion> out;
  while (!ch.ready.empty() && out.size() < max) {
    out.push_back(ch.ready.front());
    ch.ready.pop_front();
  }
  return out;
}

Completion SimFabric::wait(ChannelId channel, OpId op) {
  std::lock_guard lock(mu_);
  if (channel >= channels_.size()) throw Error(ErrorCode::ConfigInvalid, "unknown channel");
  for (;;) {
    Channel& ch = channels_[channel];
    auto it = std::find_if(ch.ready.begin(), ch.ready.end(),
                           [op](const Completion& c) { return c.op_id == op; });
    if (it != ch.ready.end()) {
      Completion c = *it;
      ch.ready.erase(it);
      return c;
    }
    if (pending_.empty())
      throw Error(ErrorCode::ConfigInvalid,
                  "wait on unknown or already-retrieved op " + std::to_string(op));
    advance_to_locked(pending_.top().done_at);
  }
}

void SimFabric::fence(ChannelId channel) {
  std::lock_guard lock(mu_);
  if (channel >= channels_.size()) throw Error(ErrorCode::ConfigInvalid, "unknown channel");
  advance_to_locked(channels_[channel].busy_until);
}

RemoteAddr SimFabric::remote_alloc(std::uint64_t size) {
  std::lock_guard lock(mu_);
  return RemoteAddr{0, region_.alloc(size)};
}

void SimFabric::remote_free(RemoteAddr addr) {
  std::lock_guard lock(mu_);
  region_.free(addr.offset);
}

std::uint64_t SimFabric::atomic_cas(RemoteAddr addr, std::uint64_t expected,
                                    std::uint64_t desired) {
  std::lock_guard lock(mu_);
  const double done = now_ + model_.estimate_us(OpKind::AtomicCas, Pattern::Rand, 8);
  advance_to_locked(done);  // linearize at the round trip's completion
  return region_.cas(addr.offset, expected, desired);
}

std::uint64_t SimFabric::atomic_fadd(RemoteAddr addr, std::uint64_t delta) {
  std::lock_guard lock(mu_);
  const double done = now_ + model_.estimate_us(OpKind::AtomicFadd, Pattern::Rand, 8);
  advance_to_locked(done);
  return region_.fadd(addr.offset, delta);
}

double SimFabric::now_us() {
  std::lock_guard lock(mu_);
  return now_;
}

void SimFabric::advance_us(double us) {
  std::lock_guard lock(mu_);
  advance_to_locked(now_ + us);
}

void SimFabric::set_error_injector(std::function<bool(const FabricOp&)> fn) {
  std::lock_guard lock(mu_);
  error_injector_ = std::move(fn);
}

std::vector<std::uint8_t> SimFabric::region_snapshot() {
  std::lock_guard lock(mu_);
  apply_effects_locked(now_);
  auto bytes = region_.bytes();
  return {bytes.begin(), bytes.end()};
}

}  // namespace dolma
