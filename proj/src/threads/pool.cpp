#include "dolma/threads/pool.hpp"

#include <algorithm>
#include <exception>

namespace dolma {

ThreadPool::ThreadPool(const ThreadPoolConfig& config, Runtime& rt)
    : config_(config), rt_(rt), fabric_(rt.fabric()) {
  config_.validate();
  rt_.configure_partitions(config_.workers);
  for (unsigned c = 0; c < config_.clusters(); ++c) {
    auto cluster = std::make_unique<Cluster>();
    cluster->channel = fabric_.open_channel();
    clusters_.push_back(std::move(cluster));
  }
}

std::vector<ChannelId> ThreadPool::cluster_channels() const {
  std::vector<ChannelId> out;
  out.reserve(clusters_.size());
  for (const auto& c : clusters_) out.push_back(c->channel);
  return out;
}

ExecContext ThreadPool::context(unsigned thread_id) const {
  ExecContext ctx;
  ctx.thread_id = thread_id;
  ctx.partition = thread_id;
  ctx.channel = clusters_[cluster_of(thread_id)]->channel;
  ctx.has_channel = true;
  return ctx;
}

void ThreadPool::run_parallel(const std::function<void(unsigned)>& body) {
  std::vector<std::thread> threads;
  std::exception_ptr first_error;
  std::mutex error_mu;
  threads.reserve(config_.workers);
  for (unsigned t = 0; t < config_.workers; ++t) {
    threads.emplace_back([&, t] {
      ExecScope scope(context(t));
      try {
        body(t);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

void ThreadPool::run_sequential(const std::function<void(unsigned)>& body) {
  for (unsigned t = 0; t < config_.workers; ++t) {
    ExecScope scope(context(t));
    body(t);
  }
}

ThreadPool::Cluster& ThreadPool::cluster_for(unsigned thread_id) {
  if (thread_id >= config_.workers)
    throw Error(ErrorCode::ConfigInvalid, "thread id outside pool");
  return *clusters_[cluster_of(thread_id)];
}

void ThreadPool::drain_locked(Cluster& c) {
  while (!c.queue.empty()) {
    QueuedOp q = std::move(c.queue.front());
    c.queue.pop_front();
    const OpId id = fabric_.submit(c.channel, q.op);
    c.owner[id] = q.thread_id;
    c.outstanding.push_back(id);
  }
}

OpId ThreadPool::submit_via_cluster(unsigned thread_id, const FabricOp& op) {
  Cluster& c = cluster_for(thread_id);
  std::lock_guard lock(c.mu);
  c.queue.push_back({thread_id, op});
  drain_locked(c);
  return c.outstanding.back();
}

std::vector<Completion> ThreadPool::poll_completions(unsigned thread_id, std::size_t max) {
  Cluster& c = cluster_for(thread_id);
  std::lock_guard lock(c.mu);
  for (const Completion& comp : fabric_.poll(c.channel, SIZE_MAX)) {
    auto owner = c.owner.find(comp.op_id);
    const unsigned tid = owner == c.owner.end() ? thread_id : owner->second;
    c.mailbox[tid].push_back(comp);
    c.owner.erase(comp.op_id);
  }
  std::vector<Completion> out;
  auto& mine = c.mailbox[thread_id];
  while (!mine.empty() && out.size() < max) {
    out.push_back(mine.front());
    mine.pop_front();
  }
  return out;
}

Completion ThreadPool::wait_op(unsigned thread_id, OpId op) {
  Cluster& c = cluster_for(thread_id);
  std::lock_guard lock(c.mu);
  auto& mine = c.mailbox[thread_id];
  auto it = std::find_if(mine.begin(), mine.end(),
                         [op](const Completion& comp) { return comp.op_id == op; });
  if (it != mine.end()) {
    Completion comp = *it;
    mine.erase(it);
    return comp;
  }
  Completion comp = fabric_.wait(c.channel, op);
  c.owner.erase(op);
  return comp;
}

void ThreadPool::fence_cluster(unsigned thread_id) {
  Cluster& c = cluster_for(thread_id);
  std::lock_guard lock(c.mu);
  drain_locked(c);
  fabric_.fence(c.channel);
}

void ThreadPool::register_shared(std::uint64_t object_id) {
  std::lock_guard lock(shared_mu_);
  shared_.try_emplace(object_id, std::make_unique<SharedLock>());
}

void ThreadPool::shared_lock(std::uint64_t object_id) {
  SharedLock* lk;
  {
    std::lock_guard lock(shared_mu_);
    auto it = shared_.find(object_id);
    if (it == shared_.end())
      throw Error(ErrorCode::ConfigInvalid,
                  "object " + std::to_string(object_id) + " not registered as shared");
    lk = it->second.get();
  }
  if (lk->owner == std::this_thread::get_id())
    throw Error(ErrorCode::ConfigInvalid, "shared-object lock is not reentrant");
  lk->mu.lock();
  lk->owner = std::this_thread::get_id();
}

void ThreadPool::shared_unlock(std::uint64_t object_id) {
  SharedLock* lk;
  {
    std::lock_guard lock(shared_mu_);
    auto it = shared_.find(object_id);
    if (it == shared_.end())
      throw Error(ErrorCode::ConfigInvalid,
                  "object " + std::to_string(object_id) + " not registered as shared");
    lk = it->second.get();
  }
  if (lk->owner != std::this_thread::get_id())
    throw Error(ErrorCode::ConfigInvalid, "unlock of a shared object lock not held");
  lk->owner = std::thread::id{};
  lk->mu.unlock();
}

}  // namespace dolma
