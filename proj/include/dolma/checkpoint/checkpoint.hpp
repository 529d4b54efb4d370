#pragma once

#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "dolma/runtime/runtime.hpp"

namespace dolma {

// Checkpoint file ("DLCK", little-endian, CRC32 per section):
//
//   header:  magic | u32 version | u64 epoch | u64 wall_ts_us | u32 sections
//   section: u32 kind | u64 payload_len | u32 crc32 | payload
//
// Sections: 1 = metadata table, 2 = local-region blobs, 3 = remote blobs,
// 4 = carried-forward references (predecessor path, offset, length, crc).
// Blobs are stored only for objects dirtied since the previous checkpoint
// epoch; everything else is carried forward by reference, keeping each file
// self-contained for recovery once its chain resolves.

struct BlobRef {
  std::string path;
  std::uint64_t offset = 0;  // absolute file offset of the bytes
  std::uint64_t length = 0;
  std::uint32_t crc = 0;
};

struct CheckpointObject {
  std::uint64_t object_id = 0;
  std::uint64_t size = 0;
  std::string tag;
  bool local = false;
  ObjectDescriptor counters;
  std::uint64_t last_write_epoch = 0;
  bool fresh = false;              // bytes live in this file
  BlobRef ref;                     // where the bytes live
  std::vector<std::uint8_t> bytes;  // resolved content (reader side)
};

struct ParsedCheckpoint {
  std::uint64_t epoch = 0;
  std::uint64_t wall_ts_us = 0;
  std::vector<CheckpointObject> objects;
};

// Reads a checkpoint, resolving carried references through their
// predecessor files. Throws ChecksumMismatch naming the bad section and
// ChainUnresolvable when a referenced predecessor is missing.
ParsedCheckpoint read_checkpoint(const std::string& path, bool resolve_bytes = true);

// Rebuilds a fresh runtime from a checkpoint: remote homes are
// re-allocated and repopulated, the metadata table and local region are
// restored, and object ids remain valid.
void recover(const std::string& path, Runtime& rt);

// Flattens a carried-forward chain into one self-contained file.
void materialize(const std::string& in_path, const std::string& out_path);

class CheckpointTicket {
 public:
  struct State {
    std::mutex mu;
    std::condition_variable cv;
    bool done = false;
    bool failed = false;
    std::string error;
  };

  CheckpointTicket() = default;
  explicit CheckpointTicket(std::shared_ptr<State> state) : state_(std::move(state)) {}

  bool valid() const { return state_ != nullptr; }
  // Blocks until the file is durable; throws IoError if the write failed.
  void wait();
  bool done() const;

 private:
  std::shared_ptr<State> state_;
};

// Drives asynchronous, selectively updated checkpoints at iteration
// barriers. Capture happens synchronously at the barrier (pending demotions
// are fenced in first); serialization and file I/O run on a background
// thread. One checkpoint runs at a time; a request issued while one is in
// flight coalesces to the next barrier.
class CheckpointManager {
 public:
  explicit CheckpointManager(Runtime& rt, unsigned interval_iterations = 5);
  ~CheckpointManager();

  CheckpointManager(const CheckpointManager&) = delete;
  CheckpointManager& operator=(const CheckpointManager&) = delete;

  CheckpointTicket checkpoint_async(const std::string& path);
  // Barrier hook: starts any coalesced request, and every
  // `interval_iterations` starts a checkpoint under `directory`.
  CheckpointTicket on_iteration_barrier(std::uint64_t iteration, const std::string& directory);
  unsigned interval() const { return interval_; }
  std::uint64_t checkpoints_taken() const { return taken_; }

 private:
  CheckpointTicket start(const std::string& path, std::shared_ptr<CheckpointTicket::State> state);
  void harvest();  // join a finished worker, adopt its blob index

  Runtime& rt_;
  unsigned interval_;
  std::uint64_t taken_ = 0;

  std::thread worker_;
  std::shared_ptr<CheckpointTicket::State> in_flight_;
  std::string pending_path_;
  std::shared_ptr<CheckpointTicket::State> pending_state_;

  std::string prev_path_;
  std::map<std::uint64_t, BlobRef> prev_index_;
  std::map<std::uint64_t, BlobRef> next_index_;  // adopted on success
  std::string next_path_;
};

}  // namespace dolma
