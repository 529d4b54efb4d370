#include "dolma/checkpoint/checkpoint.hpp"

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "dolma/util/bytes.hpp"
#include "dolma/util/crc32.hpp"

namespace dolma {

namespace {

constexpr char kMagic[4] = {'D', 'L', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 4 + 8 + 8 + 4;
constexpr std::size_t kSectionHeaderBytes = 4 + 8 + 4;

enum Section : std::uint32_t { kMeta = 1, kLocalBlobs = 2, kRemoteBlobs = 3, kCarried = 4 };

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    std::uint8_t tmp[4];
    store_le32(tmp, v);
    buf_.insert(buf_.end(), tmp, tmp + 4);
  }
  void u64(std::uint64_t v) {
    std::uint8_t tmp[8];
    store_le64(tmp, v);
    buf_.insert(buf_.end(), tmp, tmp + 8);
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  std::size_t size() const { return buf_.size(); }
  const std::vector<std::uint8_t>& data() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size, const char* what)
      : p_(data), end_(data + size), what_(what) {}
  std::uint8_t u8() {
    need(1);
    return *p_++;
  }
  std::uint32_t u32() {
    need(4);
    const std::uint32_t v = load_le32(p_);
    p_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    const std::uint64_t v = load_le64(p_);
    p_ += 8;
    return v;
  }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s(reinterpret_cast<const char*>(p_), n);
    p_ += n;
    return s;
  }
  std::vector<std::uint8_t> blob(std::uint64_t n) {
    need(n);
    std::vector<std::uint8_t> out(p_, p_ + n);
    p_ += n;
    return out;
  }
  std::size_t offset_from(const std::uint8_t* base) const {
    return static_cast<std::size_t>(p_ - base);
  }
  void skip(std::uint64_t n) {
    need(n);
    p_ += n;
  }

 private:
  void need(std::uint64_t n) {
    if (static_cast<std::uint64_t>(end_ - p_) < n)
      throw Error(ErrorCode::IoError, std::string("truncated ") + what_ + " section");
  }
  const std::uint8_t* p_;
  const std::uint8_t* end_;
  const char* what_;
};

struct FileLayout {
  std::vector<std::uint8_t> content;             // full file image
  std::map<std::uint64_t, BlobRef> blob_index;   // object -> bytes in this file
};

// Serializes a checkpoint: blobs for fresh objects, references otherwise.
FileLayout build_file(const std::string& path, std::uint64_t epoch,
                      const std::vector<CheckpointObject>& objects) {
  ByteWriter meta;
  meta.u64(objects.size());
  for (const auto& o : objects) {
    meta.u64(o.object_id);
    meta.u64(o.size);
    meta.u8(o.local ? 1 : 0);
    meta.u64(o.counters.read_count);
    meta.u64(o.counters.write_count);
    meta.u64(o.counters.alloc_iteration);
    meta.u64(o.counters.free_iteration ? *o.counters.free_iteration
                                       : static_cast<std::uint64_t>(-1));
    meta.u64(o.last_write_epoch);
    meta.str(o.tag);
  }

  // Blob payloads, remembering where each object's bytes start so the next
  // checkpoint (and carried references) can point at them.
  struct Placed {
    std::uint64_t object_id;
    std::uint64_t rel_offset;
    std::uint64_t length;
    std::uint32_t crc;
  };
  auto build_blobs = [](const std::vector<CheckpointObject>& objs, bool want_local,
                        ByteWriter& w, std::vector<Placed>& placed) {
    std::uint64_t count = 0;
    for (const auto& o : objs)
      if (o.fresh && o.local == want_local) count++;
    w.u64(count);
    for (const auto& o : objs) {
      if (!o.fresh || o.local != want_local) continue;
      w.u64(o.object_id);
      w.u64(o.size);
      placed.push_back({o.object_id, w.size(), o.bytes.size(),
                        crc32(o.bytes.data(), o.bytes.size())});
      w.bytes(o.bytes.data(), o.bytes.size());
    }
  };

  ByteWriter local_blobs, remote_blobs;
  std::vector<Placed> local_placed, remote_placed;
  build_blobs(objects, true, local_blobs, local_placed);
  build_blobs(objects, false, remote_blobs, remote_placed);

  ByteWriter carried;
  std::uint64_t carried_count = 0;
  for (const auto& o : objects)
    if (!o.fresh) carried_count++;
  carried.u64(carried_count);
  for (const auto& o : objects) {
    if (o.fresh) continue;
    carried.u64(o.object_id);
    carried.str(o.ref.path);
    carried.u64(o.ref.offset);
    carried.u64(o.ref.length);
    carried.u32(o.ref.crc);
  }

  ByteWriter file;
  file.bytes(kMagic, 4);
  file.u32(kVersion);
  file.u64(epoch);
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  file.u64(std::chrono::duration_cast<std::chrono::microseconds>(now).count());
  file.u32(4);

  FileLayout layout;
  auto append_section = [&](std::uint32_t kind, const ByteWriter& payload,
                            const std::vector<Placed>* placed) {
    if (placed) {
      const std::uint64_t base = file.size() + kSectionHeaderBytes;
      for (const Placed& p : *placed)
        layout.blob_index[p.object_id] = BlobRef{path, base + p.rel_offset, p.length, p.crc};
    }
    file.u32(kind);
    file.u64(payload.size());
    file.u32(crc32(payload.data().data(), payload.size()));
    file.bytes(payload.data().data(), payload.size());
  };
  append_section(kMeta, meta, nullptr);
  append_section(kLocalBlobs, local_blobs, &local_placed);
  append_section(kRemoteBlobs, remote_blobs, &remote_placed);
  append_section(kCarried, carried, nullptr);

  // Carried objects keep pointing at their original file.
  for (const auto& o : objects)
    if (!o.fresh) layout.blob_index[o.object_id] = o.ref;

  layout.content = file.data();
  return layout;
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(content.data()),
            static_cast<std::streamsize>(content.size()));
  out.flush();
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path);
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ChainUnresolvable, "cannot open checkpoint file " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string resolve_relative(const std::string& ref_path, const std::string& referencing_file) {
  if (std::filesystem::exists(ref_path)) return ref_path;
  const auto sibling = std::filesystem::path(referencing_file).parent_path() /
                       std::filesystem::path(ref_path).filename();
  if (std::filesystem::exists(sibling)) return sibling.string();
  return ref_path;  // let the open fail with the original name
}

}  // namespace

ParsedCheckpoint read_checkpoint(const std::string& path, bool resolve_bytes) {
  const std::vector<std::uint8_t> file = read_file_bytes(path);
  if (file.size() < kHeaderBytes || std::memcmp(file.data(), kMagic, 4) != 0)
    throw Error(ErrorCode::IoError, "not a checkpoint file: " + path);
  ByteReader header(file.data(), file.size(), "header");
  header.skip(4);
  if (header.u32() != kVersion)
    throw Error(ErrorCode::IoError, "unsupported checkpoint version in " + path);

  ParsedCheckpoint parsed;
  parsed.epoch = header.u64();
  parsed.wall_ts_us = header.u64();
  const std::uint32_t section_count = header.u32();

  std::map<std::uint32_t, std::pair<std::size_t, std::uint64_t>> sections;  // kind -> (off, len)
  std::size_t pos = kHeaderBytes;
  for (std::uint32_t s = 0; s < section_count; ++s) {
    if (pos + kSectionHeaderBytes > file.size())
      throw Error(ErrorCode::IoError, "truncated checkpoint " + path);
    const std::uint32_t kind = load_le32(file.data() + pos);
    const std::uint64_t len = load_le64(file.data() + pos + 4);
    const std::uint32_t want_crc = load_le32(file.data() + pos + 12);
    pos += kSectionHeaderBytes;
    if (pos + len > file.size()) throw Error(ErrorCode::IoError, "truncated checkpoint " + path);
    if (crc32(file.data() + pos, len) != want_crc) {
      const char* names[] = {"?", "metadata", "local-blob", "remote-blob", "carried"};
      throw Error(ErrorCode::ChecksumMismatch,
                  std::string(names[kind <= 4 ? kind : 0]) + " section of " + path);
    }
    sections[kind] = {pos, len};
    pos += len;
  }

  auto section_reader = [&](std::uint32_t kind, const char* what) {
    auto it = sections.find(kind);
    if (it == sections.end())
      throw Error(ErrorCode::IoError, std::string("missing ") + what + " section in " + path);
    return ByteReader(file.data() + it->second.first, it->second.second, what);
  };

  ByteReader meta = section_reader(kMeta, "metadata");
  const std::uint64_t count = meta.u64();
  std::map<std::uint64_t, std::size_t> by_id;
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointObject o;
    o.object_id = meta.u64();
    o.size = meta.u64();
    o.local = meta.u8() == 1;
    o.counters.object_id = o.object_id;
    o.counters.size = o.size;
    o.counters.read_count = meta.u64();
    o.counters.write_count = meta.u64();
    o.counters.alloc_iteration = meta.u64();
    const std::uint64_t free_iter = meta.u64();
    if (free_iter != static_cast<std::uint64_t>(-1)) o.counters.free_iteration = free_iter;
    o.last_write_epoch = meta.u64();
    o.tag = meta.str();
    by_id[o.object_id] = parsed.objects.size();
    parsed.objects.push_back(std::move(o));
  }

  for (std::uint32_t kind : {kLocalBlobs, kRemoteBlobs}) {
    ByteReader blobs = section_reader(kind, kind == kLocalBlobs ? "local-blob" : "remote-blob");
    const std::uint64_t n = blobs.u64();
    const std::size_t base = sections[kind].first;
    for (std::uint64_t i = 0; i < n; ++i) {
      const std::uint64_t id = blobs.u64();
      const std::uint64_t len = blobs.u64();
      auto it = by_id.find(id);
      if (it == by_id.end()) throw Error(ErrorCode::IoError, "blob without metadata entry");
      CheckpointObject& o = parsed.objects[it->second];
      o.fresh = true;
      o.ref = BlobRef{path, base + blobs.offset_from(file.data() + base), len, 0};
      o.bytes = blobs.blob(len);
      o.ref.crc = crc32(o.bytes.data(), o.bytes.size());
    }
  }

  ByteReader carried = section_reader(kCarried, "carried");
  const std::uint64_t carried_count = carried.u64();
  for (std::uint64_t i = 0; i < carried_count; ++i) {
    const std::uint64_t id = carried.u64();
    BlobRef ref;
    ref.path = carried.str();
    ref.offset = carried.u64();
    ref.length = carried.u64();
    ref.crc = carried.u32();
    auto it = by_id.find(id);
    if (it == by_id.end()) throw Error(ErrorCode::IoError, "carried ref without metadata entry");
    CheckpointObject& o = parsed.objects[it->second];
    o.ref = ref;
    o.fresh = false;
    if (resolve_bytes) {
      const std::string pred = resolve_relative(ref.path, path);
      const std::vector<std::uint8_t> pred_file = read_file_bytes(pred);
      if (ref.offset + ref.length > pred_file.size())
        throw Error(ErrorCode::ChainUnresolvable,
                    "carried reference outside predecessor " + pred);
      o.bytes.assign(pred_file.begin() + static_cast<std::ptrdiff_t>(ref.offset),
                     pred_file.begin() + static_cast<std::ptrdiff_t>(ref.offset + ref.length));
      if (crc32(o.bytes.data(), o.bytes.size()) != ref.crc)
        throw Error(ErrorCode::ChecksumMismatch,
                    "carried blob for object " + std::to_string(id) + " in " + pred);
    }
  }
  return parsed;
}

void recover(const std::string& path, Runtime& rt) {
  ParsedCheckpoint parsed = read_checkpoint(path, true);
  rt.set_checkpoint_epoch(parsed.epoch);
  for (const CheckpointObject& o : parsed.objects) {
    rt.restore_object(o.object_id, o.size, o.tag, o.local, o.counters, o.last_write_epoch,
                      {o.bytes.data(), o.bytes.size()});
  }
}

void materialize(const std::string& in_path, const std::string& out_path) {
  ParsedCheckpoint parsed = read_checkpoint(in_path, true);
  for (auto& o : parsed.objects) o.fresh = true;
  FileLayout layout = build_file(out_path, parsed.epoch, parsed.objects);
  write_file_bytes(out_path, layout.content);
}

void CheckpointTicket::wait() {
  if (!state_) throw Error(ErrorCode::ConfigInvalid, "empty checkpoint ticket");
  std::unique_lock lock(state_->mu);
  state_->cv.wait(lock, [&] { return state_->done; });
  if (state_->failed) throw Error(ErrorCode::IoError, state_->error);
}

bool CheckpointTicket::done() const {
  if (!state_) return false;
  std::lock_guard lock(state_->mu);
  return state_->done;
}

CheckpointManager::CheckpointManager(Runtime& rt, unsigned interval_iterations)
    : rt_(rt), interval_(interval_iterations) {}

CheckpointManager::~CheckpointManager() {
  if (worker_.joinable()) worker_.join();
}

void CheckpointManager::harvest() {
  if (!worker_.joinable()) return;
  {
    std::lock_guard lock(in_flight_->mu);
    if (!in_flight_->done) return;  // still writing
  }
  worker_.join();
  bool ok;
  {
    std::lock_guard lock(in_flight_->mu);
    ok = !in_flight_->failed;
  }
  if (ok) {
    prev_path_ = next_path_;
    prev_index_ = next_index_;
  }
  in_flight_.reset();
}

CheckpointTicket CheckpointManager::start(const std::string& path,
                                          std::shared_ptr<CheckpointTicket::State> state) {
  // Synchronous capture at the barrier: fence pending demotions, then copy
  // the freshest bytes of everything dirtied since the previous epoch.
  rt_.quiesce_writes();
  const std::uint64_t current_epoch = rt_.checkpoint_epoch();

  std::vector<CheckpointObject> objects;
  for (const auto& [id, e] : rt_.metadata()) {
    CheckpointObject o;
    o.object_id = id;
    o.size = e.size;
    o.tag = e.tag;
    o.local = e.location == Location::Local;
    o.counters = e.descriptor();
    o.last_write_epoch = e.last_write_epoch;
    o.fresh = e.last_write_epoch == current_epoch || !prev_index_.count(id);
    if (o.fresh)
      o.bytes = rt_.capture_object_bytes(id);
    else
      o.ref = prev_index_.at(id);
    objects.push_back(std::move(o));
  }
  const std::uint64_t file_epoch = rt_.advance_checkpoint_epoch();

  FileLayout layout = build_file(path, file_epoch, objects);
  next_path_ = path;
  next_index_ = std::move(layout.blob_index);
  taken_++;

  if (!state) state = std::make_shared<CheckpointTicket::State>();
  in_flight_ = state;
  worker_ = std::thread([content = std::move(layout.content), path, state] {
    std::string error;
    bool failed = false;
    try {
      write_file_bytes(path, content);
    } catch (const Error& e) {
      failed = true;
      error = e.what();
    }
    std::lock_guard lock(state->mu);
    state->failed = failed;
    state->error = error;
    state->done = true;
    state->cv.notify_all();
  });
  return CheckpointTicket(state);
}

CheckpointTicket CheckpointManager::checkpoint_async(const std::string& path) {
  harvest();
  if (worker_.joinable()) {
    // One checkpoint at a time: coalesce to the next barrier.
    if (!pending_state_) {
      pending_path_ = path;
      pending_state_ = std::make_shared<CheckpointTicket::State>();
    }
    return CheckpointTicket(pending_state_);
  }
  return start(path, nullptr);
}

CheckpointTicket CheckpointManager::on_iteration_barrier(std::uint64_t iteration,
                                                         const std::string& directory) {
  harvest();
  if (pending_state_ && !worker_.joinable()) {
    auto state = std::move(pending_state_);
    const std::string path = pending_path_;
    pending_state_.reset();
    pending_path_.clear();
    return start(path, std::move(state));
  }
  if (interval_ > 0 && iteration > 0 && iteration % interval_ == 0 && !worker_.joinable()) {
    const std::string path =
        directory + "/ckpt_" + std::to_string(rt_.checkpoint_epoch() + 1) + ".dlck";
    return start(path, nullptr);
  }
  return CheckpointTicket();
}

}  // namespace dolma
