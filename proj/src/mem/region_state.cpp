#include "dolma/mem/region_state.hpp"

#include <cstring>
#include <fstream>

#include "dolma/error.hpp"
#include "dolma/util/bytes.hpp"
#include "dolma/util/crc32.hpp"

namespace dolma {

namespace {
constexpr char kMagic[4] = {'D', 'L', 'R', 'G'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

RegionState::RegionState(std::uint64_t capacity)
    : capacity_(capacity), backing_(capacity, 0), alloc_(capacity) {}

std::uint64_t RegionState::alloc(std::uint64_t size) {
  auto offset = alloc_.alloc(size);
  if (!offset)
    throw Error(ErrorCode::RemoteOom,
                "remote region cannot fit " + std::to_string(size) + " bytes");
  // Fresh allocations read zero even when the range is recycled.
  std::memset(backing_.data() + *offset, 0, *alloc_.block_size(*offset));
  return *offset;
}

void RegionState::free(std::uint64_t offset) {
  if (!alloc_.free(offset))
    throw Error(ErrorCode::DoubleFree, "offset " + std::to_string(offset) + " is not allocated");
}

void RegionState::read(std::uint64_t offset, std::span<std::uint8_t> dst) const {
  if (!in_bounds(offset, dst.size())) throw Error(ErrorCode::OutOfBounds, "region read");
  std::memcpy(dst.data(), backing_.data() + offset, dst.size());
}

void RegionState::write(std::uint64_t offset, std::span<const std::uint8_t> src) {
  if (!in_bounds(offset, src.size())) throw Error(ErrorCode::OutOfBounds, "region write");
  std::memcpy(backing_.data() + offset, src.data(), src.size());
}

std::uint64_t RegionState::cas(std::uint64_t offset, std::uint64_t expected,
                               std::uint64_t desired) {
  if (offset % 8 != 0) throw Error(ErrorCode::Misaligned, "atomic target must be 8-byte aligned");
  if (!in_bounds(offset, 8)) throw Error(ErrorCode::OutOfBounds, "atomic target");
  const std::uint64_t current = load_le64(backing_.data() + offset);
  if (current == expected) store_le64(backing_.data() + offset, desired);
  return current;
}

std::uint64_t RegionState::fadd(std::uint64_t offset, std::uint64_t delta) {
  if (offset % 8 != 0) throw Error(ErrorCode::Misaligned, "atomic target must be 8-byte aligned");
  if (!in_bounds(offset, 8)) throw Error(ErrorCode::OutOfBounds, "atomic target");
  const std::uint64_t current = load_le64(backing_.data() + offset);
  store_le64(backing_.data() + offset, current + delta);
  return current;
}

void RegionState::save(const std::string& path) const {
  std::vector<std::uint8_t> blob;
  blob.reserve(32 + 16 * alloc_.allocated().size() + backing_.size());
  blob.insert(blob.end(), kMagic, kMagic + 4);
  std::uint8_t scratch[8];
  store_le32(scratch, kVersion);
  blob.insert(blob.end(), scratch, scratch + 4);
  store_le64(scratch, capacity_);
  blob.insert(blob.end(), scratch, scratch + 8);
  store_le64(scratch, alloc_.allocated().size());
  blob.insert(blob.end(), scratch, scratch + 8);
  for (const auto& [off, len] : alloc_.allocated()) {
    store_le64(scratch, off);
    blob.insert(blob.end(), scratch, scratch + 8);
    store_le64(scratch, len);
    blob.insert(blob.end(), scratch, scratch + 8);
  }
  blob.insert(blob.end(), backing_.begin(), backing_.end());
  const std::uint32_t crc = crc32(blob.data(), blob.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  store_le32(scratch, crc);
  out.write(reinterpret_cast<const char*>(scratch), 4);
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path);
}

void RegionState::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::vector<std::uint8_t> file((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (file.size() < 4 + 4 + 8 + 8 + 4) throw Error(ErrorCode::IoError, "snapshot truncated");
  const std::size_t body = file.size() - 4;
  const std::uint32_t want = load_le32(file.data() + body);
  if (crc32(file.data(), body) != want)
    throw Error(ErrorCode::ChecksumMismatch, "region snapshot " + path);
  if (std::memcmp(file.data(), kMagic, 4) != 0)
    throw Error(ErrorCode::IoError, "bad snapshot magic in " + path);
  if (load_le32(file.data() + 4) != kVersion)
    throw Error(ErrorCode::IoError, "unsupported snapshot version in " + path);

  std::size_t pos = 8;
  const std::uint64_t capacity = load_le64(file.data() + pos);
  pos += 8;
  const std::uint64_t count = load_le64(file.data() + pos);
  pos += 8;
  if (body < pos + count * 16 + capacity) throw Error(ErrorCode::IoError, "snapshot truncated");

  capacity_ = capacity;
  alloc_.reset(capacity);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t off = load_le64(file.data() + pos);
    pos += 8;
    const std::uint64_t len = load_le64(file.data() + pos);
    pos += 8;
    if (!alloc_.alloc_at(off, len))
      throw Error(ErrorCode::IoError, "snapshot allocation map inconsistent");
  }
  backing_.assign(file.begin() + static_cast<std::ptrdiff_t>(pos),
                  file.begin() + static_cast<std::ptrdiff_t>(pos + capacity));
}

}  // namespace dolma
