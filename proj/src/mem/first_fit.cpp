#include "dolma/mem/first_fit.hpp"

namespace dolma {

namespace {
constexpr std::uint64_t align8(std::uint64_t v) { return (v + 7) & ~std::uint64_t{7}; }
}  // namespace

void FirstFitAllocator::reset(std::uint64_t capacity) {
  capacity_ = capacity;
  used_ = 0;
  free_.clear();
  allocated_.clear();
  if (capacity > 0) free_.emplace(0, capacity);
}

std::optional<std::uint64_t> FirstFitAllocator::alloc(std::uint64_t size) {
  if (size == 0) return std::nullopt;
  const std::uint64_t need = align8(size);
  for (auto it = free_.begin(); it != free_.end(); ++it) {
    if (it->second < need) continue;
    const std::uint64_t offset = it->first;
    const std::uint64_t remainder = it->second - need;
    free_.erase(it);
    if (remainder > 0) free_.emplace(offset + need, remainder);
    allocated_.emplace(offset, need);
    used_ += need;
    return offset;
  }
  return std::nullopt;
}

bool FirstFitAllocator::alloc_at(std::uint64_t offset, std::uint64_t size) {
  const std::uint64_t need = align8(size);
  auto it = free_.upper_bound(offset);
  if (it == free_.begin()) return false;
  --it;
  if (offset < it->first || offset + need > it->first + it->second) return false;
  const std::uint64_t run_off = it->first;
  const std::uint64_t run_len = it->second;
  free_.erase(it);
  if (offset > run_off) free_.emplace(run_off, offset - run_off);
  if (offset + need < run_off + run_len)
    free_.emplace(offset + need, run_off + run_len - offset - need);
  allocated_.emplace(offset, need);
  used_ += need;
  return true;
}

bool FirstFitAllocator::free(std::uint64_t offset) {
  auto it = allocated_.find(offset);
  if (it == allocated_.end()) return false;
  const std::uint64_t length = it->second;
  allocated_.erase(it);
  used_ -= length;
  insert_free(offset, length);
  return true;
}

void FirstFitAllocator::insert_free(std::uint64_t offset, std::uint64_t length) {
  auto next = free_.upper_bound(offset);
  // Coalesce with the predecessor.
  if (next != free_.begin()) {
    auto prev = std::prev(next);
    if (prev->first + prev->second == offset) {
      offset = prev->first;
      length += prev->second;
      free_.erase(prev);
    }
  }
  // Coalesce with the successor.
  if (next != free_.end() && offset + length == next->first) {
    length += next->second;
    free_.erase(next);
  }
  free_.emplace(offset, length);
}

std::uint64_t FirstFitAllocator::largest_free_run() const {
  std::uint64_t best = 0;
  for (const auto& [off, len] : free_)
    if (len > best) best = len;
  // Report what alloc() can actually satisfy after rounding.
  return best & ~std::uint64_t{7};
}

std::optional<std::uint64_t> FirstFitAllocator::block_size(std::uint64_t offset) const {
  auto it = allocated_.find(offset);
  if (it == allocated_.end()) return std::nullopt;
  return it->second;
}

}  // namespace dolma
