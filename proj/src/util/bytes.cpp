#include "dolma/util/bytes.hpp"

#include <stdexcept>

namespace dolma {

std::uint64_t parse_byte_size(const std::string& text) {
  if (text.empty()) throw std::invalid_argument("empty byte size");
  std::size_t pos = 0;
  const unsigned long long value = std::stoull(text, &pos);
  std::string suffix = text.substr(pos);
  if (!suffix.empty() && (suffix.back() == 'B' || suffix.back() == 'b')) {
    suffix.pop_back();
    if (!suffix.empty() && suffix.back() == 'i') suffix.pop_back();
  }
  std::uint64_t scale = 1;
  if (suffix.empty())
    scale = 1;
  else if (suffix == "K" || suffix == "k")
    scale = KiB;
  else if (suffix == "M" || suffix == "m")
    scale = MiB;
  else if (suffix == "G" || suffix == "g")
    scale = GiB;
  else
    throw std::invalid_argument("bad byte-size suffix: " + text);
  return static_cast<std::uint64_t>(value) * scale;
}

}  // namespace dolma
