#ifndef TTLM_SRC_BINARY_IO_HPP
#define TTLM_SRC_BINARY_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <type_traits>

namespace ttlm::detail {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written in host order, which must be little endian");

template <typename T>
void write_pod(std::ostream& os, const T& value) {
  static_assert(std::is_trivially_copyable_v<T>);
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

// False on short read.
template <typename T>
bool read_pod(std::istream& is, T& value) {
  static_assert(std::is_trivially_copyable_v<T>);
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  return static_cast<std::size_t>(is.gcount()) == sizeof(T);
}

}  // namespace ttlm::detail

#endif  // TTLM_SRC_BINARY_IO_HPP
