#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace prism {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void format_into(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  format_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string strcat_all(const Args&... args) {
  std::ostringstream os;
  detail::format_into(os, args...);
  return os.str();
}

template <typename... Args>
[[noreturn]] void raise(const Args&... args) {
  throw Error(strcat_all(args...));
}

#define PRISM_CHECK(cond, ...)          \
  do {                                  \
    if (!(cond)) ::prism::raise(__VA_ARGS__); \
  } while (0)

}  // namespace prism
