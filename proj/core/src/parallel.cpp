#include "blo/parallel.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <cstring>

namespace blo {

std::size_t thread_cap() {
  std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("BLO_THREADS")) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(env, env + std::strlen(env), v);
    if (ec == std::errc() && v > 0) cap = v;
  }
  return cap;
}

std::size_t effective_threads(std::size_t requested) {
  const std::size_t cap = thread_cap();
  if (requested == 0) return cap;
  return std::max<std::size_t>(1, std::min(requested, cap));
}

}  // namespace blo
