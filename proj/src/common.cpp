#include "chronotopic/common.hpp"

#include <cstdlib>

namespace chronotopic {

int max_threads() {
  static int cached = [] {
    if (const char* env = std::getenv("CHRONOTOPIC_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
  }();
  return cached;
}

}  // namespace chronotopic
