#pragma once

#include <cstddef>

// Process-wide malloc interposer. Counting is off until start().
namespace alloc_audit {

struct Stats {
  std::size_t largest = 0;    // biggest single request, bytes
  std::size_t peak_live = 0;  // high-water mark of net bytes allocated since start()
  std::size_t calls = 0;
};

void start();
Stats stop();

}  // namespace alloc_audit
