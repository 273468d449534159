#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace beables {

// Runs body(i) for i in [0, count) on up to `threads` workers. Each index is
// processed exactly once and results must be written to per-index slots, so
// the outcome does not depend on the thread count.
inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body) {
  if (threads <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += workers) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// Pairwise summation over a fixed binary tree; the reduction order only
// depends on the number of terms.
template <class T, class Get>
T pairwise_sum(std::size_t begin, std::size_t end, const Get& get) {
  if (end - begin <= 8) {
    T acc = get(begin);
    for (std::size_t i = begin + 1; i < end; ++i) acc = acc + get(i);
    return acc;
  }
  const std::size_t mid = begin + (end - begin) / 2;
  return pairwise_sum<T>(begin, mid, get) + pairwise_sum<T>(mid, end, get);
}

template <class T>
T pairwise_sum(const std::vector<T>& values) {
  if (values.empty()) return T{};
  return pairwise_sum<T>(0, values.size(), [&](std::size_t i) { return values[i]; });
}

}  // namespace beables
