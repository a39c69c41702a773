#include "semtraj/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace semtraj {
namespace {

std::atomic<unsigned> g_cap{0};

unsigned effective_workers(std::size_t items) {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  unsigned cap = g_cap.load(std::memory_order_relaxed);
  unsigned w = (cap == 0) ? hw : std::min(hw, cap);
  if (items < 2 * static_cast<std::size_t>(w)) {
    // Not enough work to amortize thread startup.
    w = 1;
  }
  return std::max(1u, w);
}

}  // namespace

void set_thread_cap(unsigned cap) { g_cap.store(cap, std::memory_order_relaxed); }

unsigned thread_cap() { return g_cap.load(std::memory_order_relaxed); }

void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& fn) {
  if (end <= begin) return;
  const std::size_t n = end - begin;
  const unsigned workers = effective_workers(n);
  if (workers == 1) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
    return;
  }

  std::mutex err_mutex;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t block = (n + workers - 1) / workers;
  for (unsigned t = 0; t < workers; ++t) {
    const std::size_t lo = begin + static_cast<std::size_t>(t) * block;
    if (lo >= end) break;
    const std::size_t hi = std::min(end, lo + block);
    pool.emplace_back([&, lo, hi] {
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace semtraj
