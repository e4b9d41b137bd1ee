#include "rvmb/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace rvmb {

namespace {

std::atomic<int> g_threads{0};

}  // namespace

int default_threads() {
  int n = g_threads.load();
  if (n > 0) return n;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void set_default_threads(int n) { g_threads.store(n); }

void parallel_for(int n, int threads, const std::function<void(int begin, int end)>& body) {
  if (n <= 0) return;
  int t = threads > 0 ? threads : default_threads();
  t = std::min(t, n);
  if (t <= 1) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(t);
  int chunk = n / t, extra = n % t;
  int begin = 0;
  for (int w = 0; w < t; ++w) {
    int end = begin + chunk + (w < extra ? 1 : 0);
    pool.emplace_back([&, w, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
    begin = end;
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace rvmb
