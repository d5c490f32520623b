#include "core/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace esi {

namespace {

thread_local int t_parallel_depth = 0;

struct Pool {
  std::vector<std::thread> workers;
  std::mutex mu;
  std::condition_variable cv_job, cv_done;
  const std::function<void(int, std::size_t, std::size_t)>* fn = nullptr;
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  std::uint64_t generation = 0;
  int pending = 0;
  bool stop = false;

  explicit Pool(int extra_workers) {
    workers.reserve(std::size_t(extra_workers));
    for (int i = 0; i < extra_workers; ++i) {
      workers.emplace_back([this, lane = i + 1] { worker_loop(lane); });
    }
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lock(mu);
      stop = true;
    }
    cv_job.notify_all();
    for (auto& t : workers) t.join();
  }

  void worker_loop(int lane) {
    std::uint64_t seen = 0;
    for (;;) {
      const std::function<void(int, std::size_t, std::size_t)>* job = nullptr;
      std::pair<std::size_t, std::size_t> range{0, 0};
      {
        std::unique_lock<std::mutex> lock(mu);
        cv_job.wait(lock, [&] { return stop || generation != seen; });
        if (stop) return;
        seen = generation;
        if (std::size_t(lane) < ranges.size()) {
          job = fn;
          range = ranges[std::size_t(lane)];
        }
      }
      if (job && range.second > range.first) {
        ++t_parallel_depth;
        (*job)(lane, range.first, range.second);
        --t_parallel_depth;
      }
      {
        std::lock_guard<std::mutex> lock(mu);
        --pending;
      }
      cv_done.notify_one();
    }
  }

  void run(std::size_t n, std::size_t granule,
           const std::function<void(int, std::size_t, std::size_t)>& f) {
    const int lanes = int(workers.size()) + 1;
    const int used = int(std::min<std::size_t>(std::size_t(lanes), (n + granule - 1) / granule));
    std::vector<std::pair<std::size_t, std::size_t>> parts(std::size_t(lanes), {0, 0});
    std::size_t chunk = (n + std::size_t(used) - 1) / std::size_t(used);
    chunk = (chunk + granule - 1) / granule * granule;
    for (int i = 0; i < used; ++i) {
      const std::size_t b = std::size_t(i) * chunk;
      parts[std::size_t(i)] = {std::min(b, n), std::min(b + chunk, n)};
    }
    {
      std::lock_guard<std::mutex> lock(mu);
      fn = &f;
      ranges = std::move(parts);
      pending = int(workers.size());
      ++generation;
    }
    cv_job.notify_all();
    if (ranges[0].second > ranges[0].first) {
      ++t_parallel_depth;
      f(0, ranges[0].first, ranges[0].second);
      --t_parallel_depth;
    }
    {
      std::unique_lock<std::mutex> lock(mu);
      cv_done.wait(lock, [&] { return pending == 0; });
    }
  }
};

int configured_lanes() {
  if (const char* env = std::getenv("ESI_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : int(hw);
}

Pool& pool() {
  static Pool p(configured_lanes() - 1);
  return p;
}

}  // namespace

int max_lanes() {
  static const int lanes = configured_lanes();
  return lanes;
}

void parallel_chunks(std::size_t n, const std::function<void(int, std::size_t, std::size_t)>& fn) {
  parallel_chunks_granular(n, 1, fn);
}

void parallel_chunks_granular(std::size_t n, std::size_t granule,
                              const std::function<void(int, std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  // Nested calls (a parallel body invoking parallel_chunks) run serially.
  if (max_lanes() == 1 || n <= granule || t_parallel_depth > 0) {
    fn(0, 0, n);
    return;
  }
  pool().run(n, granule, fn);
}

}  // namespace esi
