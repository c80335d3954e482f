#include "cesyn/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

namespace cesyn {
namespace {

std::atomic<int> g_threads{1};

struct Pool {
    std::mutex run_mutex;  // one parallel_for at a time; others run inline

    std::mutex mu;
    std::condition_variable cv_work;
    std::condition_variable cv_done;
    std::vector<std::thread> workers;
    const std::function<void(int64_t)>* fn = nullptr;
    std::vector<std::pair<int64_t, int64_t>> ranges;
    uint64_t generation = 0;
    int pending = 0;
    bool stop = false;

    ~Pool() {
        {
            std::lock_guard<std::mutex> lk(mu);
            stop = true;
        }
        cv_work.notify_all();
        for (auto& w : workers) w.join();
    }

    void ensure_workers(int n) {
        while (static_cast<int>(workers.size()) < n) {
            int idx = static_cast<int>(workers.size());
            workers.emplace_back([this, idx] { worker_loop(idx); });
        }
    }

    void worker_loop(int idx) {
        uint64_t seen = 0;
        for (;;) {
            std::unique_lock<std::mutex> lk(mu);
            cv_work.wait(lk, [&] { return stop || (generation != seen && idx < static_cast<int>(ranges.size())); });
            if (stop) return;
            seen = generation;
            auto range = ranges[idx];
            auto* f = fn;
            lk.unlock();
            for (int64_t i = range.first; i < range.second; ++i) (*f)(i);
            lk.lock();
            if (--pending == 0) cv_done.notify_all();
        }
    }

    void run(int64_t n, const std::function<void(int64_t)>& f, int nthreads) {
        int blocks = static_cast<int>(std::min<int64_t>(nthreads, n));
        ensure_workers(blocks - 1);
        // caller takes block 0; workers take 1..blocks-1
        std::vector<std::pair<int64_t, int64_t>> r(blocks - 1);
        int64_t chunk = (n + blocks - 1) / blocks;
        for (int b = 1; b < blocks; ++b) {
            int64_t lo = std::min<int64_t>(n, b * chunk);
            int64_t hi = std::min<int64_t>(n, lo + chunk);
            r[b - 1] = {lo, hi};
        }
        {
            std::lock_guard<std::mutex> lk(mu);
            ranges = std::move(r);
            fn = &f;
            pending = blocks - 1;
            ++generation;
        }
        cv_work.notify_all();
        for (int64_t i = 0; i < std::min<int64_t>(n, chunk); ++i) f(i);
        std::unique_lock<std::mutex> lk(mu);
        cv_done.wait(lk, [&] { return pending == 0; });
    }
};

Pool& pool() {
    static Pool p;
    return p;
}

}  // namespace

void set_num_threads(int n) {
    if (n < 1) n = 1;
    g_threads.store(n);
}

int num_threads() { return g_threads.load(); }

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    if (n <= 0) return;
    int nt = g_threads.load();
    if (nt <= 1 || n == 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    Pool& p = pool();
    std::unique_lock<std::mutex> run_lk(p.run_mutex, std::try_to_lock);
    if (!run_lk.owns_lock()) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    p.run(n, fn, nt);
}

}  // namespace cesyn
