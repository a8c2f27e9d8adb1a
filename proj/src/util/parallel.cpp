#include "enslens/util/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace enslens {
namespace {

std::size_t default_threads() {
    if (const char* env = std::getenv("ENSEMBLE_THREADS")) {
        try {
            long v = std::stol(env);
            if (v > 0) return static_cast<std::size_t>(v);
        } catch (...) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

std::atomic<std::size_t>& thread_setting() {
    static std::atomic<std::size_t> value{default_threads()};
    return value;
}

// Joins all workers and rethrows the first captured exception.
class WorkerGroup {
public:
    template <class F>
    void spawn(F&& f) {
        threads_.emplace_back([this, f = std::forward<F>(f)] {
            try {
                f();
            } catch (...) {
                std::lock_guard lock(mutex_);
                if (!error_) error_ = std::current_exception();
            }
        });
    }

    void join() {
        for (auto& t : threads_) t.join();
        threads_.clear();
        if (error_) std::rethrow_exception(error_);
    }

private:
    std::vector<std::thread> threads_;
    std::mutex mutex_;
    std::exception_ptr error_;
};

}  // namespace

std::size_t thread_count() { return thread_setting().load(); }

void set_thread_count(std::size_t n) { thread_setting().store(std::max<std::size_t>(1, n)); }

void parallel_for(std::size_t n, std::size_t align,
                  const std::function<void(std::size_t, std::size_t)>& body) {
    if (n == 0) return;
    align = std::max<std::size_t>(1, align);
    const std::size_t blocks = (n + align - 1) / align;
    const std::size_t workers = std::min(thread_count(), blocks);
    if (workers <= 1) {
        body(0, n);
        return;
    }
    const std::size_t per = (blocks + workers - 1) / workers;
    WorkerGroup group;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * per * align;
        if (begin >= n) break;
        const std::size_t end = std::min(n, (w + 1) * per * align);
        group.spawn([&body, begin, end] { body(begin, end); });
    }
    group.join();
}

void parallel_each(std::size_t n, const std::function<void(std::size_t)>& body) {
    if (n == 0) return;
    const std::size_t workers = std::min(thread_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    WorkerGroup group;
    for (std::size_t w = 0; w < workers; ++w) {
        group.spawn([&] {
            for (std::size_t i = next++; i < n; i = next++) body(i);
        });
    }
    group.join();
}

}  // namespace enslens
