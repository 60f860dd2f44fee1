#include "funad/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace funad {

namespace {

std::atomic<std::size_t> g_threads{0};

std::size_t hardware_threads() {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : hc;
}

// Runs task(t) for t in [0, tasks) on up to num_threads() workers.
void run_tasks(std::size_t tasks, const std::function<void(std::size_t)>& task) {
    const std::size_t workers = std::min(num_threads(), tasks);
    if (workers <= 1) {
        for (std::size_t t = 0; t < tasks; ++t) task(t);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t t = next.fetch_add(1);
            if (t >= tasks) return;
            try {
                task(t);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace

void set_num_threads(std::size_t n) { g_threads.store(n); }

std::size_t num_threads() {
    const std::size_t n = g_threads.load();
    return n == 0 ? hardware_threads() : n;
}

void parallel_chunks(std::size_t n, std::size_t chunks,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body) {
    if (n == 0 || chunks == 0) return;
    chunks = std::min(chunks, n);
    run_tasks(chunks, [&](std::size_t c) {
        const std::size_t begin = n * c / chunks;
        const std::size_t end = n * (c + 1) / chunks;
        body(c, begin, end);
    });
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
    if (n == 0) return;
    const std::size_t chunks = std::min(n, num_threads() * 4);
    parallel_chunks(n, chunks, [&](std::size_t, std::size_t b, std::size_t e) { body(b, e); });
}

}  // namespace funad
