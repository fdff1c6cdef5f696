#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ebcc {

// Runs f(i) for i in [0, n) on up to `threads` workers. Work is handed out by
// an atomic counter; f must write only to its own slot of any shared output.
template <class F>
void parallel_for(long n, int threads, F&& f) {
    const int workers = static_cast<int>(std::clamp<long>(threads, 1, std::max<long>(n, 1)));
    if (workers == 1) {
        for (long i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<long> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (long i; (i = next.fetch_add(1)) < n;) {
            try {
                f(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                next = n;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace ebcc
