// SPDX-License-Identifier: Apache-2.0
#include "awracle/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "awracle/config.hpp"
#include "awracle/errors.hpp"

namespace awracle {

std::size_t worker_count() {
    const char* env = std::getenv("AWRACLE_THREADS");
    if (env == nullptr || *env == '\0') return 1;
    const auto n = parse_size("AWRACLE_THREADS", env);
    if (n == 0) throw ConfigError("AWRACLE_THREADS must be at least 1");
    return n;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> threads;
    for (std::size_t t = 1; t < workers; ++t) threads.emplace_back(run);
    run();
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace awracle
