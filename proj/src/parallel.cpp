// SPDX-License-Identifier: Apache-2.0

#include "resadapt/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace resadapt {

std::size_t worker_count() {
    if (const char* env = std::getenv("RESADAPT_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) {
                return static_cast<std::size_t>(v);
            }
        } catch (const std::exception&) {
            // unparsable values fall through to the hardware default
        }
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) {
        return;
    }
    grain = std::max<std::size_t>(1, grain);
    const std::size_t chunks = std::min(worker_count(), (n + grain - 1) / grain);
    if (chunks <= 1) {
        fn(0, n);
        return;
    }

    std::exception_ptr failure;
    std::mutex failure_mutex;
    const std::size_t per = (n + chunks - 1) / chunks;
    {
        std::vector<std::jthread> workers;
        workers.reserve(chunks - 1);
        for (std::size_t c = 1; c < chunks; ++c) {
            const std::size_t begin = c * per;
            const std::size_t end = std::min(n, begin + per);
            if (begin >= end) {
                break;
            }
            workers.emplace_back([&, begin, end] {
                try {
                    fn(begin, end);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) {
                        failure = std::current_exception();
                    }
                }
            });
        }
        try {
            fn(0, std::min(n, per));
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) {
                failure = std::current_exception();
            }
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

} // namespace resadapt
