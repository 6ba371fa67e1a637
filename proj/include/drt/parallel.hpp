#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace drt {

/// Worker count for data-parallel loops. Results never depend on it.
struct Parallel {
    unsigned threads = 1;
};

/// Calls fn(begin, end) over contiguous chunks of [0, n).
template <class Fn>
void parallel_for(std::size_t n, Parallel par, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(std::max(1U, par.threads), n);
    if (workers <= 1) {
        if (n > 0) fn(std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t b = w * chunk;
        const std::size_t e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&, w, b, e] {
            try {
                fn(b, e);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& err : errors)
        if (err) std::rethrow_exception(err);
}

} // namespace drt
