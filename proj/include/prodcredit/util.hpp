#pragma once

#include <cmath>
#include <cstddef>
#include <exception>
#include <span>
#include <thread>
#include <vector>

namespace prodcredit {

// Neumaier compensated summation. Reductions over path arrays must agree
// across summation orders to ~1e-12 relative, so plain accumulation is not
// enough once bundles get large.
inline double neumaier_sum(std::span<const double> xs) {
    double sum = 0.0;
    double comp = 0.0;
    for (double x : xs) {
        double t = sum + x;
        if (std::abs(sum) >= std::abs(x)) {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    return sum + comp;
}

inline double mean_of(std::span<const double> xs) {
    return xs.empty() ? 0.0 : neumaier_sum(xs) / static_cast<double>(xs.size());
}

// Splits [0, n) into contiguous blocks, one worker thread per block.
// Workers must write to disjoint state; the first exception (lowest block)
// is rethrown so failures are deterministic.
template <typename Fn>
void parallel_for_blocks(std::size_t n, int n_threads, Fn&& body) {
    if (n == 0) return;
    std::size_t workers = n_threads <= 0
        ? std::max<std::size_t>(1, std::thread::hardware_concurrency())
        : static_cast<std::size_t>(n_threads);
    workers = std::min(workers, n);
    if (workers == 1) {
        body(std::size_t{0}, n);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, w, lo, hi] {
            try {
                body(lo, hi);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace prodcredit
