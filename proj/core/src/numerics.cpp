#include "qtar/numerics.hpp"

#include <algorithm>
#include <mutex>
#include <thread>
#include <vector>

namespace qtar {

double log_sum_exp(std::span<const double> xs) {
    double m = kNegInf;
    for (double x : xs) m = std::max(m, x);
    if (m == kNegInf) return kNegInf;
    double sum = 0.0;
    for (double x : xs) sum += std::exp(x - m);
    return m + std::log(sum);
}

double digamma(double x) {
    if (!(x > 0.0)) throw NumericError("digamma: argument must be positive, got " + std::to_string(x));
    double result = 0.0;
    while (x < 6.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // psi(x) ~ ln x - 1/(2x) - sum_n B_{2n}/(2n x^{2n})
    result += std::log(x) - 0.5 * inv
        - inv2 * (1.0 / 12.0
        - inv2 * (1.0 / 120.0
        - inv2 * (1.0 / 252.0
        - inv2 * (1.0 / 240.0
        - inv2 * (1.0 / 132.0)))));
    return result;
}

void parallel_for(int threads, long begin, long end,
                  const std::function<void(long, long)>& fn) {
    const long n = end - begin;
    if (n <= 0) return;
    if (threads <= 1 || n == 1) {
        fn(begin, end);
        return;
    }
    const long workers = std::min<long>(threads, n);
    const long chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (long w = 0; w < workers; ++w) {
        const long lo = begin + w * chunk;
        const long hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&fn, &failure, &failure_mutex, lo, hi] {
            try {
                fn(lo, hi);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace qtar
