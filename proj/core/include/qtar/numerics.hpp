#ifndef QTAR_NUMERICS_HPP
#define QTAR_NUMERICS_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>

namespace qtar {

// Invalid inputs, malformed configs, contract violations. Maps to exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem and format failures. Maps to exit code 2.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values, failed factorizations and other numerical blow-ups.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(exp(a) + exp(b)), safe for -inf arguments.
inline double log_add_exp(double a, double b) {
    if (a < b) std::swap(a, b);
    if (b == kNegInf) return a;  // covers both -inf
    return a + std::log1p(std::exp(b - a));
}

// log(sum_i exp(x_i)); returns -inf for an all-(-inf) input.
double log_sum_exp(std::span<const double> xs);

// Digamma for x > 0: upward recurrence to x >= 6, then the asymptotic
// series. Absolute accuracy ~1e-12 on the arguments this code produces.
double digamma(double x);

// Runs fn(begin..end) split into contiguous chunks across `threads` OS
// threads. threads <= 1 runs inline. Chunking is by index range, so
// independent writes stay deterministic.
void parallel_for(int threads, long begin, long end,
                  const std::function<void(long, long)>& fn);

}  // namespace qtar

#endif
