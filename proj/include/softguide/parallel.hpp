#pragma once

#include <cstddef>
#include <cmath>
#include <functional>

namespace softguide {

// Process-wide worker count used by the parallel loops. Results never depend on it:
// every loop writes into per-index slots and reductions run afterwards in index order.
void set_thread_count(int n);
int thread_count();

// Calls body(i) for i in [begin, end) using the configured worker count.
// Indices are handed out in contiguous static blocks.
void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& body);

// Neumaier-compensated running sum.
class CompensatedSum {
public:
    void add(double x) {
        double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            c_ += (sum_ - t) + x;
        else
            c_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + c_; }

private:
    double sum_ = 0.0;
    double c_ = 0.0;
};

}  // namespace softguide
