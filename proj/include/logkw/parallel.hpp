#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Core>

namespace logkw {

/// Work is split into fixed-size chunks independent of the thread count, so
/// per-chunk partial results (and their in-order combination) are identical
/// between serial and threaded runs.
inline constexpr Eigen::Index kChunkSize = 4096;

inline Eigen::Index chunk_count(Eigen::Index n) { return (n + kChunkSize - 1) / kChunkSize; }

template <class Fn>
void for_each_chunk(Eigen::Index n, bool parallel, Fn&& fn) {
  const Eigen::Index chunks = chunk_count(n);
#if defined(_OPENMP)
#pragma omp parallel for schedule(static) if (parallel && chunks > 1)
  for (Eigen::Index c = 0; c < chunks; ++c) {
    const Eigen::Index begin = c * kChunkSize;
    const Eigen::Index end = std::min(n, begin + kChunkSize);
    fn(c, begin, end);
  }
#else
  (void)parallel;
  for (Eigen::Index c = 0; c < chunks; ++c) {
    const Eigen::Index begin = c * kChunkSize;
    const Eigen::Index end = std::min(n, begin + kChunkSize);
    fn(c, begin, end);
  }
#endif
}

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  void add(const CompensatedSum& other) noexcept {
    add(other.sum_);
    add(other.comp_);
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace logkw
