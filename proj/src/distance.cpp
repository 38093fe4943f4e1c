#include "cadbench/distance.hpp"

namespace cadbench {

namespace {

constexpr std::size_t kLanes = 8;

template <typename Left>
inline double squared_l2_impl(const Left* a, const float* b, std::size_t n) {
  double acc[kLanes] = {};
  std::size_t k = 0;
  for (; k + kLanes <= n; k += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) {
      const double d = static_cast<double>(a[k + l]) - static_cast<double>(b[k + l]);
      acc[l] += d * d;
    }
  }
  for (std::size_t l = 0; k < n; ++k, ++l) {
    const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
    acc[l] += d * d;
  }
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

}  // namespace

#if defined(__GNUC__) && defined(__x86_64__) && !defined(__clang__)
__attribute__((target_clones("avx2", "default")))
#endif
double squared_l2(const float* a, const float* b, std::size_t n) {
  return squared_l2_impl(a, b, n);
}

double squared_l2(const double* a, const float* b, std::size_t n) {
  return squared_l2_impl(a, b, n);
}

}  // namespace cadbench
