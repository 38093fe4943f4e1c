#pragma once

#include <cstddef>

namespace cadbench {

// Squared Euclidean distance between two float vectors, accumulated in
// double over eight fixed lanes. The lane layout fixes the summation order,
// so results are bit-identical regardless of which SIMD path is taken.
double squared_l2(const float* a, const float* b, std::size_t n);

// Same, with a double-precision left operand (used against pool means).
double squared_l2(const double* a, const float* b, std::size_t n);

}  // namespace cadbench
