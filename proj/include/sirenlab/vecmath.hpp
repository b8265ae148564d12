#pragma once

#include <cstddef>

namespace sirenlab {

// Vectorized elementwise sine/cosine over contiguous doubles (glibc libmvec,
// <= 4 ulp). Output may alias input.
void vec_sin(const double* x, double* out, std::size_t n);
void vec_sincos(const double* x, double* sin_out, double* cos_out, std::size_t n);

}  // namespace sirenlab
