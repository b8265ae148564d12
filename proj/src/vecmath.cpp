// Built with -ffast-math -fopenmp-simd so GCC can call the libmvec SIMD
// variants of sin/cos. Keep anything that needs IEEE semantics out of here.
// cos_out must not alias x; sin_out may.
#include "sirenlab/vecmath.hpp"

#include <cmath>

namespace sirenlab {

void vec_sin(const double* x, double* out, std::size_t n) {
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) out[i] = std::sin(x[i]);
}

void vec_sincos(const double* x, double* sin_out, double* cos_out, std::size_t n) {
    // Two passes: a fused loop gets folded into scalar sincos() calls.
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) cos_out[i] = std::cos(x[i]);
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) sin_out[i] = std::sin(x[i]);
}

}  // namespace sirenlab
