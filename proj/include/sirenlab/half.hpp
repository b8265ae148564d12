#pragma once

#include <cstdint>

namespace sirenlab {

inline constexpr double kHalfMax = 65504.0;

// IEEE 754 binary16 conversion, round-to-nearest-even directly from double
// (no intermediate float, so no double rounding). Finite values beyond the
// half range saturate to +-65504 and set `clamped`.
std::uint16_t double_to_half(double value, bool& clamped);
double half_to_double(std::uint16_t bits);

}  // namespace sirenlab
