#include "sirenlab/half.hpp"

#include <bit>
#include <cfenv>
#include <cmath>

namespace sirenlab {

std::uint16_t double_to_half(double value, bool& clamped) {
    clamped = false;
    const auto bits = std::bit_cast<std::uint64_t>(value);
    const auto sign = static_cast<std::uint16_t>((bits >> 48) & 0x8000u);

    if (std::isnan(value)) return static_cast<std::uint16_t>(sign | 0x7e00u);
    const double magnitude = std::fabs(value);
    if (magnitude > kHalfMax) {
        clamped = true;
        return static_cast<std::uint16_t>(sign | 0x7bffu);
    }

    const int exponent = static_cast<int>((bits >> 52) & 0x7ff) - 1023;
    if (exponent < -14) {
        // Subnormal half: count of 2^-24 units. Scaling by a power of two is
        // exact, and nearbyint under FE_TONEAREST breaks ties to even.
        const double units = std::nearbyint(std::ldexp(magnitude, 24));
        return static_cast<std::uint16_t>(sign | static_cast<std::uint16_t>(units));
    }

    const std::uint64_t mantissa = bits & ((std::uint64_t{1} << 52) - 1);
    std::uint32_t half = static_cast<std::uint32_t>(exponent + 15) << 10;
    half |= static_cast<std::uint32_t>(mantissa >> 42);
    const std::uint64_t rest = mantissa & ((std::uint64_t{1} << 42) - 1);
    const std::uint64_t halfway = std::uint64_t{1} << 41;
    if (rest > halfway || (rest == halfway && (half & 1u))) ++half;  // carry may bump the exponent
    if ((half & 0x7c00u) == 0x7c00u) {
        // Only reachable for magnitudes in (65504, 65520), already excluded.
        clamped = true;
        half = 0x7bffu;
    }
    return static_cast<std::uint16_t>(sign | half);
}

double half_to_double(std::uint16_t bits) {
    const double sign = (bits & 0x8000u) ? -1.0 : 1.0;
    const int exponent = (bits >> 10) & 0x1f;
    const int mantissa = bits & 0x3ff;
    if (exponent == 0) return sign * std::ldexp(static_cast<double>(mantissa), -24);
    if (exponent == 31) return mantissa ? std::nan("") : sign * INFINITY;
    return sign * std::ldexp(static_cast<double>(mantissa | 0x400), exponent - 25);
}

}  // namespace sirenlab
