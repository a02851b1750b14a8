#pragma once

#include <numbers>

namespace mwb {

/// Speed of light in vacuum (m/s), exact.
inline constexpr double kSpeedOfLight = 299792458.0;

/// f = c0 k / 2pi
constexpr double wavevector_to_frequency(double k) {
    return kSpeedOfLight * k / (2.0 * std::numbers::pi);
}

constexpr double frequency_to_wavevector(double f) {
    return 2.0 * std::numbers::pi * f / kSpeedOfLight;
}

}  // namespace mwb
