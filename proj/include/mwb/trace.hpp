#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace mwb {

/// Antenna channels of an S-matrix element S_ba; a == b is reflection.
struct ChannelPair {
    int a = 1;
    int b = 2;
    [[nodiscard]] bool diagonal() const { return a == b; }
    friend bool operator==(const ChannelPair&, const ChannelPair&) = default;
};

/// Complex S-matrix samples on an ascending frequency (or energy) grid.
struct ComplexTrace {
    std::vector<double> frequencies;
    std::vector<std::complex<double>> values;
    ChannelPair pair;

    [[nodiscard]] std::size_t size() const { return frequencies.size(); }
};

/// Throws std::invalid_argument unless lengths match and the grid is strictly ascending.
void validate_trace(const ComplexTrace& trace);

}  // namespace mwb
