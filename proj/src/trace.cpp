#include "mwb/trace.hpp"

#include <stdexcept>

namespace mwb {

void validate_trace(const ComplexTrace& trace) {
    if (trace.frequencies.size() != trace.values.size()) {
        throw std::invalid_argument("trace: frequency and value counts differ");
    }
    for (std::size_t i = 1; i < trace.frequencies.size(); ++i) {
        if (!(trace.frequencies[i] > trace.frequencies[i - 1])) {
            throw std::invalid_argument("trace: frequency grid must be strictly ascending");
        }
    }
}

}  // namespace mwb
