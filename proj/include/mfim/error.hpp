#pragma once

#include <stdexcept>
#include <string>

namespace mfim {

/// Malformed input: wrong lengths, bad enum values, infeasible parameters.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Site or qubit index outside the chain.
class OutOfRange : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Operation refused because the dense representation would not fit.
class SizeRefused : public std::length_error {
public:
    using std::length_error::length_error;
};

/// Operation not defined for the given model variant.
class Unsupported : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// A measurement plan is missing results needed for reconstruction.
class IncompletePlan : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Power-law fit could not be performed on the requested window.
class FitRefused : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw InvalidArgument(msg);
}

// Qubits are 0-based bit positions; sites are 1-based chain positions.
inline void require_qubit(int qubit, int num_qubits) {
    if (qubit < 0 || qubit >= num_qubits)
        throw OutOfRange("qubit " + std::to_string(qubit) + " outside [0, " +
                         std::to_string(num_qubits) + ")");
}

inline void require_site(int site, int num_sites) {
    if (site < 1 || site > num_sites)
        throw OutOfRange("site " + std::to_string(site) + " outside [1, " +
                         std::to_string(num_sites) + "]");
}

}  // namespace detail
}  // namespace mfim
