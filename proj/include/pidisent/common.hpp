#pragma once

#include <stdexcept>
#include <string>

namespace pidisent {

// Violated precondition or malformed input. CLI maps this to exit code 1.
struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Numerical failure (singular matrix, failed factorization, divergent
// quadrature). CLI maps this to exit code 2.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;
inline constexpr double kLog2PiE = 2.8378770664093454835606594728112;
inline constexpr double kTwoPi = 6.2831853071795864769252867665590;

// Entropy of a scalar standard-normal-like factor, 0.5 * log(2*pi*e).
// Used as the normalizer for continuous factors.
inline constexpr double kGaussianFactorEntropy = 0.5 * kLog2PiE;

}  // namespace pidisent
