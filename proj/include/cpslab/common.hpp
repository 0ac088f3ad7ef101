#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace cpslab {

// Error taxonomy. The CLI maps each family onto an exit code.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Factorization failures, non-convergence, ladder overflow.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A certified bound (sandwich, moment condition, superreplication) was broken.
class InvariantViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed configuration or artifact.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Worker count for the OpenMP kernels. `workers == 1` runs the plain loop.
/// Every kernel derives randomness per path and reduces in path order, so the
/// result never depends on this value.
struct Exec {
    int workers = 1;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Independent generator for stream `stream` of master seed `seed`.
std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream);

/// 64-bit FNV-1a, used for artifact and config hashes.
std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

}  // namespace cpslab
