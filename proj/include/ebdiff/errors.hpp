#pragma once

#include <stdexcept>
#include <string>

// Error taxonomy shared by all modules. Everything derives from std::runtime_error
// (or a std:: logic error where that is the natural fit) so callers can catch
// coarsely; the distinct types exist because tests pin down which contract broke.
namespace ebdiff {

// Argument outside its mathematical domain (t not in [0,1], s > t, invalid pi, ...).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Caller violated a stated precondition (e.g. x0 contains mask tokens).
struct PreconditionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// x_t disagrees with x0 at an unmasked position; the pair cannot have arisen
// from the forward process.
struct InconsistentPairError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A model produced values violating its own contract (non-normalized row,
// non-finite energy where finiteness is required, ...).
struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Corpus or input file contents unusable (empty, bad UTF-8, out-of-vocab char).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Enumeration would exceed the hard oracle state cap.
struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad run configuration (unknown kind, missing file, contradictory flags).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training produced non-finite loss or parameters.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Sampler reached an invalid state (all candidate energies non-finite,
// residual masks on a grid not ending at zero, ...).
struct SamplerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ebdiff
