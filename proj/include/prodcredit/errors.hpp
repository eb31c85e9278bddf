#pragma once

#include <stdexcept>
#include <string>

namespace prodcredit {

// Error taxonomy shared by all modules. The CLI maps each class onto a
// distinct exit code (docs/formats/exit_codes.md).

// Bad inputs: malformed scenarios, out-of-range parameters, unknown keys.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite coefficients or functional values during path generation.
struct SimulationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Mathematical precondition failures: non-positive prices, zero expected
// production increments, non-positive belief means.
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Illegal state-machine transition (default resolution, collapsed banks).
struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Private-investor continuation attempted without authority approval.
struct ApprovalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A realized path violates its contract (e.g. decreasing cumulative output).
struct ContractViolationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Negative implied squared diffusion: the supplied drift admits no real
// volatility on part of the grid.
struct InfeasibilityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Divergent jump integral: the first martingale-measure condition fails.
struct IntegrabilityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Lending refused: the post-issue credit/deposit ratio would breach the cap.
struct RefusalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Funds with the wrong provenance tag for the requested use.
struct ProvenanceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File / CSV parse failures.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace prodcredit
