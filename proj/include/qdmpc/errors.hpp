// Exception taxonomy for the qdmpc library.
//
// Every error thrown by the library derives from qdmpc::Error and carries a
// family tag so callers (notably the CLI) can map failures to stable exit
// codes without string matching.

#pragma once

#include <stdexcept>
#include <string>

namespace qdmpc {

enum class ErrorFamily {
    config,       // bad input files, bad arguments, schema violations
    structure,    // dimension mismatches, graph defects, layout errors
    numeric,      // convexity/controllability/feasibility failures
    budget,       // iteration or bit budgets exhausted
    codec,        // quantizer lattice / state mismatches
    io,           // filesystem failures
};

class Error : public std::runtime_error {
public:
    Error(ErrorFamily family, const std::string& what)
        : std::runtime_error(what), family_(family) {}
    ErrorFamily family() const noexcept { return family_; }

private:
    ErrorFamily family_;
};

#define QDMPC_DEFINE_ERROR(NAME, FAMILY)                    \
    class NAME : public Error {                             \
    public:                                                 \
        explicit NAME(const std::string& what)              \
            : Error(ErrorFamily::FAMILY, #NAME ": " + what) {} \
    }

QDMPC_DEFINE_ERROR(ConfigError, config);
QDMPC_DEFINE_ERROR(IoError, io);

QDMPC_DEFINE_ERROR(DimensionMismatch, structure);
QDMPC_DEFINE_ERROR(DisconnectedGraph, structure);
QDMPC_DEFINE_ERROR(LayoutError, structure);

QDMPC_DEFINE_ERROR(NotStronglyConvex, numeric);
QDMPC_DEFINE_ERROR(EmptyConstraintSet, numeric);
QDMPC_DEFINE_ERROR(NonFiniteInput, numeric);
QDMPC_DEFINE_ERROR(NonFiniteState, numeric);
QDMPC_DEFINE_ERROR(KinematicSingularity, numeric);
QDMPC_DEFINE_ERROR(NotControllable, numeric);
QDMPC_DEFINE_ERROR(RiccatiDivergence, numeric);
QDMPC_DEFINE_ERROR(DomainError, numeric);
QDMPC_DEFINE_ERROR(Infeasible, numeric);
QDMPC_DEFINE_ERROR(NoFeasibleDesign, numeric);
QDMPC_DEFINE_ERROR(OracleFailure, numeric);
QDMPC_DEFINE_ERROR(GenerationFailure, numeric);

QDMPC_DEFINE_ERROR(ProjectionBudgetExceeded, budget);
QDMPC_DEFINE_ERROR(BudgetViolation, budget);
QDMPC_DEFINE_ERROR(BudgetExceeded, budget);

QDMPC_DEFINE_ERROR(LatticeMismatch, codec);
QDMPC_DEFINE_ERROR(StateMismatch, codec);

#undef QDMPC_DEFINE_ERROR

/// Stable process exit code for an error family (documented in the CLI).
inline int exit_code(ErrorFamily f) {
    switch (f) {
        case ErrorFamily::config: return 2;
        case ErrorFamily::numeric: return 3;
        case ErrorFamily::budget: return 4;
        case ErrorFamily::codec: return 5;
        case ErrorFamily::structure: return 6;
        case ErrorFamily::io: return 7;
    }
    return 1;
}

}  // namespace qdmpc
