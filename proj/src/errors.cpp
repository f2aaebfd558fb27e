#include "bandppp/errors.hpp"

namespace bandppp {

ConvergenceError::ConvergenceError(const std::string& what, double residual,
                                   std::size_t iterations)
    : NumericError(what + " (residual " + std::to_string(residual) + " after " +
                   std::to_string(iterations) + " iterations)"),
      residual_(residual),
      iterations_(iterations) {}

DegeneracyError::DegeneracyError(const std::string& what, std::size_t observation)
    : NumericError(what + " (observation " + std::to_string(observation) + ")"),
      observation_(observation) {}

FoldFailure::FoldFailure(const std::string& what, std::size_t fold)
    : NumericError("fold " + std::to_string(fold) + ": " + what), fold_(fold) {}

}  // namespace bandppp
