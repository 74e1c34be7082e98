#pragma once

#include <stdexcept>
#include <string>

namespace mfgp {

/// A requested derivative order exceeds what a kernel family supports.
class CapabilityError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Factorization or conditioning failure that survived nugget escalation.
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid solver or experiment settings (stability limits, unsupported combinations).
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// No optimizer start produced a finite objective.
class FitError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace mfgp
