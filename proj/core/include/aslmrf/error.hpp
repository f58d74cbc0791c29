#pragma once

#include <stdexcept>
#include <string>

namespace aslmrf {

/// Bad user-supplied input: malformed config, unreadable file, violated precondition.
class InputError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// A computation produced something unusable (divergence, singular system, non-finite values).
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace aslmrf
