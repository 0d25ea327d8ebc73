#pragma once

#include <stdexcept>
#include <string>

namespace diffseg {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Filesystem or stream failure. The CLI maps this to exit code 1.
class IoError : public Error {
public:
    using Error::Error;
};

// Input that is well-formed on disk but violates a contract (bad shapes,
// unnormalized maps, out-of-range parameters). The CLI maps this to exit code 2.
class ValidationError : public Error {
public:
    using Error::Error;
};

}  // namespace diffseg
