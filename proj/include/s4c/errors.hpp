#pragma once

#include <stdexcept>
#include <string>

namespace s4c {

// Error taxonomy shared by all modules. The CLI maps these to exit codes:
// usage problems exit 1, IoError exits 2, everything else below exits 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError     : Error { using Error::Error; };  // dimension mismatch
struct ArgError       : Error { using Error::Error; };  // out-of-range argument
struct CapacityError  : Error { using Error::Error; };  // context window overflow
struct StructureError : Error { using Error::Error; };  // malformed tree / manifest
struct ModelError     : Error { using Error::Error; };  // bad backend state
struct IoError        : Error { using Error::Error; };  // file problems
struct NumericError   : Error { using Error::Error; };  // non-finite values
struct TrainError     : Error { using Error::Error; };  // diverged training run

} // namespace s4c
