#pragma once

#include <stdexcept>
#include <string>

namespace clfa {

// Error taxonomy; the CLI maps these onto exit codes (config 2, data 3,
// numeric 4, argument/io -> config-or-data depending on context).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace clfa
